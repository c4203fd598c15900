#include "eigencl/encoder.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace eigencl {

void EncoderConfig::validate() const {
    if (input_dim < 1 || embed_dim < 1) throw config_error("encoder dims must be >= 1");
    for (std::size_t h : hidden_dims) {
        if (h < 1) throw config_error("hidden layer width must be >= 1");
    }
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) {
        throw config_error("leaky_slope must lie in (0, 1)");
    }
    if (!(bn_epsilon > 0.0)) throw config_error("bn_epsilon must be positive");
}

std::vector<std::size_t> EncoderConfig::layer_widths() const {
    std::vector<std::size_t> w;
    w.push_back(input_dim);
    w.insert(w.end(), hidden_dims.begin(), hidden_dims.end());
    w.push_back(embed_dim);
    return w;
}

std::size_t feature_dim(std::size_t series_length, bool use_differences) {
    return use_differences ? 2 * series_length - 1 : series_length;
}

std::vector<double> build_feature_row(const std::vector<double>& values, bool use_differences) {
    std::vector<double> f = values;
    if (use_differences) {
        for (std::size_t t = 1; t < values.size(); ++t) f.push_back(values[t] - values[t - 1]);
    }
    return f;
}

Matrix build_features(const Dataset& dataset, bool use_differences) {
    const std::size_t n = dataset.size();
    const std::size_t t = dataset.dates().size();
    Matrix x(n, feature_dim(t, use_differences));
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = build_feature_row(dataset.series[i].values, use_differences);
        std::copy(row.begin(), row.end(), x.row(i).begin());
    }
    return x;
}

std::size_t EncoderParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) {
        n += l.weight.data().size() + l.bias.size() + l.bn_scale.size() + l.bn_shift.size();
    }
    return n;
}

bool same_parameters(const EncoderParams& a, const EncoderParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        if (!(a.layers[l] == b.layers[l])) return false;
    }
    return true;
}

double EncoderGrads::squared_norm() const {
    double s = 0.0;
    for (const auto& l : layers) {
        for (double v : l.weight.data()) s += v * v;
        for (double v : l.bias) s += v * v;
        for (double v : l.bn_scale) s += v * v;
        for (double v : l.bn_shift) s += v * v;
    }
    return s;
}

void EmbeddingBatch::validate() const {
    if (!patch_ids.empty() && patch_ids.size() != z.rows()) {
        throw contract_error("embedding ids do not match row count");
    }
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const double n = norm2(z.row(i));
        if (std::abs(n - 1.0) > 1e-6) {
            throw contract_error("embedding row " + std::to_string(i) + " is not unit norm");
        }
    }
}

EncoderParams init_encoder(const EncoderConfig& config) {
    config.validate();
    EncoderParams params;
    params.config = config;
    Rng rng(config.seed);
    const auto widths = config.layer_widths();
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const std::size_t fan_in = widths[l];
        const std::size_t fan_out = widths[l + 1];
        LayerParams p;
        p.weight = Matrix(fan_in, fan_out);
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& w : p.weight.data()) w = rng.uniform(-limit, limit);
        p.bias.assign(fan_out, 0.0);
        p.bn_scale.assign(fan_out, 1.0);
        p.bn_shift.assign(fan_out, 0.0);
        p.run_mean.assign(fan_out, 0.0);
        p.run_var.assign(fan_out, 1.0);
        params.layers.push_back(std::move(p));
    }
    return params;
}

namespace {

constexpr double kBnMomentum = 0.1;

}  // namespace

ForwardResult forward(EncoderParams& params, const Matrix& inputs, Mode mode) {
    const std::size_t batch = inputs.rows();
    if (inputs.cols() != params.config.input_dim) {
        throw config_error("encoder expects input_dim " +
                           std::to_string(params.config.input_dim) + ", got " +
                           std::to_string(inputs.cols()));
    }
    if (mode == Mode::Train && batch < 2) {
        throw contract_error("train-mode forward needs batch size >= 2 for batch statistics");
    }
    if (batch == 0) throw contract_error("empty batch");

    ForwardResult out;
    out.cache.batch = batch;
    Matrix x = inputs;
    const double slope = params.config.leaky_slope;
    const double eps = params.config.bn_epsilon;

    for (auto& layer : params.layers) {
        const std::size_t fan_out = layer.bias.size();
        LayerCache cache;
        cache.input = x;

        Matrix z(batch, fan_out);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t j = 0; j < fan_out; ++j) {
                double acc = layer.bias[j];
                const auto xr = x.row(b);
                for (std::size_t i = 0; i < xr.size(); ++i) acc += xr[i] * layer.weight(i, j);
                z(b, j) = acc;
            }
        }

        cache.x_hat = Matrix(batch, fan_out);
        cache.bn_out = Matrix(batch, fan_out);
        cache.inv_std.assign(fan_out, 0.0);
        for (std::size_t j = 0; j < fan_out; ++j) {
            double mean, var;
            if (mode == Mode::Train) {
                mean = 0.0;
                for (std::size_t b = 0; b < batch; ++b) mean += z(b, j);
                mean /= static_cast<double>(batch);
                var = 0.0;
                for (std::size_t b = 0; b < batch; ++b) {
                    const double d = z(b, j) - mean;
                    var += d * d;
                }
                var /= static_cast<double>(batch);
                const double unbiased =
                    batch > 1 ? var * static_cast<double>(batch) / static_cast<double>(batch - 1)
                              : var;
                layer.run_mean[j] = (1.0 - kBnMomentum) * layer.run_mean[j] + kBnMomentum * mean;
                layer.run_var[j] = (1.0 - kBnMomentum) * layer.run_var[j] + kBnMomentum * unbiased;
            } else {
                mean = layer.run_mean[j];
                var = layer.run_var[j];
            }
            const double inv_std = 1.0 / std::sqrt(var + eps);
            cache.inv_std[j] = inv_std;
            for (std::size_t b = 0; b < batch; ++b) {
                const double xh = (z(b, j) - mean) * inv_std;
                cache.x_hat(b, j) = xh;
                cache.bn_out(b, j) = layer.bn_scale[j] * xh + layer.bn_shift[j];
            }
        }

        x = Matrix(batch, fan_out);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t j = 0; j < fan_out; ++j) {
                const double a = cache.bn_out(b, j);
                x(b, j) = a > 0.0 ? a : slope * a;
            }
        }
        out.cache.layers.push_back(std::move(cache));
    }

    out.cache.pre_norm = x;
    out.cache.norms.assign(batch, 0.0);
    out.embeddings = Matrix(batch, params.config.embed_dim);
    for (std::size_t b = 0; b < batch; ++b) {
        const double n = std::max(norm2(x.row(b)), 1e-12);
        out.cache.norms[b] = n;
        for (std::size_t j = 0; j < params.config.embed_dim; ++j) {
            out.embeddings(b, j) = x(b, j) / n;
        }
    }
    return out;
}

Matrix forward_eval(const EncoderParams& params, const Matrix& inputs) {
    EncoderParams& mut = const_cast<EncoderParams&>(params);
    // Eval mode never touches running statistics, so the cast is safe.
    return forward(mut, inputs, Mode::Eval).embeddings;
}

EncoderGrads zero_grads(const EncoderParams& params) {
    EncoderGrads g;
    for (const auto& l : params.layers) {
        LayerGrads lg;
        lg.weight = Matrix(l.weight.rows(), l.weight.cols());
        lg.bias.assign(l.bias.size(), 0.0);
        lg.bn_scale.assign(l.bn_scale.size(), 0.0);
        lg.bn_shift.assign(l.bn_shift.size(), 0.0);
        g.layers.push_back(std::move(lg));
    }
    return g;
}

EncoderGrads backward(const EncoderParams& params, const ForwardCache& cache,
                      const Matrix& grad_embeddings) {
    if (cache.layers.size() != params.layers.size()) {
        throw contract_error("forward cache does not match encoder parameters");
    }
    const std::size_t batch = cache.batch;
    if (grad_embeddings.rows() != batch || grad_embeddings.cols() != params.config.embed_dim) {
        throw contract_error("gradient shape does not match cached forward pass");
    }
    const double slope = params.config.leaky_slope;

    EncoderGrads grads = zero_grads(params);

    // L2 normalization: dh = (dz - z * (z . dz)) / ||h||
    Matrix grad(batch, params.config.embed_dim);
    for (std::size_t b = 0; b < batch; ++b) {
        const double n = cache.norms[b];
        double zdot = 0.0;
        for (std::size_t j = 0; j < grad.cols(); ++j) {
            zdot += (cache.pre_norm(b, j) / n) * grad_embeddings(b, j);
        }
        for (std::size_t j = 0; j < grad.cols(); ++j) {
            const double zj = cache.pre_norm(b, j) / n;
            grad(b, j) = (grad_embeddings(b, j) - zj * zdot) / n;
        }
    }

    for (std::size_t l = params.layers.size(); l-- > 0;) {
        const auto& layer = params.layers[l];
        const auto& c = cache.layers[l];
        auto& g = grads.layers[l];
        const std::size_t fan_out = layer.bias.size();
        const std::size_t fan_in = layer.weight.rows();

        // LeakyReLU
        Matrix d_bn(batch, fan_out);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t j = 0; j < fan_out; ++j) {
                d_bn(b, j) = grad(b, j) * (c.bn_out(b, j) > 0.0 ? 1.0 : slope);
            }
        }

        // Batch norm (batch statistics): per-feature reduction form
        Matrix d_z(batch, fan_out);
        for (std::size_t j = 0; j < fan_out; ++j) {
            double sum_d = 0.0, sum_dx = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                sum_d += d_bn(b, j);
                sum_dx += d_bn(b, j) * c.x_hat(b, j);
            }
            g.bn_shift[j] += sum_d;
            g.bn_scale[j] += sum_dx;
            const double inv_b = 1.0 / static_cast<double>(batch);
            const double scale = layer.bn_scale[j] * c.inv_std[j];
            for (std::size_t b = 0; b < batch; ++b) {
                d_z(b, j) = scale * (d_bn(b, j) - sum_d * inv_b - c.x_hat(b, j) * sum_dx * inv_b);
            }
        }

        // Linear
        for (std::size_t b = 0; b < batch; ++b) {
            const auto xr = c.input.row(b);
            for (std::size_t j = 0; j < fan_out; ++j) {
                const double dz = d_z(b, j);
                g.bias[j] += dz;
                for (std::size_t i = 0; i < fan_in; ++i) {
                    g.weight(i, j) += xr[i] * dz;
                }
            }
        }
        if (l > 0) {
            Matrix d_x(batch, fan_in);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t i = 0; i < fan_in; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < fan_out; ++j) {
                        acc += d_z(b, j) * layer.weight(i, j);
                    }
                    d_x(b, i) = acc;
                }
            }
            grad = std::move(d_x);
        }
    }
    return grads;
}

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
    }
    return rows;
}

Matrix matrix_from_json(const json& j) {
    const std::size_t rows = j.size();
    if (rows == 0) return {};
    const std::size_t cols = j.at(0).size();
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        const auto& row = j.at(i);
        if (row.size() != cols) throw parse_error("ragged matrix in checkpoint");
        for (std::size_t c = 0; c < cols; ++c) m(i, c) = row.at(c).get<double>();
    }
    return m;
}

}  // namespace

void save_checkpoint(const EncoderParams& params, const std::string& path) {
    json j;
    j["format"] = "eigencl-checkpoint";
    j["version"] = 1;
    json cfg;
    cfg["input_dim"] = params.config.input_dim;
    cfg["hidden_dims"] = params.config.hidden_dims;
    cfg["embed_dim"] = params.config.embed_dim;
    cfg["leaky_slope"] = params.config.leaky_slope;
    cfg["bn_epsilon"] = params.config.bn_epsilon;
    cfg["seed"] = params.config.seed;
    cfg["use_differences"] = params.config.use_differences;
    j["config"] = cfg;
    json layers = json::array();
    for (const auto& l : params.layers) {
        json jl;
        jl["weight"] = matrix_to_json(l.weight);
        jl["bias"] = l.bias;
        jl["bn_scale"] = l.bn_scale;
        jl["bn_shift"] = l.bn_shift;
        jl["run_mean"] = l.run_mean;
        jl["run_var"] = l.run_var;
        layers.push_back(std::move(jl));
    }
    j["layers"] = std::move(layers);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open checkpoint '" + path + "' for writing");
    out << j.dump(2) << "\n";
    if (!out) throw io_error("write failed for checkpoint '" + path + "'");
}

EncoderParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw parse_error("checkpoint '" + path + "': " + e.what());
    }
    if (j.value("format", "") != "eigencl-checkpoint") {
        throw parse_error("checkpoint '" + path + "' has unknown format tag");
    }
    EncoderParams params;
    const auto& cfg = j.at("config");
    params.config.input_dim = cfg.at("input_dim").get<std::size_t>();
    params.config.hidden_dims = cfg.at("hidden_dims").get<std::vector<std::size_t>>();
    params.config.embed_dim = cfg.at("embed_dim").get<std::size_t>();
    params.config.leaky_slope = cfg.at("leaky_slope").get<double>();
    params.config.bn_epsilon = cfg.at("bn_epsilon").get<double>();
    params.config.seed = cfg.at("seed").get<std::uint64_t>();
    params.config.use_differences = cfg.at("use_differences").get<bool>();
    for (const auto& jl : j.at("layers")) {
        LayerParams l;
        l.weight = matrix_from_json(jl.at("weight"));
        l.bias = jl.at("bias").get<std::vector<double>>();
        l.bn_scale = jl.at("bn_scale").get<std::vector<double>>();
        l.bn_shift = jl.at("bn_shift").get<std::vector<double>>();
        l.run_mean = jl.at("run_mean").get<std::vector<double>>();
        l.run_var = jl.at("run_var").get<std::vector<double>>();
        params.layers.push_back(std::move(l));
    }
    params.config.validate();
    return params;
}

}  // namespace eigencl
