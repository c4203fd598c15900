#include "eigencl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace eigencl {

const char* loss_kind_name(LossKind k) {
    switch (k) {
        case LossKind::EigenCL: return "eigencl";
        case LossKind::CosineAblation: return "cosine-ablation";
        case LossKind::NtXent: return "ntxent";
    }
    return "?";
}

LossKind loss_kind_from_name(const std::string& name) {
    for (LossKind k : {LossKind::EigenCL, LossKind::CosineAblation, LossKind::NtXent}) {
        if (name == loss_kind_name(k)) return k;
    }
    throw config_error("unknown loss kind '" + name + "'");
}

const char* optimizer_name(OptimizerKind k) {
    return k == OptimizerKind::Sgd ? "sgd" : "adam";
}

OptimizerKind optimizer_from_name(const std::string& name) {
    if (name == "sgd") return OptimizerKind::Sgd;
    if (name == "adam") return OptimizerKind::Adam;
    throw config_error("unknown optimizer '" + name + "'");
}

void TrainConfig::validate() const {
    if (batch_size < 2) throw config_error("batch_size must be >= 2");
    if (!(learning_rate >= 0.0)) throw config_error("learning_rate must be nonnegative");
    hyper.validate();
    if (augment_jitter_sd < 0.0 || augment_scale_pct < 0.0) {
        throw config_error("augmentation parameters must be nonnegative");
    }
}

namespace {

class Optimizer {
  public:
    Optimizer(OptimizerKind kind, const EncoderParams& params)
        : kind_(kind), m_(zero_grads(params)), v_(zero_grads(params)) {}

    void step(EncoderParams& params, EncoderGrads& grads, double lr) {
        if (kind_ == OptimizerKind::Sgd) {
            for_each_parameter(params, grads, [&](double& p, double& g) { p -= lr * g; });
            return;
        }
        ++t_;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        std::size_t cursor = 0;
        // m_ and v_ mirror the parameter layout, walked in the same order
        auto mflat = flatten(m_);
        auto vflat = flatten(v_);
        for_each_parameter(params, grads, [&](double& p, double& g) {
            double& m = *mflat[cursor];
            double& v = *vflat[cursor];
            ++cursor;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            p -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
        });
    }

  private:
    static std::vector<double*> flatten(EncoderGrads& g) {
        std::vector<double*> out;
        for (auto& l : g.layers) {
            for (double& x : l.weight.data()) out.push_back(&x);
            for (double& x : l.bias) out.push_back(&x);
            for (double& x : l.bn_scale) out.push_back(&x);
            for (double& x : l.bn_shift) out.push_back(&x);
        }
        return out;
    }

    OptimizerKind kind_;
    EncoderGrads m_;
    EncoderGrads v_;
    long t_ = 0;
};

Matrix gather_rows(const Matrix& x, std::span<const std::size_t> idx) {
    Matrix out(idx.size(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy(x.row(idx[i]).begin(), x.row(idx[i]).end(), out.row(i).begin());
    }
    return out;
}

}  // namespace

Matrix ablation_affinity(const Matrix& raw_series) {
    const std::size_t b = raw_series.rows();
    Matrix s(b, b);
    std::vector<double> norms(b);
    for (std::size_t i = 0; i < b; ++i) norms[i] = norm2(raw_series.row(i));
    for (std::size_t i = 0; i < b; ++i) {
        s(i, i) = 1.0;
        for (std::size_t j = i + 1; j < b; ++j) {
            double cos = 0.0;
            if (norms[i] > 0.0 && norms[j] > 0.0) {
                cos = dot(raw_series.row(i), raw_series.row(j)) / (norms[i] * norms[j]);
            }
            const double v = 0.5 * (1.0 + cos);
            s(i, j) = v;
            s(j, i) = v;
        }
    }
    return s;
}

TrainResult train(const Dataset& dataset, const StressWeights& weights,
                  const EncoderConfig& encoder_config, const TrainConfig& train_config) {
    dataset.validate();
    train_config.validate();
    encoder_config.validate();
    const std::size_t n = dataset.size();
    if (weights.w.size() != n) throw contract_error("weights length != dataset size");
    if (train_config.batch_size > n) {
        throw config_error("batch_size " + std::to_string(train_config.batch_size) +
                           " exceeds dataset size " + std::to_string(n));
    }

    const Matrix features = build_features(dataset, encoder_config.use_differences);
    if (features.cols() != encoder_config.input_dim) {
        throw config_error("encoder input_dim " + std::to_string(encoder_config.input_dim) +
                           " does not match feature dimension " + std::to_string(features.cols()));
    }
    Matrix raw;  // raw series rows, used by the cosine-ablation affinity
    if (train_config.loss_kind == LossKind::CosineAblation) {
        raw = build_features(dataset, false);
    }

    TrainResult out;
    out.params = init_encoder(encoder_config);
    EncoderParams last_good = out.params;
    Optimizer opt(train_config.optimizer, out.params);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    std::size_t flat_epochs = 0;
    double best_loss = std::numeric_limits<double>::infinity();

    for (std::size_t epoch = 0; epoch < train_config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng shuffle_rng(derive_seed(train_config.seed, 0x9000 + epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        double gnorm_sum = 0.0;
        std::size_t batches = 0;

        for (std::size_t begin = 0; begin < n; begin += train_config.batch_size) {
            const std::size_t end = std::min(begin + train_config.batch_size, n);
            if (end - begin < 2) continue;  // batch norm needs >= 2 samples
            const std::span<const std::size_t> idx(order.data() + begin, end - begin);
            const std::size_t b = idx.size();

            double batch_loss = 0.0;
            EncoderGrads grads;

            if (train_config.loss_kind == LossKind::NtXent) {
                Rng aug_rng(derive_seed(train_config.seed,
                                        0xA000 + epoch * 100000 + begin));
                const std::size_t t = dataset.dates().size();
                Matrix views(2 * b, features.cols());
                for (int view = 0; view < 2; ++view) {
                    for (std::size_t i = 0; i < b; ++i) {
                        const auto& vals = dataset.series[idx[i]].values;
                        std::vector<double> v(vals);
                        const double scale = aug_rng.uniform(1.0 - train_config.augment_scale_pct,
                                                             1.0 + train_config.augment_scale_pct);
                        for (std::size_t tt = 0; tt < t; ++tt) {
                            v[tt] = std::clamp(v[tt] * scale +
                                                   train_config.augment_jitter_sd * aug_rng.gaussian(),
                                               -1.0, 1.0);
                        }
                        const auto row = build_feature_row(v, encoder_config.use_differences);
                        std::copy(row.begin(), row.end(),
                                  views.row(static_cast<std::size_t>(view) * b + i).begin());
                    }
                }
                ForwardResult fwd = forward(out.params, views, Mode::Train);
                Matrix za(b, encoder_config.embed_dim), zb(b, encoder_config.embed_dim);
                for (std::size_t i = 0; i < b; ++i) {
                    std::copy(fwd.embeddings.row(i).begin(), fwd.embeddings.row(i).end(),
                              za.row(i).begin());
                    std::copy(fwd.embeddings.row(b + i).begin(), fwd.embeddings.row(b + i).end(),
                              zb.row(i).begin());
                }
                NtxentResult res = ntxent_loss(za, zb, train_config.hyper.tau);
                batch_loss = res.loss;
                Matrix grad_z(2 * b, encoder_config.embed_dim);
                for (std::size_t i = 0; i < b; ++i) {
                    std::copy(res.grad_a.row(i).begin(), res.grad_a.row(i).end(),
                              grad_z.row(i).begin());
                    std::copy(res.grad_b.row(i).begin(), res.grad_b.row(i).end(),
                              grad_z.row(b + i).begin());
                }
                grads = backward(out.params, fwd.cache, grad_z);
            } else {
                const Matrix batch_x = gather_rows(features, idx);
                Matrix S;
                if (train_config.loss_kind == LossKind::EigenCL) {
                    std::vector<double> w_batch(b);
                    for (std::size_t i = 0; i < b; ++i) w_batch[i] = weights.w[idx[i]];
                    S = stress_affinity(normalize_weights(w_batch), train_config.hyper.sigma).S;
                } else {
                    S = ablation_affinity(gather_rows(raw, idx));
                }
                ForwardResult fwd = forward(out.params, batch_x, Mode::Train);
                LossResult res = weighted_contrastive_loss(fwd.embeddings, S, train_config.hyper);
                batch_loss = res.loss;
                grads = backward(out.params, fwd.cache, res.grad);
            }

            if (!std::isfinite(batch_loss)) {
                if (!train_config.abort_checkpoint_path.empty()) {
                    save_checkpoint(last_good, train_config.abort_checkpoint_path);
                }
                throw numeric_error(
                    "training loss is not finite at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(batches) +
                    (train_config.abort_checkpoint_path.empty()
                         ? std::string()
                         : "; last-good checkpoint written to " +
                               train_config.abort_checkpoint_path));
            }

            gnorm_sum += std::sqrt(grads.squared_norm());
            loss_sum += batch_loss;
            ++batches;
            opt.step(out.params, grads, train_config.learning_rate);
        }

        const double epoch_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
        const double epoch_gnorm = batches > 0 ? gnorm_sum / static_cast<double>(batches) : 0.0;
        const auto t1 = std::chrono::steady_clock::now();
        out.history.mean_loss.push_back(epoch_loss);
        out.history.grad_norm.push_back(epoch_gnorm);
        out.history.seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
        last_good = out.params;

        if (best_loss - epoch_loss < train_config.early_stop_min_delta) {
            ++flat_epochs;
        } else {
            flat_epochs = 0;
        }
        best_loss = std::min(best_loss, epoch_loss);
        if (train_config.early_stop_patience > 0 &&
            flat_epochs >= train_config.early_stop_patience) {
            break;
        }
    }
    return out;
}

EmbeddingBatch embed_dataset(const EncoderParams& params, const Dataset& dataset) {
    dataset.validate();
    const Matrix features = build_features(dataset, params.config.use_differences);
    if (features.cols() != params.config.input_dim) {
        throw config_error("checkpoint expects input_dim " +
                           std::to_string(params.config.input_dim) +
                           " but dataset features have dimension " +
                           std::to_string(features.cols()));
    }
    EmbeddingBatch out;
    out.z = Matrix(dataset.size(), params.config.embed_dim);
    const std::size_t chunk = 512;
    for (std::size_t begin = 0; begin < dataset.size(); begin += chunk) {
        const std::size_t end = std::min(begin + chunk, dataset.size());
        Matrix block(end - begin, features.cols());
        for (std::size_t i = begin; i < end; ++i) {
            std::copy(features.row(i).begin(), features.row(i).end(),
                      block.row(i - begin).begin());
        }
        const Matrix z = forward_eval(params, block);
        for (std::size_t i = begin; i < end; ++i) {
            std::copy(z.row(i - begin).begin(), z.row(i - begin).end(), out.z.row(i).begin());
        }
    }
    out.patch_ids.reserve(dataset.size());
    for (const auto& s : dataset.series) out.patch_ids.push_back(s.patch_id);
    return out;
}

const char* selection_metric_name(SelectionMetric m) {
    switch (m) {
        case SelectionMetric::Silhouette: return "silhouette";
        case SelectionMetric::Dbi: return "dbi";
        case SelectionMetric::Chi: return "chi";
        case SelectionMetric::Composite: return "composite";
    }
    return "?";
}

SelectionMetric selection_metric_from_name(const std::string& name) {
    for (SelectionMetric m : {SelectionMetric::Silhouette, SelectionMetric::Dbi,
                              SelectionMetric::Chi, SelectionMetric::Composite}) {
        if (name == selection_metric_name(m)) return m;
    }
    throw config_error("unknown selection metric '" + name + "'");
}

void GridSpec::validate() const {
    for (const auto* list : {&lambdas, &taus, &sigmas, &margins}) {
        if (list->empty()) throw config_error("grid lists must be nonempty");
    }
    for (double v : lambdas)
        if (!(v > 0.0)) throw config_error("grid lambda values must be positive");
    for (double v : taus)
        if (!(v > 0.0)) throw config_error("grid tau values must be positive");
    for (double v : sigmas)
        if (!(v > 0.0)) throw config_error("grid sigma values must be positive");
    for (double v : margins)
        if (!(v >= 0.0 && v < 1.0)) throw config_error("grid margins must lie in [0,1)");
}

GridResult grid_search(const Dataset& dataset, const StressWeights& weights,
                       const GridSpec& grid, const EncoderConfig& encoder_config,
                       const TrainConfig& base_config, std::size_t cluster_k) {
    grid.validate();
    dataset.validate();
    const std::size_t n = dataset.size();
    if (weights.w.size() != n) throw contract_error("weights length != dataset size");

    // fixed 70/30 split shared by every cell
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(derive_seed(base_config.seed, 0x5117));
    split_rng.shuffle(order);
    const std::size_t n_train = std::max<std::size_t>(2, (n * 7) / 10);
    std::vector<std::size_t> train_idx(order.begin(), order.begin() + n_train);
    std::vector<std::size_t> eval_idx(order.begin() + n_train, order.end());
    if (eval_idx.size() < cluster_k) {
        throw config_error("holdout split too small to cluster into " +
                           std::to_string(cluster_k) + " groups");
    }

    Dataset train_ds, eval_ds;
    StressWeights train_w;
    train_w.source_component = weights.source_component;
    for (std::size_t i : train_idx) {
        train_ds.series.push_back(dataset.series[i]);
        train_w.w.push_back(weights.w[i]);
    }
    for (std::size_t i : eval_idx) eval_ds.series.push_back(dataset.series[i]);

    GridResult out;
    out.selection = grid.selection;

    std::size_t cell_index = 0;
    for (double lambda : grid.lambdas) {
        for (double tau : grid.taus) {
            for (double sigma : grid.sigmas) {
                for (double margin : grid.margins) {
                    GridCell cell;
                    cell.hyper = {lambda, tau, sigma, margin};
                    TrainConfig cfg = base_config;
                    cfg.hyper = cell.hyper;
                    cfg.seed = derive_seed(base_config.seed, 0xC311 + cell_index);
                    cfg.batch_size = std::min(cfg.batch_size, train_ds.size());
                    try {
                        TrainResult res = train(train_ds, train_w, encoder_config, cfg);
                        const EmbeddingBatch emb = embed_dataset(res.params, eval_ds);
                        const ClusterModel cm =
                            kmeans(emb.z, cluster_k, derive_seed(cfg.seed, 0x43));
                        cell.silhouette = silhouette(emb.z, cm.labels);
                        cell.davies_bouldin = davies_bouldin(emb.z, cm.labels);
                        cell.calinski_harabasz = calinski_harabasz(emb.z, cm.labels);
                        cell.final_loss =
                            res.history.mean_loss.empty() ? 0.0 : res.history.mean_loss.back();
                        cell.ok = true;
                    } catch (const std::exception& e) {
                        cell.ok = false;
                        cell.error = e.what();
                    }
                    out.ranked.push_back(std::move(cell));
                    ++cell_index;
                }
            }
        }
    }

    // composite score: mean of per-metric ranks (lower is better)
    std::vector<double> composite(out.ranked.size(), 0.0);
    if (grid.selection == SelectionMetric::Composite) {
        auto add_ranks = [&](auto value, bool higher_better) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < out.ranked.size(); ++i) {
                if (out.ranked[i].ok) idx.push_back(i);
            }
            std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                return higher_better ? value(out.ranked[a]) > value(out.ranked[b])
                                     : value(out.ranked[a]) < value(out.ranked[b]);
            });
            for (std::size_t r = 0; r < idx.size(); ++r) {
                composite[idx[r]] += static_cast<double>(r);
            }
        };
        add_ranks([](const GridCell& c) { return c.silhouette; }, true);
        add_ranks([](const GridCell& c) { return c.davies_bouldin; }, false);
        add_ranks([](const GridCell& c) { return c.calinski_harabasz; }, true);
    }

    std::vector<std::size_t> perm(out.ranked.size());
    std::iota(perm.begin(), perm.end(), 0);
    auto better = [&](std::size_t a, std::size_t b) {
        const GridCell& ca = out.ranked[a];
        const GridCell& cb = out.ranked[b];
        if (ca.ok != cb.ok) return ca.ok;
        if (!ca.ok) return false;
        double va = 0.0, vb = 0.0;
        bool higher = true;
        switch (grid.selection) {
            case SelectionMetric::Silhouette: va = ca.silhouette; vb = cb.silhouette; break;
            case SelectionMetric::Dbi:
                va = ca.davies_bouldin;
                vb = cb.davies_bouldin;
                higher = false;
                break;
            case SelectionMetric::Chi:
                va = ca.calinski_harabasz;
                vb = cb.calinski_harabasz;
                break;
            case SelectionMetric::Composite:
                va = composite[a];
                vb = composite[b];
                higher = false;
                break;
        }
        if (va != vb) return higher ? va > vb : va < vb;
        if (ca.davies_bouldin != cb.davies_bouldin) {
            return ca.davies_bouldin < cb.davies_bouldin;
        }
        return ca.final_loss < cb.final_loss;
    };
    std::stable_sort(perm.begin(), perm.end(), better);
    std::vector<GridCell> ranked;
    ranked.reserve(out.ranked.size());
    for (std::size_t i : perm) ranked.push_back(std::move(out.ranked[i]));
    out.ranked = std::move(ranked);
    return out;
}

}  // namespace eigencl
