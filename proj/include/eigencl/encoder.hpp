#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eigencl/common.hpp"
#include "eigencl/core_data.hpp"

namespace eigencl {

// Feed-forward encoder over NDRE feature vectors. Every layer is
// linear -> batch norm -> LeakyReLU; the final layer output is L2-normalized
// row-wise to give unit embeddings.
struct EncoderConfig {
    std::size_t input_dim = 5;
    std::vector<std::size_t> hidden_dims = {64, 64};
    std::size_t embed_dim = 32;
    double leaky_slope = 0.01;
    double bn_epsilon = 1e-5;
    std::uint64_t seed = 1;
    bool use_differences = false;  // append first differences to the raw series

    void validate() const;
    std::vector<std::size_t> layer_widths() const;  // input, hidden..., embed
};

std::size_t feature_dim(std::size_t series_length, bool use_differences);

// Feature rows for the encoder: the raw series, optionally followed by its
// first differences.
Matrix build_features(const Dataset& dataset, bool use_differences);
std::vector<double> build_feature_row(const std::vector<double>& values, bool use_differences);

struct LayerParams {
    Matrix weight;  // fan_in x fan_out
    std::vector<double> bias;
    std::vector<double> bn_scale;
    std::vector<double> bn_shift;
    std::vector<double> run_mean;
    std::vector<double> run_var;

    bool operator==(const LayerParams&) const = default;
};

struct EncoderParams {
    EncoderConfig config;
    std::vector<LayerParams> layers;

    std::size_t parameter_count() const;
};

bool same_parameters(const EncoderParams& a, const EncoderParams& b);

struct LayerGrads {
    Matrix weight;
    std::vector<double> bias;
    std::vector<double> bn_scale;
    std::vector<double> bn_shift;
};

struct EncoderGrads {
    std::vector<LayerGrads> layers;

    double squared_norm() const;
};

enum class Mode { Train, Eval };

struct LayerCache {
    Matrix input;      // batch x fan_in
    Matrix x_hat;      // normalized pre-scale activations
    Matrix bn_out;     // gamma * x_hat + beta (pre-LeakyReLU)
    std::vector<double> inv_std;  // 1 / sqrt(var + eps) per feature
};

struct ForwardCache {
    std::vector<LayerCache> layers;
    Matrix pre_norm;             // final layer output before L2 normalization
    std::vector<double> norms;   // row norms used for normalization
    std::size_t batch = 0;
};

struct ForwardResult {
    Matrix embeddings;  // batch x embed_dim, unit rows
    ForwardCache cache;
};

// L2-normalized unit embeddings for a set of patches.
struct EmbeddingBatch {
    Matrix z;
    std::vector<std::string> patch_ids;

    void validate() const;
};

EncoderParams init_encoder(const EncoderConfig& config);

// Train mode uses batch statistics and updates running statistics in
// `params`; eval mode reads running statistics and leaves params untouched.
ForwardResult forward(EncoderParams& params, const Matrix& inputs, Mode mode);
Matrix forward_eval(const EncoderParams& params, const Matrix& inputs);

// Exact gradients through L2 normalization, LeakyReLU, batch norm and the
// linear layers. `cache` must come from a train-mode forward of `params`.
EncoderGrads backward(const EncoderParams& params, const ForwardCache& cache,
                      const Matrix& grad_embeddings);

// Apply fn to every trainable parameter paired with its gradient slot.
template <typename Fn>
void for_each_parameter(EncoderParams& params, EncoderGrads& grads, Fn&& fn) {
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& p = params.layers[l];
        auto& g = grads.layers[l];
        for (std::size_t i = 0; i < p.weight.data().size(); ++i) {
            fn(p.weight.data()[i], g.weight.data()[i]);
        }
        for (std::size_t i = 0; i < p.bias.size(); ++i) fn(p.bias[i], g.bias[i]);
        for (std::size_t i = 0; i < p.bn_scale.size(); ++i) fn(p.bn_scale[i], g.bn_scale[i]);
        for (std::size_t i = 0; i < p.bn_shift.size(); ++i) fn(p.bn_shift[i], g.bn_shift[i]);
    }
}

EncoderGrads zero_grads(const EncoderParams& params);

void save_checkpoint(const EncoderParams& params, const std::string& path);
EncoderParams load_checkpoint(const std::string& path);

}  // namespace eigencl
