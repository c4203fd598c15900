#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eigencl/clustering.hpp"
#include "eigencl/core_data.hpp"
#include "eigencl/encoder.hpp"
#include "eigencl/objective.hpp"
#include "eigencl/spectral.hpp"

namespace eigencl {

enum class LossKind { EigenCL, CosineAblation, NtXent };
enum class OptimizerKind { Sgd, Adam };

const char* loss_kind_name(LossKind k);
LossKind loss_kind_from_name(const std::string& name);
const char* optimizer_name(OptimizerKind k);
OptimizerKind optimizer_from_name(const std::string& name);

struct TrainConfig {
    std::size_t batch_size = 256;
    std::size_t epochs = 50;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::Adam;
    std::uint64_t seed = 1;
    LossKind loss_kind = LossKind::EigenCL;
    std::size_t eigen_component = 0;
    LossHyper hyper;

    // early stop: epoch-mean loss improves by less than min_delta for
    // patience consecutive epochs
    std::size_t early_stop_patience = 5;
    double early_stop_min_delta = 1e-5;

    // NT-Xent baseline augmentation
    double augment_jitter_sd = 0.02;
    double augment_scale_pct = 0.05;

    // where to drop the last-good checkpoint if the loss turns NaN/Inf
    std::string abort_checkpoint_path;

    void validate() const;
};

struct TrainHistory {
    std::vector<double> mean_loss;
    std::vector<double> grad_norm;
    std::vector<double> seconds;

    std::size_t epochs() const { return mean_loss.size(); }
};

struct TrainResult {
    EncoderParams params;
    TrainHistory history;
};

// Ablation affinity (no eigen step): S_ij = (1 + cos(x_i, x_j)) / 2 over the
// raw NDRE series rows.
Matrix ablation_affinity(const Matrix& raw_series);

// Mini-batch training of the encoder under the selected loss. Deterministic
// for a fixed (dataset, weights, configs, seed) tuple.
TrainResult train(const Dataset& dataset, const StressWeights& weights,
                  const EncoderConfig& encoder_config, const TrainConfig& train_config);

// Eval-mode embeddings over the full dataset, in dataset order.
EmbeddingBatch embed_dataset(const EncoderParams& params, const Dataset& dataset);

enum class SelectionMetric { Silhouette, Dbi, Chi, Composite };

const char* selection_metric_name(SelectionMetric m);
SelectionMetric selection_metric_from_name(const std::string& name);

struct GridSpec {
    std::vector<double> lambdas = {1.0, 2.0, 4.0, 6.0};
    std::vector<double> taus = {0.05, 0.075, 0.1, 0.15};
    std::vector<double> sigmas = {0.3, 0.5, 0.7, 1.0};
    std::vector<double> margins = {0.1, 0.2, 0.3};
    SelectionMetric selection = SelectionMetric::Silhouette;

    void validate() const;
    std::size_t cells() const {
        return lambdas.size() * taus.size() * sigmas.size() * margins.size();
    }
};

struct GridCell {
    LossHyper hyper;
    bool ok = false;
    std::string error;
    double silhouette = 0.0;
    double davies_bouldin = 0.0;
    double calinski_harabasz = 0.0;
    double final_loss = 0.0;
};

struct GridResult {
    std::vector<GridCell> ranked;  // best first
    SelectionMetric selection = SelectionMetric::Silhouette;
    double holdout_fraction = 0.3;
};

// Trains one model per hyperparameter combination on a 70% split, clusters
// the held-out embeddings and ranks combinations by the selection metric
// (ties: lower DBI, then lower final loss). A failing cell is recorded and
// skipped, never fatal.
GridResult grid_search(const Dataset& dataset, const StressWeights& weights,
                       const GridSpec& grid, const EncoderConfig& encoder_config,
                       const TrainConfig& base_config, std::size_t cluster_k = 4);

}  // namespace eigencl
