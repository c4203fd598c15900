#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "eigencl/clustering.hpp"
#include "eigencl/core_data.hpp"
#include "eigencl/encoder.hpp"

namespace eigencl {

// Ordered NDRE cut points: severe/moderate, moderate/mild, mild/healthy.
struct StageThresholds {
    double severe_moderate = 0.0;
    double moderate_mild = 0.0;
    double mild_healthy = 0.0;

    void validate() const;
    static StageThresholds paper();
};

// Midpoints of the four sorted cluster-mean NDRE values.
StageThresholds thresholds_from_centroids(std::span<const double> cluster_mean_ndre);

// Bands are lower-exclusive / upper-inclusive on the healthy side:
// Severe < t1 <= Moderate < t2 <= Mild < t3 <= Healthy.
Stage stage(double mean_ndre, const StageThresholds& thresholds);

std::vector<int> stage_labels(const Dataset& dataset, const StageThresholds& thresholds);

// Mean of per-patch mean NDRE within each cluster.
std::vector<double> cluster_mean_ndre(const Dataset& dataset, std::span<const int> labels);

// Clusters whose mean NDRE stages as Moderate or Severe.
std::set<int> stress_clusters(const Dataset& dataset, std::span<const int> labels,
                              const StageThresholds& thresholds);

struct ClusterProfile {
    int cluster = 0;
    std::size_t count = 0;
    std::vector<double> mean;     // per date
    std::vector<double> ci_half;  // 1.96 * sd / sqrt(n), 0 for singletons
    bool singleton = false;
};

std::vector<ClusterProfile> cluster_profiles(const Dataset& dataset,
                                             std::span<const int> labels);

struct AnovaResult {
    double f = 0.0;
    double p = 1.0;
};

// Classical one-way F statistic; p from the F distribution. Zero
// within-group variance with nonzero between-group variance yields
// F = +infinity, p = 0.
AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups);

// Permutation alternative (seeded label shuffles of the pooled sample).
double anova_permutation_p(const std::vector<std::vector<double>>& groups,
                           std::size_t shuffles, std::uint64_t seed);

struct PairwiseStat {
    std::size_t group_a = 0;
    std::size_t group_b = 0;
    double mean_difference = 0.0;  // mean_b - mean_a
    double p = 1.0;
};

// Pairwise comparisons with familywise p-values from a permutation of the
// studentized range statistic (max over pairs per shuffle).
std::vector<PairwiseStat> tukey_hsd(const std::vector<std::vector<double>>& groups,
                                    std::size_t shuffles = 10000, std::uint64_t seed = 1);

// First day the piecewise-linear interpolant of the series falls to or
// below the threshold; empty if it never does.
std::optional<double> crossing_day(const NdreSeries& series, double threshold);

// Prefix-based detection: for prefix lengths 2..T the observed prefix is
// padded by holding its last value, embedded, and assigned to the nearest
// centroid. Detection is the date of the earliest prefix that lands in a
// stress cluster and stays there for every longer prefix.
std::optional<double> detection_day(const EncoderParams& params, const NdreSeries& series,
                                    const Matrix& centroids, const std::set<int>& stress_set);

struct LeadTimeRow {
    std::string patch_id;
    std::optional<double> detection_day;
    std::optional<double> crossing_day;
    std::optional<double> lead_days;  // crossing - detection where both exist
};

struct HistBin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
};

struct LeadTimeReport {
    std::vector<LeadTimeRow> rows;
    std::size_t n_crossed = 0;
    std::size_t n_early = 0;  // lead > 0
    std::optional<double> fraction_early;
    std::optional<double> mean_lead_days;
    std::optional<double> max_lead_days;
    bool no_stress_events = false;
    std::vector<HistBin> histogram;
};

LeadTimeReport lead_time_report(const Dataset& dataset,
                                const std::vector<std::optional<double>>& detections,
                                const std::vector<std::optional<double>>& crossings,
                                std::size_t histogram_bins = 12);

struct ClassMetrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    Matrix confusion;  // actual x predicted
};

ClassMetrics evaluate_classification(std::span<const int> predicted, std::span<const int> actual,
                                     std::size_t n_classes);

struct KnnResult {
    std::vector<int> predicted;
    ClassMetrics metrics;
};

// Majority vote over Euclidean nearest neighbours; vote ties go to the
// closest neighbour among the tied classes.
KnnResult knn_classify(const Matrix& train_x, std::span<const int> train_y, const Matrix& test_x,
                       std::span<const int> test_y, std::size_t n_classes,
                       std::size_t k_neighbors = 5);

struct LogregModel {
    Matrix weights;  // n_classes x (dim + 1), bias last
    std::size_t n_classes = 0;
};

struct LogregConfig {
    double l2_penalty = 1e-4;
    std::size_t epochs = 500;
    double learning_rate = 1.0;
    std::uint64_t seed = 1;
};

// Mean cross-entropy and its exact gradient for the multinomial model;
// exposed so the optimizer and the finite-difference check share one path.
double logreg_loss_grad(const Matrix& weights, const Matrix& x, std::span<const int> y,
                        double l2_penalty, Matrix* grad_out);

LogregModel logreg_train(const Matrix& x, std::span<const int> y, std::size_t n_classes,
                         const LogregConfig& config = {});

std::vector<int> logreg_classify(const LogregModel& model, const Matrix& x);

// Content hash over encoder configuration and every stored parameter.
std::uint64_t params_hash(const EncoderParams& params);

struct TransferReport {
    ValidityReport validity;
    double stage_cluster_ari = 0.0;
    std::vector<double> cluster_mean_ndre;
    LeadTimeReport lead;
    std::uint64_t model_hash = 0;
};

// Applies a frozen model, frozen centroids and frozen thresholds to a new
// dataset. No parameter updates happen; the model hash is checked before
// and after.
TransferReport transfer_evaluate(const EncoderParams& params, const Matrix& centroids,
                                 const std::set<int>& stress_set,
                                 const StageThresholds& thresholds, const Dataset& new_dataset,
                                 double stress_threshold = 0.40);

}  // namespace eigencl
