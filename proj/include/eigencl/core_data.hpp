#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "eigencl/common.hpp"

namespace eigencl {

enum class Stage { Healthy = 0, Mild = 1, Moderate = 2, Severe = 3 };

const char* stage_name(Stage s);
Stage stage_from_name(const std::string& name);

// One patch: mean NDRE per acquisition date. Dates are integer day offsets
// from the first acquisition, so dates[0] == 0 and the sequence is strictly
// increasing. Values live in [-1, 1].
struct NdreSeries {
    std::string patch_id;
    std::vector<double> values;
    std::vector<int> dates;

    double mean() const;
    void validate() const;
};

// Ground truth carried by synthetic corpora only; never read by training.
struct PatchTruth {
    Stage stage = Stage::Healthy;
    std::optional<double> onset_day;
};

struct Dataset {
    std::vector<NdreSeries> series;
    std::optional<std::vector<PatchTruth>> truth;

    std::size_t size() const { return series.size(); }
    const std::vector<int>& dates() const;
    std::vector<double> mean_ndre() const;
    void validate() const;

    bool operator==(const Dataset&) const;
};

bool operator==(const NdreSeries& a, const NdreSeries& b);
bool operator==(const PatchTruth& a, const PatchTruth& b);

// NDRE = (NIR - RE) / (NIR + RE). Throws on a zero denominator.
double compute_ndre(double nir, double red_edge);

struct BandRow {
    int date;
    double nir;
    double red_edge;
};

// Builds one series from per-date band aggregates. No normalization is
// applied; absolute NDRE levels are preserved.
NdreSeries series_from_band_table(const std::vector<BandRow>& rows, const std::string& patch_id);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

// Synthetic drought-trajectory corpus generator. Healthy patches are flat
// (up to a small seasonal slope); stressed patches start healthy and
// decline linearly from a random onset day, saturating at `decline_floor`.
// The decline rate is solved so the noise-free per-patch mean NDRE lands on
// a target sampled inside the patch's stage band, then clamped to the
// configured per-stage rate interval (a clamp means the config is
// infeasible; the generator warns and carries on).
struct SynthConfig {
    std::size_t n_patches = 2000;
    std::array<double, 4> stage_mix = {0.52, 0.26, 0.13, 0.09};  // healthy..severe
    double noise_sd = 0.02;
    Interval onset_day_range = {8.0, 18.0};
    std::array<Interval, 3> decline_rate_range = {{
        {0.0002, 0.006},  // mild
        {0.0030, 0.016},  // moderate
        {0.0080, 0.030},  // severe
    }};
    std::uint64_t seed = 7;
    std::vector<int> dates = {0, 15, 30, 45, 60};

    // Target-mean sampling ranges per stage band. Healthy and severe bands
    // are open-ended in the staging scheme, so their sampling ranges are
    // explicit; mild and moderate derive from the staging thresholds
    // shrunk by `band_margin`.
    Interval healthy_level_range = {0.585, 0.645};
    Interval severe_target_range = {0.18, 0.30};
    double band_margin = 0.02;
    // Mild targets are drawn from the top (1 - mild_band_trim) of the mild
    // band; keeps mild visually distinct from moderate.
    double mild_band_trim = 0.2;
    Interval start_level_range = {0.55, 0.575};
    double decline_floor = 0.08;
    double healthy_slope_max = 0.0008;

    void validate() const;
};

// Piecewise-linear stress trajectory: value(d) = max(floor, start - rate *
// max(0, d - onset_day)). Pass floor = -1 to disable saturation.
std::vector<double> decline_trajectory(double start, double onset_day, double rate,
                                       const std::vector<int>& dates, double floor);

Dataset synthesize(const SynthConfig& config);

// The paper's staging thresholds (severe/moderate, moderate/mild,
// mild/healthy), reused as the synthetic generator's band boundaries.
inline constexpr std::array<double, 3> kPaperThresholds = {0.3221, 0.4789, 0.5591};

// CSV persistence. Header: patch_id,day_<d0>,...,day_<dT-1>
// [,truth_stage,truth_onset_day]; values as shortest round-trip decimals.
void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace eigencl
