#include "eigencl/core_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace eigencl {

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::Healthy: return "Healthy";
        case Stage::Mild: return "Mild";
        case Stage::Moderate: return "Moderate";
        case Stage::Severe: return "Severe";
    }
    return "?";
}

Stage stage_from_name(const std::string& name) {
    for (Stage s : {Stage::Healthy, Stage::Mild, Stage::Moderate, Stage::Severe}) {
        if (name == stage_name(s)) return s;
    }
    throw parse_error("unknown stage label '" + name + "'");
}

double NdreSeries::mean() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

void NdreSeries::validate() const {
    if (values.empty() || values.size() != dates.size()) {
        throw contract_error("series '" + patch_id + "': values/dates length mismatch");
    }
    if (dates.front() != 0) {
        throw contract_error("series '" + patch_id + "': dates must start at offset 0");
    }
    for (std::size_t t = 1; t < dates.size(); ++t) {
        if (dates[t] <= dates[t - 1]) {
            throw contract_error("series '" + patch_id + "': dates not strictly increasing");
        }
    }
    for (double v : values) {
        if (!(v >= -1.0 && v <= 1.0)) {
            throw contract_error("series '" + patch_id + "': NDRE value out of [-1,1]");
        }
    }
}

const std::vector<int>& Dataset::dates() const {
    if (series.empty()) throw contract_error("empty dataset has no date grid");
    return series.front().dates;
}

std::vector<double> Dataset::mean_ndre() const {
    std::vector<double> m(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) m[i] = series[i].mean();
    return m;
}

void Dataset::validate() const {
    if (series.empty()) throw contract_error("dataset has no series");
    std::set<std::string> ids;
    for (const auto& s : series) {
        s.validate();
        if (s.dates != series.front().dates) {
            throw contract_error("series '" + s.patch_id + "': date grid differs from dataset grid");
        }
        if (!ids.insert(s.patch_id).second) {
            throw contract_error("duplicate patch_id '" + s.patch_id + "'");
        }
    }
    if (truth && truth->size() != series.size()) {
        throw contract_error("truth block length does not match series count");
    }
}

bool operator==(const NdreSeries& a, const NdreSeries& b) {
    return a.patch_id == b.patch_id && a.values == b.values && a.dates == b.dates;
}

bool operator==(const PatchTruth& a, const PatchTruth& b) {
    return a.stage == b.stage && a.onset_day == b.onset_day;
}

bool Dataset::operator==(const Dataset& o) const { return series == o.series && truth == o.truth; }

double compute_ndre(double nir, double red_edge) {
    if (nir < 0.0 || red_edge < 0.0) {
        throw config_error("reflectances must be nonnegative (nir=" + format_double(nir) +
                           ", red_edge=" + format_double(red_edge) + ")");
    }
    const double denom = nir + red_edge;
    if (denom <= 0.0) {
        throw config_error("NDRE undefined: nir=" + format_double(nir) + " and red_edge=" +
                           format_double(red_edge) + " sum to zero");
    }
    return (nir - red_edge) / denom;
}

NdreSeries series_from_band_table(const std::vector<BandRow>& rows, const std::string& patch_id) {
    if (rows.empty()) throw parse_error("band table for '" + patch_id + "' has no rows");
    NdreSeries s;
    s.patch_id = patch_id;
    const int base = rows.front().date;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i > 0 && rows[i].date <= rows[i - 1].date) {
            throw parse_error("band table for '" + patch_id +
                              "': dates must be strictly increasing (row " + std::to_string(i) + ")");
        }
        s.dates.push_back(rows[i].date - base);  // canonical day offsets
        s.values.push_back(compute_ndre(rows[i].nir, rows[i].red_edge));
    }
    s.validate();
    return s;
}

void SynthConfig::validate() const {
    if (n_patches == 0) throw config_error("n_patches must be positive");
    double sum = 0.0;
    for (double p : stage_mix) {
        if (p < 0.0) throw config_error("stage_mix proportions must be nonnegative");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw config_error("stage_mix must sum to 1 (got " + format_double(sum) + ")");
    }
    if (noise_sd < 0.0) throw config_error("noise_sd must be nonnegative");
    if (dates.size() < 1) throw config_error("need at least one acquisition date");
    if (dates.front() != 0) throw config_error("dates must start at offset 0");
    for (std::size_t t = 1; t < dates.size(); ++t) {
        if (dates[t] <= dates[t - 1]) throw config_error("dates must be strictly increasing");
    }
    if (onset_day_range.lo > onset_day_range.hi) throw config_error("bad onset_day_range");
    for (const auto& iv : decline_rate_range) {
        if (iv.lo < 0.0 || iv.lo > iv.hi) throw config_error("bad decline_rate_range");
    }
}

std::vector<double> decline_trajectory(double start, double onset_day, double rate,
                                       const std::vector<int>& dates, double floor) {
    std::vector<double> v(dates.size());
    for (std::size_t t = 0; t < dates.size(); ++t) {
        const double elapsed = std::max(0.0, static_cast<double>(dates[t]) - onset_day);
        v[t] = std::max(floor, start - rate * elapsed);
    }
    return v;
}

namespace {

double trajectory_mean(double start, double onset, double rate, const std::vector<int>& dates,
                       double floor) {
    double s = 0.0;
    for (int d : dates) {
        s += std::max(floor, start - rate * std::max(0.0, static_cast<double>(d) - onset));
    }
    return s / static_cast<double>(dates.size());
}

// Decline rate whose noise-free trajectory mean equals `target`. The mean is
// monotone nonincreasing in the rate, so plain bisection suffices.
double solve_rate(double start, double onset, double target, const std::vector<int>& dates,
                  double floor) {
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (trajectory_mean(start, onset, mid, dates, floor) > target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

Dataset synthesize(const SynthConfig& config) {
    config.validate();
    Rng rng(config.seed);

    const double t_sev = kPaperThresholds[0];
    const double t_mod = kPaperThresholds[1];
    const double t_mild = kPaperThresholds[2];
    const double m = config.band_margin;

    const Interval band_healthy = {std::max(t_mild + m, config.healthy_level_range.lo),
                                   config.healthy_level_range.hi};
    const double mild_lo = t_mod + m;
    const double mild_hi = t_mild - m;
    const Interval band_mild = {mild_lo + config.mild_band_trim * (mild_hi - mild_lo), mild_hi};
    const Interval band_moderate = {t_sev + m, t_mod - m};
    const Interval band_severe = {config.severe_target_range.lo,
                                  std::min(t_sev - m, config.severe_target_range.hi)};

    Dataset ds;
    ds.series.reserve(config.n_patches);
    ds.truth.emplace();
    ds.truth->reserve(config.n_patches);

    std::size_t n_clamped = 0;
    for (std::size_t i = 0; i < config.n_patches; ++i) {
        const double u = rng.uniform();
        int stage_idx = 0;
        double acc = 0.0;
        for (int s = 0; s < 4; ++s) {
            acc += config.stage_mix[s];
            if (u < acc || s == 3) {
                stage_idx = s;
                break;
            }
        }
        const Stage stage = static_cast<Stage>(stage_idx);

        NdreSeries series;
        char id[16];
        std::snprintf(id, sizeof(id), "p%06zu", i);
        series.patch_id = id;
        series.dates = config.dates;

        PatchTruth truth;
        truth.stage = stage;
        if (stage == Stage::Healthy) {
            const double target = rng.uniform(band_healthy.lo, band_healthy.hi);
            const double slope = rng.uniform(0.0, config.healthy_slope_max);
            double date_mean = 0.0;
            for (int d : config.dates) date_mean += d;
            date_mean /= static_cast<double>(config.dates.size());
            for (int d : config.dates) {
                series.values.push_back(target - slope * (static_cast<double>(d) - date_mean));
            }
        } else {
            const Interval& band = stage == Stage::Mild      ? band_mild
                                   : stage == Stage::Moderate ? band_moderate
                                                              : band_severe;
            double target = rng.uniform(band.lo, band.hi);
            const double start = rng.uniform(config.start_level_range.lo, config.start_level_range.hi);
            const double onset = rng.uniform(config.onset_day_range.lo, config.onset_day_range.hi);
            // floor + late onset bound the reachable mean from below
            const double reachable =
                trajectory_mean(start, onset, 1.0, config.dates, config.decline_floor);
            target = std::max(target, reachable + 0.005);
            double rate = solve_rate(start, onset, target, config.dates, config.decline_floor);
            const Interval& allowed = config.decline_rate_range[stage_idx - 1];
            if (rate < allowed.lo || rate > allowed.hi) {
                rate = std::clamp(rate, allowed.lo, allowed.hi);
                ++n_clamped;
            }
            series.values = decline_trajectory(start, onset, rate, config.dates, config.decline_floor);
            truth.onset_day = onset;
        }
        if (config.noise_sd > 0.0) {
            for (double& v : series.values) v += config.noise_sd * rng.gaussian();
        }
        for (double& v : series.values) v = std::clamp(v, -1.0, 1.0);
        ds.series.push_back(std::move(series));
        ds.truth->push_back(truth);
    }
    if (n_clamped > 0) {
        std::fprintf(stderr,
                     "synthesize: decline rate clamped for %zu of %zu patches; "
                     "stage-band means are not guaranteed for those\n",
                     n_clamped, config.n_patches);
    }
    ds.validate();
    return ds;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& path) {
    dataset.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    out << "patch_id";
    for (int d : dataset.dates()) out << ",day_" << d;
    if (dataset.truth) out << ",truth_stage,truth_onset_day";
    out << "\n";
    for (std::size_t i = 0; i < dataset.series.size(); ++i) {
        const auto& s = dataset.series[i];
        out << s.patch_id;
        for (double v : s.values) out << "," << format_double(v);
        if (dataset.truth) {
            const auto& t = (*dataset.truth)[i];
            out << "," << stage_name(t.stage) << ",";
            if (t.onset_day) out << format_double(*t.onset_day);
        }
        out << "\n";
    }
    if (!out) throw io_error("write failed for '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open dataset '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line.empty()) {
        throw parse_error(path + ": no records");
    }
    auto header = split_csv_line(line);
    if (header.empty() || header[0] != "patch_id") {
        throw parse_error(path + ": malformed header (expected leading 'patch_id')");
    }
    std::vector<int> dates;
    std::size_t col = 1;
    while (col < header.size() && header[col].rfind("day_", 0) == 0) {
        const std::string off = header[col].substr(4);
        dates.push_back(static_cast<int>(parse_double_strict(off, path + " header")));
        ++col;
    }
    if (dates.empty()) throw parse_error(path + ": header has no day_<offset> columns");
    bool has_truth = false;
    if (col < header.size()) {
        if (header.size() - col == 2 && header[col] == "truth_stage" &&
            header[col + 1] == "truth_onset_day") {
            has_truth = true;
        } else {
            throw parse_error(path + ": unexpected trailing header columns");
        }
    }

    Dataset ds;
    if (has_truth) ds.truth.emplace();
    const std::size_t expect = 1 + dates.size() + (has_truth ? 2 : 0);
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != expect) {
            throw parse_error(path + ":" + std::to_string(row) + ": expected " +
                              std::to_string(expect) + " fields, got " +
                              std::to_string(fields.size()));
        }
        NdreSeries s;
        s.patch_id = fields[0];
        s.dates = dates;
        for (std::size_t t = 0; t < dates.size(); ++t) {
            const double v =
                parse_double_strict(fields[1 + t], path + ":" + std::to_string(row));
            if (!(v >= -1.0 && v <= 1.0)) {
                throw parse_error(path + ":" + std::to_string(row) + ": NDRE value " +
                                  fields[1 + t] + " outside [-1,1]");
            }
            s.values.push_back(v);
        }
        if (has_truth) {
            PatchTruth t;
            t.stage = stage_from_name(fields[1 + dates.size()]);
            const std::string& onset = fields[2 + dates.size()];
            if (!onset.empty()) {
                t.onset_day = parse_double_strict(onset, path + ":" + std::to_string(row));
            }
            ds.truth->push_back(t);
        }
        ds.series.push_back(std::move(s));
    }
    if (ds.series.empty()) throw parse_error(path + ": no records");
    ds.validate();
    return ds;
}

}  // namespace eigencl
