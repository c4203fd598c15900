#include "eigencl/analysis.hpp"

#include "eigencl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

namespace eigencl {

void StageThresholds::validate() const {
    if (!(severe_moderate < moderate_mild && moderate_mild < mild_healthy)) {
        throw config_error("stage thresholds must be strictly increasing");
    }
    for (double t : {severe_moderate, moderate_mild, mild_healthy}) {
        if (!(t > -1.0 && t < 1.0)) throw config_error("stage thresholds must lie in (-1, 1)");
    }
}

StageThresholds StageThresholds::paper() {
    return {kPaperThresholds[0], kPaperThresholds[1], kPaperThresholds[2]};
}

StageThresholds thresholds_from_centroids(std::span<const double> cluster_mean_ndre) {
    if (cluster_mean_ndre.size() != 4) {
        throw config_error("staging requires exactly four cluster regimes, got " +
                           std::to_string(cluster_mean_ndre.size()));
    }
    std::vector<double> m(cluster_mean_ndre.begin(), cluster_mean_ndre.end());
    std::sort(m.begin(), m.end());
    for (std::size_t i = 1; i < m.size(); ++i) {
        if (m[i] == m[i - 1]) {
            throw numeric_error("degenerate staging: duplicate cluster mean NDRE " +
                                format_double(m[i]));
        }
    }
    StageThresholds t{0.5 * (m[0] + m[1]), 0.5 * (m[1] + m[2]), 0.5 * (m[2] + m[3])};
    t.validate();
    return t;
}

Stage stage(double mean_ndre, const StageThresholds& t) {
    t.validate();
    if (mean_ndre < t.severe_moderate) return Stage::Severe;
    if (mean_ndre < t.moderate_mild) return Stage::Moderate;
    if (mean_ndre < t.mild_healthy) return Stage::Mild;
    return Stage::Healthy;
}

std::vector<int> stage_labels(const Dataset& dataset, const StageThresholds& thresholds) {
    std::vector<int> out(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        out[i] = static_cast<int>(stage(dataset.series[i].mean(), thresholds));
    }
    return out;
}

std::vector<double> cluster_mean_ndre(const Dataset& dataset, std::span<const int> labels) {
    if (labels.size() != dataset.size()) throw contract_error("labels/dataset size mismatch");
    int k = 0;
    for (int l : labels) {
        if (l < 0) throw contract_error("negative cluster label");
        k = std::max(k, l + 1);
    }
    std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
    std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        sum[static_cast<std::size_t>(labels[i])] += dataset.series[i].mean();
        ++count[static_cast<std::size_t>(labels[i])];
    }
    for (std::size_t c = 0; c < sum.size(); ++c) {
        if (count[c] == 0) throw contract_error("cluster " + std::to_string(c) + " is empty");
        sum[c] /= static_cast<double>(count[c]);
    }
    return sum;
}

std::set<int> stress_clusters(const Dataset& dataset, std::span<const int> labels,
                              const StageThresholds& thresholds) {
    const auto means = cluster_mean_ndre(dataset, labels);
    std::set<int> out;
    for (std::size_t c = 0; c < means.size(); ++c) {
        const Stage s = stage(means[c], thresholds);
        if (s == Stage::Moderate || s == Stage::Severe) out.insert(static_cast<int>(c));
    }
    return out;
}

std::vector<ClusterProfile> cluster_profiles(const Dataset& dataset,
                                             std::span<const int> labels) {
    if (labels.size() != dataset.size()) throw contract_error("labels/dataset size mismatch");
    int k = 0;
    for (int l : labels) k = std::max(k, l + 1);
    const std::size_t t = dataset.dates().size();

    std::vector<ClusterProfile> out(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
        out[static_cast<std::size_t>(c)].cluster = c;
        out[static_cast<std::size_t>(c)].mean.assign(t, 0.0);
        out[static_cast<std::size_t>(c)].ci_half.assign(t, 0.0);
    }
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        auto& p = out[static_cast<std::size_t>(labels[i])];
        ++p.count;
        for (std::size_t d = 0; d < t; ++d) p.mean[d] += dataset.series[i].values[d];
    }
    for (auto& p : out) {
        if (p.count == 0) throw contract_error("cluster " + std::to_string(p.cluster) + " is empty");
        for (double& m : p.mean) m /= static_cast<double>(p.count);
        p.singleton = p.count == 1;
    }
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        auto& p = out[static_cast<std::size_t>(labels[i])];
        for (std::size_t d = 0; d < t; ++d) {
            const double diff = dataset.series[i].values[d] - p.mean[d];
            p.ci_half[d] += diff * diff;
        }
    }
    for (auto& p : out) {
        for (double& h : p.ci_half) {
            if (p.count < 2) {
                h = 0.0;  // singleton: half-width 0 by convention, flagged
            } else {
                const double sd = std::sqrt(h / static_cast<double>(p.count - 1));
                h = 1.96 * sd / std::sqrt(static_cast<double>(p.count));
            }
        }
    }
    return out;
}

namespace {

// Regularized incomplete beta I_x(a, b) via the continued-fraction
// expansion (modified Lentz iteration).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    throw numeric_error("incomplete beta continued fraction did not converge");
}

double reg_incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    const double front = std::exp(a * std::log(x) + b * std::log(1.0 - x) - lbeta);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

// Survival function of the F distribution.
double f_sf(double f, double d1, double d2) {
    if (!std::isfinite(f)) return 0.0;
    if (f <= 0.0) return 1.0;
    return reg_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

struct AnovaParts {
    double f = 0.0;
    double msw = 0.0;
    std::vector<double> means;
    std::vector<std::size_t> sizes;
    std::size_t n_total = 0;
};

AnovaParts anova_parts(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw contract_error("ANOVA needs at least 2 groups");
    AnovaParts parts;
    double grand = 0.0;
    for (const auto& g : groups) {
        if (g.size() < 2) throw contract_error("each ANOVA group needs at least 2 samples");
        double m = 0.0;
        for (double v : g) m += v;
        grand += m;
        parts.means.push_back(m / static_cast<double>(g.size()));
        parts.sizes.push_back(g.size());
        parts.n_total += g.size();
    }
    grand /= static_cast<double>(parts.n_total);

    double ssb = 0.0, ssw = 0.0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const double d = parts.means[i] - grand;
        ssb += static_cast<double>(parts.sizes[i]) * d * d;
        for (double v : groups[i]) {
            const double e = v - parts.means[i];
            ssw += e * e;
        }
    }
    const double d1 = static_cast<double>(groups.size() - 1);
    const double d2 = static_cast<double>(parts.n_total - groups.size());
    parts.msw = ssw / d2;
    if (ssw <= 0.0) {
        parts.f = ssb > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    } else {
        parts.f = (ssb / d1) / parts.msw;
    }
    return parts;
}

}  // namespace

AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
    const AnovaParts parts = anova_parts(groups);
    AnovaResult out;
    out.f = parts.f;
    const double d1 = static_cast<double>(groups.size() - 1);
    const double d2 = static_cast<double>(parts.n_total - groups.size());
    out.p = f_sf(parts.f, d1, d2);
    return out;
}

double anova_permutation_p(const std::vector<std::vector<double>>& groups, std::size_t shuffles,
                           std::uint64_t seed) {
    const AnovaParts obs = anova_parts(groups);
    std::vector<double> pooled;
    for (const auto& g : groups) pooled.insert(pooled.end(), g.begin(), g.end());
    Rng rng(seed);
    std::size_t hits = 0;
    std::vector<std::vector<double>> shuffled(groups.size());
    for (std::size_t s = 0; s < shuffles; ++s) {
        rng.shuffle(pooled);
        std::size_t at = 0;
        for (std::size_t g = 0; g < groups.size(); ++g) {
            shuffled[g].assign(pooled.begin() + at, pooled.begin() + at + groups[g].size());
            at += groups[g].size();
        }
        if (anova_parts(shuffled).f >= obs.f) ++hits;
    }
    return static_cast<double>(hits + 1) / static_cast<double>(shuffles + 1);
}

namespace {

// Studentized pairwise statistics (Tukey-Kramer standard error).
std::vector<double> pairwise_q(const AnovaParts& parts) {
    std::vector<double> q;
    for (std::size_t i = 0; i < parts.means.size(); ++i) {
        for (std::size_t j = i + 1; j < parts.means.size(); ++j) {
            const double se = std::sqrt(
                parts.msw * 0.5 *
                (1.0 / static_cast<double>(parts.sizes[i]) +
                 1.0 / static_cast<double>(parts.sizes[j])));
            q.push_back(se > 0.0 ? std::abs(parts.means[i] - parts.means[j]) / se
                                 : (parts.means[i] == parts.means[j]
                                        ? 0.0
                                        : std::numeric_limits<double>::infinity()));
        }
    }
    return q;
}

}  // namespace

std::vector<PairwiseStat> tukey_hsd(const std::vector<std::vector<double>>& groups,
                                    std::size_t shuffles, std::uint64_t seed) {
    const AnovaParts obs = anova_parts(groups);
    const std::vector<double> q_obs = pairwise_q(obs);

    std::vector<double> pooled;
    for (const auto& g : groups) pooled.insert(pooled.end(), g.begin(), g.end());
    Rng rng(seed);
    std::vector<std::size_t> hits(q_obs.size(), 0);
    std::vector<std::vector<double>> shuffled(groups.size());
    for (std::size_t s = 0; s < shuffles; ++s) {
        rng.shuffle(pooled);
        std::size_t at = 0;
        for (std::size_t g = 0; g < groups.size(); ++g) {
            shuffled[g].assign(pooled.begin() + at, pooled.begin() + at + groups[g].size());
            at += groups[g].size();
        }
        const std::vector<double> q_perm = pairwise_q(anova_parts(shuffled));
        const double q_max = *std::max_element(q_perm.begin(), q_perm.end());
        for (std::size_t p = 0; p < q_obs.size(); ++p) {
            if (q_max >= q_obs[p]) ++hits[p];
        }
    }

    std::vector<PairwiseStat> out;
    std::size_t pair = 0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        for (std::size_t j = i + 1; j < groups.size(); ++j, ++pair) {
            PairwiseStat st;
            st.group_a = i;
            st.group_b = j;
            st.mean_difference = obs.means[j] - obs.means[i];
            st.p = static_cast<double>(hits[pair] + 1) / static_cast<double>(shuffles + 1);
            out.push_back(st);
        }
    }
    return out;
}

std::optional<double> crossing_day(const NdreSeries& series, double threshold) {
    series.validate();
    const auto& v = series.values;
    const auto& d = series.dates;
    if (v.front() <= threshold) return 0.0;
    for (std::size_t t = 1; t < v.size(); ++t) {
        if (v[t] <= threshold) {
            // linear interpolation inside the segment [t-1, t]
            const double span = v[t - 1] - v[t];
            const double frac = span > 0.0 ? (v[t - 1] - threshold) / span : 1.0;
            return static_cast<double>(d[t - 1]) +
                   frac * static_cast<double>(d[t] - d[t - 1]);
        }
    }
    return std::nullopt;
}

std::optional<double> detection_day(const EncoderParams& params, const NdreSeries& series,
                                    const Matrix& centroids, const std::set<int>& stress_set) {
    series.validate();
    const std::size_t t = series.values.size();
    if (t < 2) return std::nullopt;

    Matrix padded(t - 1, feature_dim(t, params.config.use_differences));
    for (std::size_t p = 2; p <= t; ++p) {
        std::vector<double> held = series.values;
        for (std::size_t i = p; i < t; ++i) held[i] = held[p - 1];
        const auto row = build_feature_row(held, params.config.use_differences);
        std::copy(row.begin(), row.end(), padded.row(p - 2).begin());
    }
    const Matrix z = forward_eval(params, padded);
    const std::vector<int> assigned = assign_to_centroids(z, centroids);

    // earliest prefix that is in the stress set and stays there
    std::size_t first_stable = assigned.size();
    for (std::size_t i = assigned.size(); i-- > 0;) {
        if (stress_set.count(assigned[i]) > 0) {
            first_stable = i;
        } else {
            break;
        }
    }
    if (first_stable == assigned.size()) return std::nullopt;
    return static_cast<double>(series.dates[first_stable + 1]);
}

LeadTimeReport lead_time_report(const Dataset& dataset,
                                const std::vector<std::optional<double>>& detections,
                                const std::vector<std::optional<double>>& crossings,
                                std::size_t histogram_bins) {
    if (detections.size() != dataset.size() || crossings.size() != dataset.size()) {
        throw contract_error("detection/crossing vectors must match dataset size");
    }
    LeadTimeReport rep;
    std::vector<double> leads;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        LeadTimeRow row;
        row.patch_id = dataset.series[i].patch_id;
        row.detection_day = detections[i];
        row.crossing_day = crossings[i];
        if (crossings[i]) {
            ++rep.n_crossed;
            if (detections[i]) {
                row.lead_days = *crossings[i] - *detections[i];
                leads.push_back(*row.lead_days);
                if (*row.lead_days > 0.0) ++rep.n_early;
            }
        }
        rep.rows.push_back(std::move(row));
    }
    if (rep.n_crossed == 0) {
        rep.no_stress_events = true;
        return rep;
    }
    rep.fraction_early =
        static_cast<double>(rep.n_early) / static_cast<double>(rep.n_crossed);
    if (!leads.empty()) {
        double sum = 0.0, mx = -std::numeric_limits<double>::infinity();
        for (double l : leads) {
            sum += l;
            mx = std::max(mx, l);
        }
        rep.mean_lead_days = sum / static_cast<double>(leads.size());
        rep.max_lead_days = mx;

        const auto [mn_it, mx_it] = std::minmax_element(leads.begin(), leads.end());
        double lo = *mn_it, hi = *mx_it;
        if (hi <= lo) hi = lo + 1.0;
        const double width = (hi - lo) / static_cast<double>(histogram_bins);
        rep.histogram.resize(histogram_bins);
        for (std::size_t b = 0; b < histogram_bins; ++b) {
            rep.histogram[b].lo = lo + width * static_cast<double>(b);
            rep.histogram[b].hi = lo + width * static_cast<double>(b + 1);
        }
        for (double l : leads) {
            std::size_t b = static_cast<std::size_t>((l - lo) / width);
            if (b >= histogram_bins) b = histogram_bins - 1;
            ++rep.histogram[b].count;
        }
    }
    return rep;
}

ClassMetrics evaluate_classification(std::span<const int> predicted, std::span<const int> actual,
                                     std::size_t n_classes) {
    if (predicted.size() != actual.size() || predicted.empty()) {
        throw contract_error("prediction/actual size mismatch");
    }
    ClassMetrics m;
    m.confusion = Matrix(n_classes, n_classes);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const int a = actual[i], p = predicted[i];
        if (a < 0 || p < 0 || static_cast<std::size_t>(a) >= n_classes ||
            static_cast<std::size_t>(p) >= n_classes) {
            throw contract_error("class label out of range");
        }
        m.confusion(static_cast<std::size_t>(a), static_cast<std::size_t>(p)) += 1.0;
        if (a == p) ++correct;
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(predicted.size());

    double f1 = 0.0, prec = 0.0, rec = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        double tp = m.confusion(c, c);
        double actual_c = 0.0, predicted_c = 0.0;
        for (std::size_t j = 0; j < n_classes; ++j) {
            actual_c += m.confusion(c, j);
            predicted_c += m.confusion(j, c);
        }
        if (actual_c == 0.0) continue;  // macro over classes present in the truth
        ++present;
        const double p = predicted_c > 0.0 ? tp / predicted_c : 0.0;
        const double r = tp / actual_c;
        prec += p;
        rec += r;
        f1 += (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    if (present == 0) throw contract_error("no classes present in actual labels");
    m.macro_precision = prec / static_cast<double>(present);
    m.macro_recall = rec / static_cast<double>(present);
    m.macro_f1 = f1 / static_cast<double>(present);
    return m;
}

KnnResult knn_classify(const Matrix& train_x, std::span<const int> train_y, const Matrix& test_x,
                       std::span<const int> test_y, std::size_t n_classes,
                       std::size_t k_neighbors) {
    if (train_x.rows() == 0) throw contract_error("empty training set");
    if (train_x.rows() != train_y.size()) throw contract_error("train labels size mismatch");
    if (k_neighbors < 1) throw config_error("k_neighbors must be >= 1");
    const std::size_t k = std::min(k_neighbors, train_x.rows());

    KnnResult out;
    out.predicted.resize(test_x.rows());
    std::vector<std::pair<double, std::size_t>> dist(train_x.rows());
    for (std::size_t i = 0; i < test_x.rows(); ++i) {
        for (std::size_t j = 0; j < train_x.rows(); ++j) {
            dist[j] = {squared_distance(test_x.row(i), train_x.row(j)), j};
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        std::vector<std::size_t> votes(n_classes, 0);
        for (std::size_t v = 0; v < k; ++v) {
            ++votes[static_cast<std::size_t>(train_y[dist[v].second])];
        }
        const std::size_t best = *std::max_element(votes.begin(), votes.end());
        int label = -1;
        std::size_t tied = 0;
        for (std::size_t c = 0; c < n_classes; ++c) {
            if (votes[c] == best) ++tied;
        }
        if (tied == 1) {
            label = static_cast<int>(
                std::max_element(votes.begin(), votes.end()) - votes.begin());
        } else {
            // tie: closest neighbour among the tied classes decides
            for (std::size_t v = 0; v < k; ++v) {
                const int c = train_y[dist[v].second];
                if (votes[static_cast<std::size_t>(c)] == best) {
                    label = c;
                    break;
                }
            }
        }
        out.predicted[i] = label;
    }
    out.metrics = evaluate_classification(out.predicted, test_y, n_classes);
    return out;
}

double logreg_loss_grad(const Matrix& weights, const Matrix& x, std::span<const int> y,
                        double l2_penalty, Matrix* grad_out) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    const std::size_t c = weights.rows();
    if (weights.cols() != d + 1) throw contract_error("logreg weight shape mismatch");
    if (y.size() != n || n == 0) throw contract_error("logreg labels size mismatch");

    Matrix grad(c, d + 1);
    double loss = 0.0;
    std::vector<double> logits(c), probs(c);
    for (std::size_t i = 0; i < n; ++i) {
        const auto xr = x.row(i);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t cc = 0; cc < c; ++cc) {
            double z = weights(cc, d);  // bias
            for (std::size_t j = 0; j < d; ++j) z += weights(cc, j) * xr[j];
            logits[cc] = z;
            mx = std::max(mx, z);
        }
        double denom = 0.0;
        for (std::size_t cc = 0; cc < c; ++cc) {
            probs[cc] = std::exp(logits[cc] - mx);
            denom += probs[cc];
        }
        const std::size_t yi = static_cast<std::size_t>(y[i]);
        if (yi >= c) throw contract_error("logreg label out of range");
        loss += -(logits[yi] - mx - std::log(denom));
        for (std::size_t cc = 0; cc < c; ++cc) {
            const double delta = probs[cc] / denom - (cc == yi ? 1.0 : 0.0);
            for (std::size_t j = 0; j < d; ++j) grad(cc, j) += delta * xr[j];
            grad(cc, d) += delta;
        }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    loss *= inv_n;
    for (double& g : grad.data()) g *= inv_n;
    // L2 penalty on weights, not biases
    for (std::size_t cc = 0; cc < c; ++cc) {
        for (std::size_t j = 0; j < d; ++j) {
            loss += 0.5 * l2_penalty * weights(cc, j) * weights(cc, j);
            grad(cc, j) += l2_penalty * weights(cc, j);
        }
    }
    if (grad_out) *grad_out = std::move(grad);
    return loss;
}

LogregModel logreg_train(const Matrix& x, std::span<const int> y, std::size_t n_classes,
                         const LogregConfig& config) {
    if (n_classes < 2) throw contract_error("logistic regression needs >= 2 classes");
    std::vector<bool> seen(n_classes, false);
    for (int label : y) {
        if (label < 0 || static_cast<std::size_t>(label) >= n_classes) {
            throw contract_error("label out of range");
        }
        seen[static_cast<std::size_t>(label)] = true;
    }
    if (std::count(seen.begin(), seen.end(), true) < 2) {
        throw contract_error("training data contains a single class");
    }
    LogregModel model;
    model.n_classes = n_classes;
    model.weights = Matrix(n_classes, x.cols() + 1);  // zero init: deterministic
    Matrix grad;
    for (std::size_t e = 0; e < config.epochs; ++e) {
        logreg_loss_grad(model.weights, x, y, config.l2_penalty, &grad);
        for (std::size_t i = 0; i < grad.data().size(); ++i) {
            model.weights.data()[i] -= config.learning_rate * grad.data()[i];
        }
    }
    return model;
}

std::vector<int> logreg_classify(const LogregModel& model, const Matrix& x) {
    const std::size_t d = x.cols();
    if (model.weights.cols() != d + 1) {
        throw config_error("logreg model expects dimension " +
                           std::to_string(model.weights.cols() - 1) + ", got " +
                           std::to_string(d));
    }
    std::vector<int> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto xr = x.row(i);
        double best = -std::numeric_limits<double>::infinity();
        int arg = 0;
        for (std::size_t c = 0; c < model.n_classes; ++c) {
            double z = model.weights(c, d);
            for (std::size_t j = 0; j < d; ++j) z += model.weights(c, j) * xr[j];
            if (z > best) {
                best = z;
                arg = static_cast<int>(c);
            }
        }
        out[i] = arg;
    }
    return out;
}

std::uint64_t params_hash(const EncoderParams& params) {
    std::vector<unsigned char> bytes;
    auto push_double = [&](double v) {
        unsigned char buf[sizeof(double)];
        std::memcpy(buf, &v, sizeof(double));
        bytes.insert(bytes.end(), buf, buf + sizeof(double));
    };
    auto push_size = [&](std::size_t v) { push_double(static_cast<double>(v)); };
    push_size(params.config.input_dim);
    for (std::size_t h : params.config.hidden_dims) push_size(h);
    push_size(params.config.embed_dim);
    push_double(params.config.leaky_slope);
    push_double(params.config.bn_epsilon);
    push_size(params.config.use_differences ? 1 : 0);
    for (const auto& l : params.layers) {
        for (double v : l.weight.data()) push_double(v);
        for (double v : l.bias) push_double(v);
        for (double v : l.bn_scale) push_double(v);
        for (double v : l.bn_shift) push_double(v);
        for (double v : l.run_mean) push_double(v);
        for (double v : l.run_var) push_double(v);
    }
    return fnv1a64(bytes);
}

TransferReport transfer_evaluate(const EncoderParams& params, const Matrix& centroids,
                                 const std::set<int>& stress_set,
                                 const StageThresholds& thresholds, const Dataset& new_dataset,
                                 double stress_threshold) {
    const std::uint64_t hash_before = params_hash(params);

    TransferReport rep;
    const EmbeddingBatch emb = embed_dataset(params, new_dataset);
    const std::vector<int> labels = assign_to_centroids(emb.z, centroids);
    rep.validity = compute_validity(emb.z, labels);
    rep.cluster_mean_ndre = cluster_mean_ndre(new_dataset, labels);
    rep.stage_cluster_ari =
        adjusted_rand_index(labels, stage_labels(new_dataset, thresholds));

    std::vector<std::optional<double>> detections(new_dataset.size());
    std::vector<std::optional<double>> crossings(new_dataset.size());
    for (std::size_t i = 0; i < new_dataset.size(); ++i) {
        detections[i] = detection_day(params, new_dataset.series[i], centroids, stress_set);
        crossings[i] = crossing_day(new_dataset.series[i], stress_threshold);
    }
    rep.lead = lead_time_report(new_dataset, detections, crossings);

    rep.model_hash = params_hash(params);
    if (rep.model_hash != hash_before) {
        throw contract_error("transfer evaluation mutated the frozen model");
    }
    return rep;
}

}  // namespace eigencl
