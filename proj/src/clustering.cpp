#include "eigencl/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace eigencl {

namespace {

double point_centroid_dist2(const Matrix& x, std::size_t i, const Matrix& c, std::size_t j) {
    return squared_distance(x.row(i), c.row(j));
}

Matrix kmeanspp_seed(const Matrix& x, std::size_t k, Rng& rng) {
    const std::size_t n = x.rows();
    Matrix centroids(k, x.cols());
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::size_t first = rng.index(n);
    std::copy(x.row(first).begin(), x.row(first).end(), centroids.row(0).begin());
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], point_centroid_dist2(x, i, centroids, c - 1));
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.index(n);  // all points coincide with chosen centroids
        }
        std::copy(x.row(pick).begin(), x.row(pick).end(), centroids.row(c).begin());
    }
    return centroids;
}

struct LloydResult {
    Matrix centroids;
    std::vector<int> labels;
    double inertia = 0.0;
};

LloydResult lloyd(const Matrix& x, Matrix centroids, int max_iter) {
    const std::size_t n = x.rows();
    const std::size_t k = centroids.rows();
    const std::size_t d = x.cols();
    std::vector<int> labels(n, -1);
    std::vector<std::size_t> counts(k);
    double inertia = 0.0;

    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = point_centroid_dist2(x, i, centroids, 0);
            for (std::size_t c = 1; c < k; ++c) {
                const double dist = point_centroid_dist2(x, i, centroids, c);
                if (dist < best_d) {
                    best_d = dist;
                    best = static_cast<int>(c);
                }
            }
            if (labels[i] != best) {
                labels[i] = best;
                changed = true;
            }
            inertia += best_d;
        }

        std::fill(counts.begin(), counts.end(), 0);
        for (int l : labels) ++counts[static_cast<std::size_t>(l)];

        // reseed any emptied cluster at the farthest point from its centroid
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double dist =
                    point_centroid_dist2(x, i, centroids, static_cast<std::size_t>(labels[i]));
                if (dist > far_d) {
                    far_d = dist;
                    far = i;
                }
            }
            std::copy(x.row(far).begin(), x.row(far).end(), centroids.row(c).begin());
            counts[static_cast<std::size_t>(labels[far])]--;
            labels[far] = static_cast<int>(c);
            counts[c] = 1;
            changed = true;
        }

        Matrix next(k, d);
        for (std::size_t i = 0; i < n; ++i) {
            const auto xr = x.row(i);
            auto cr = next.row(static_cast<std::size_t>(labels[i]));
            for (std::size_t j = 0; j < d; ++j) cr[j] += xr[j];
        }
        for (std::size_t c = 0; c < k; ++c) {
            auto cr = next.row(c);
            for (std::size_t j = 0; j < d; ++j) cr[j] /= static_cast<double>(counts[c]);
        }
        centroids = std::move(next);

        if (!changed) break;
    }

    // final inertia against the converged centroids
    inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        inertia += point_centroid_dist2(x, i, centroids, static_cast<std::size_t>(labels[i]));
    }
    return {std::move(centroids), std::move(labels), inertia};
}

std::size_t cluster_count(std::span<const int> labels) {
    int mx = -1;
    for (int l : labels) {
        if (l < 0) throw contract_error("negative cluster label");
        mx = std::max(mx, l);
    }
    return static_cast<std::size_t>(mx + 1);
}

// Compact to 0..k-1 in order of first appearance; drops unused ids.
std::vector<int> compact_labels(std::span<const int> labels, std::size_t& k_out) {
    std::vector<int> map(cluster_count(labels), -1);
    std::vector<int> out(labels.size());
    int next = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        int& m = map[static_cast<std::size_t>(labels[i])];
        if (m < 0) m = next++;
        out[i] = m;
    }
    k_out = static_cast<std::size_t>(next);
    return out;
}

Matrix cluster_means(const Matrix& x, std::span<const int> labels, std::size_t k,
                     std::vector<std::size_t>& counts) {
    Matrix c(k, x.cols());
    counts.assign(k, 0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const std::size_t l = static_cast<std::size_t>(labels[i]);
        ++counts[l];
        const auto xr = x.row(i);
        auto cr = c.row(l);
        for (std::size_t j = 0; j < x.cols(); ++j) cr[j] += xr[j];
    }
    for (std::size_t l = 0; l < k; ++l) {
        auto cr = c.row(l);
        for (std::size_t j = 0; j < x.cols(); ++j) cr[j] /= static_cast<double>(counts[l]);
    }
    return c;
}

}  // namespace

ClusterModel kmeans(const Matrix& x, std::size_t k, std::uint64_t seed, std::size_t restarts) {
    const std::size_t n = x.rows();
    if (k < 1) throw config_error("k must be >= 1");
    if (k > n) throw config_error("k = " + std::to_string(k) + " exceeds sample count " +
                                  std::to_string(n));
    if (restarts < 1) throw config_error("restarts must be >= 1");

    ClusterModel best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < restarts; ++r) {
        Rng rng(derive_seed(seed, r));
        LloydResult res = lloyd(x, kmeanspp_seed(x, k, rng), 300);
        if (res.inertia < best.inertia) {
            best.centroids = std::move(res.centroids);
            best.labels = std::move(res.labels);
            best.inertia = res.inertia;
        }
    }
    best.k = k;
    best.seed = seed;
    return best;
}

std::vector<int> assign_to_centroids(const Matrix& x, const Matrix& centroids) {
    if (x.cols() != centroids.cols()) {
        throw config_error("point dimension " + std::to_string(x.cols()) +
                           " does not match centroid dimension " +
                           std::to_string(centroids.cols()));
    }
    std::vector<int> labels(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        int best = 0;
        double best_d = point_centroid_dist2(x, i, centroids, 0);
        for (std::size_t c = 1; c < centroids.rows(); ++c) {
            const double d = point_centroid_dist2(x, i, centroids, c);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(c);
            }
        }
        labels[i] = best;
    }
    return labels;
}

ElbowResult elbow(const Matrix& x, std::size_t k_max, std::uint64_t seed, std::size_t restarts) {
    if (k_max < 3) throw config_error("elbow selection needs k_max >= 3");
    if (k_max > x.rows()) throw config_error("k_max exceeds sample count");
    ElbowResult out;
    out.inertia.resize(k_max);
    for (std::size_t k = 1; k <= k_max; ++k) {
        out.inertia[k - 1] = kmeans(x, k, derive_seed(seed, k), restarts).inertia;
    }
    double best_curv = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 2; k <= k_max - 1; ++k) {
        const double curv =
            out.inertia[k - 2] - 2.0 * out.inertia[k - 1] + out.inertia[k];
        if (curv > best_curv) {
            best_curv = curv;
            out.chosen_k = k;
        }
    }
    const double total_drop = out.inertia.front() - out.inertia.back();
    out.low_confidence = !(best_curv >= 0.05 * total_drop) || total_drop <= 0.0;
    return out;
}

double silhouette(const Matrix& x, std::span<const int> labels) {
    if (labels.size() != x.rows()) throw contract_error("labels/points size mismatch");
    std::size_t k = 0;
    const auto lab = compact_labels(labels, k);
    if (k < 2) throw numeric_error("silhouette undefined for a single cluster");
    const std::size_t n = x.rows();
    std::vector<std::size_t> counts(k, 0);
    for (int l : lab) ++counts[static_cast<std::size_t>(l)];

    double total = 0.0;
    std::vector<double> sums(k);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            sums[static_cast<std::size_t>(lab[j])] +=
                std::sqrt(squared_distance(x.row(i), x.row(j)));
        }
        const std::size_t own = static_cast<std::size_t>(lab[i]);
        if (counts[own] <= 1) continue;  // singleton contributes 0
        const double a = sums[own] / static_cast<double>(counts[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            if (c == own || counts[c] == 0) continue;
            b = std::min(b, sums[c] / static_cast<double>(counts[c]));
        }
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

double davies_bouldin(const Matrix& x, std::span<const int> labels) {
    if (labels.size() != x.rows()) throw contract_error("labels/points size mismatch");
    std::size_t k = 0;
    const auto lab = compact_labels(labels, k);
    if (k < 2) throw numeric_error("Davies-Bouldin undefined for a single cluster");
    std::vector<std::size_t> counts;
    const Matrix c = cluster_means(x, lab, k, counts);
    std::vector<double> scatter(k, 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const std::size_t l = static_cast<std::size_t>(lab[i]);
        scatter[l] += std::sqrt(squared_distance(x.row(i), c.row(l)));
    }
    for (std::size_t l = 0; l < k; ++l) scatter[l] /= static_cast<double>(counts[l]);

    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double worst = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (i == j) continue;
            const double dij = std::sqrt(squared_distance(c.row(i), c.row(j)));
            worst = dij > 0.0 ? std::max(worst, (scatter[i] + scatter[j]) / dij)
                              : std::numeric_limits<double>::infinity();
        }
        total += worst;
    }
    return total / static_cast<double>(k);
}

double calinski_harabasz(const Matrix& x, std::span<const int> labels) {
    if (labels.size() != x.rows()) throw contract_error("labels/points size mismatch");
    std::size_t k = 0;
    const auto lab = compact_labels(labels, k);
    const std::size_t n = x.rows();
    if (k < 2) throw numeric_error("Calinski-Harabasz undefined for a single cluster");
    if (k >= n) throw numeric_error("Calinski-Harabasz undefined for k == N");
    std::vector<std::size_t> counts;
    const Matrix c = cluster_means(x, lab, k, counts);
    std::vector<double> grand(x.cols(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto xr = x.row(i);
        for (std::size_t j = 0; j < x.cols(); ++j) grand[j] += xr[j];
    }
    for (double& g : grand) g /= static_cast<double>(n);

    double between = 0.0;
    for (std::size_t l = 0; l < k; ++l) {
        between += static_cast<double>(counts[l]) * squared_distance(c.row(l), grand);
    }
    double within = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        within += squared_distance(x.row(i), c.row(static_cast<std::size_t>(lab[i])));
    }
    if (within <= 0.0) return std::numeric_limits<double>::infinity();
    return (between / static_cast<double>(k - 1)) / (within / static_cast<double>(n - k));
}

ValidityReport compute_validity(const Matrix& x, std::span<const int> labels) {
    return {silhouette(x, labels), davies_bouldin(x, labels), calinski_harabasz(x, labels)};
}

double adjusted_rand_index(std::span<const int> labels_a, std::span<const int> labels_b) {
    if (labels_a.size() != labels_b.size()) throw contract_error("labelings differ in length");
    const std::size_t n = labels_a.size();
    if (n < 2) throw contract_error("ARI needs at least 2 samples");
    std::size_t ka = 0, kb = 0;
    const auto a = compact_labels(labels_a, ka);
    const auto b = compact_labels(labels_b, kb);

    Matrix cont(ka, kb);
    std::vector<double> rows(ka, 0.0), cols(kb, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        cont(static_cast<std::size_t>(a[i]), static_cast<std::size_t>(b[i])) += 1.0;
    }
    auto comb2 = [](double m) { return m * (m - 1.0) / 2.0; };
    double sum_ij = 0.0;
    for (std::size_t i = 0; i < ka; ++i) {
        for (std::size_t j = 0; j < kb; ++j) {
            sum_ij += comb2(cont(i, j));
            rows[i] += cont(i, j);
            cols[j] += cont(i, j);
        }
    }
    double sum_a = 0.0, sum_b = 0.0;
    for (double v : rows) sum_a += comb2(v);
    for (double v : cols) sum_b += comb2(v);
    const double all = comb2(static_cast<double>(n));
    const double expected = sum_a * sum_b / all;
    const double denom = 0.5 * (sum_a + sum_b) - expected;
    if (denom == 0.0) return 1.0;  // both partitions trivial and identical in structure
    return (sum_ij - expected) / denom;
}

AriInterval ari_bootstrap_ci(std::span<const int> labels_a, std::span<const int> labels_b,
                             std::size_t resamples, std::uint64_t seed) {
    if (resamples < 2) throw config_error("need at least 2 bootstrap resamples");
    AriInterval out;
    out.ari = adjusted_rand_index(labels_a, labels_b);
    const std::size_t n = labels_a.size();
    Rng rng(seed);
    std::vector<double> values(resamples);
    std::vector<int> ra(n), rb(n);
    for (std::size_t r = 0; r < resamples; ++r) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t idx = rng.index(n);
            ra[i] = labels_a[idx];
            rb[i] = labels_b[idx];
        }
        values[r] = adjusted_rand_index(ra, rb);
    }
    std::sort(values.begin(), values.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(resamples - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, resamples - 1);
        const double frac = pos - static_cast<double>(lo);
        return values[lo] * (1.0 - frac) + values[hi] * frac;
    };
    out.lo = quantile(0.025);
    out.hi = quantile(0.975);
    return out;
}

}  // namespace eigencl
