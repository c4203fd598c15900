#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace oracle {

using eigencl::Matrix;

namespace {

double dist(const Matrix& x, std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
        const double d = x(i, c) - x(j, c);
        s += d * d;
    }
    return std::sqrt(s);
}

std::size_t n_clusters(std::span<const int> labels) {
    int mx = -1;
    for (int l : labels) mx = std::max(mx, l);
    return static_cast<std::size_t>(mx + 1);
}

}  // namespace

double brute_silhouette(const Matrix& x, std::span<const int> labels) {
    const std::size_t n = x.rows();
    const std::size_t k = n_clusters(labels);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> sum(k, 0.0);
        std::vector<std::size_t> cnt(k, 0);
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            sum[static_cast<std::size_t>(labels[j])] += dist(x, i, j);
            ++cnt[static_cast<std::size_t>(labels[j])];
        }
        const std::size_t own = static_cast<std::size_t>(labels[i]);
        if (cnt[own] == 0) continue;  // singleton: s = 0
        const double a = sum[own] / static_cast<double>(cnt[own]);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            if (c == own || cnt[c] + (c == own ? 1 : 0) == 0) continue;
            if (cnt[c] == 0) continue;
            b = std::min(b, sum[c] / static_cast<double>(cnt[c]));
        }
        const double m = std::max(a, b);
        total += m > 0.0 ? (b - a) / m : 0.0;
    }
    return total / static_cast<double>(n);
}

double brute_davies_bouldin(const Matrix& x, std::span<const int> labels) {
    const std::size_t n = x.rows();
    const std::size_t k = n_clusters(labels);
    const std::size_t d = x.cols();
    std::vector<std::vector<double>> centroid(k, std::vector<double>(d, 0.0));
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = static_cast<std::size_t>(labels[i]);
        ++cnt[c];
        for (std::size_t j = 0; j < d; ++j) centroid[c][j] += x(i, j);
    }
    for (std::size_t c = 0; c < k; ++c) {
        for (double& v : centroid[c]) v /= static_cast<double>(cnt[c]);
    }
    std::vector<double> s(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = static_cast<std::size_t>(labels[i]);
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = x(i, j) - centroid[c][j];
            acc += diff * diff;
        }
        s[c] += std::sqrt(acc);
    }
    for (std::size_t c = 0; c < k; ++c) s[c] /= static_cast<double>(cnt[c]);

    double dbi = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double worst = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (i == j) continue;
            double dc = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = centroid[i][c] - centroid[j][c];
                dc += diff * diff;
            }
            dc = std::sqrt(dc);
            worst = dc > 0.0 ? std::max(worst, (s[i] + s[j]) / dc)
                             : std::numeric_limits<double>::infinity();
        }
        dbi += worst;
    }
    return dbi / static_cast<double>(k);
}

double brute_calinski_harabasz(const Matrix& x, std::span<const int> labels) {
    const std::size_t n = x.rows();
    const std::size_t k = n_clusters(labels);
    const std::size_t d = x.cols();
    std::vector<std::vector<double>> centroid(k, std::vector<double>(d, 0.0));
    std::vector<double> grand(d, 0.0);
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = static_cast<std::size_t>(labels[i]);
        ++cnt[c];
        for (std::size_t j = 0; j < d; ++j) {
            centroid[c][j] += x(i, j);
            grand[j] += x(i, j);
        }
    }
    for (std::size_t c = 0; c < k; ++c) {
        for (double& v : centroid[c]) v /= static_cast<double>(cnt[c]);
    }
    for (double& v : grand) v /= static_cast<double>(n);

    double between = 0.0, within = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = centroid[c][j] - grand[j];
            acc += diff * diff;
        }
        between += static_cast<double>(cnt[c]) * acc;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = static_cast<std::size_t>(labels[i]);
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = x(i, j) - centroid[c][j];
            within += diff * diff;
        }
    }
    if (within <= 0.0) return std::numeric_limits<double>::infinity();
    return (between / static_cast<double>(k - 1)) /
           (within / static_cast<double>(n - k));
}

double brute_ari(std::span<const int> a, std::span<const int> b) {
    const std::size_t n = a.size();
    // direct pair counting
    double n11 = 0.0, n00 = 0.0, n10 = 0.0, n01 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool sa = a[i] == a[j];
            const bool sb = b[i] == b[j];
            if (sa && sb) n11 += 1.0;
            else if (!sa && !sb) n00 += 1.0;
            else if (sa) n10 += 1.0;
            else n01 += 1.0;
        }
    }
    const double total = n11 + n00 + n10 + n01;
    const double expected = (n11 + n10) * (n11 + n01) / total;
    const double maxi = 0.5 * ((n11 + n10) + (n11 + n01));
    if (maxi - expected == 0.0) return 1.0;
    return (n11 - expected) / (maxi - expected);
}

EigenPair jacobi_eigen(Matrix a) {
    const std::size_t n = a.rows();
    std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;

    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        }
        if (off < 1e-26) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t =
                    (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a(i, p), aiq = a(i, q);
                    a(i, p) = c * aip - s * aiq;
                    a(i, q) = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double api = a(p, i), aqi = a(q, i);
                    a(p, i) = c * api - s * aqi;
                    a(q, i) = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = v[i][p], viq = v[i][q];
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
    EigenPair out;
    for (std::size_t r = 0; r < n; ++r) {
        out.values.push_back(a(order[r], order[r]));
        std::vector<double> vec(n);
        for (std::size_t i = 0; i < n; ++i) vec[i] = v[i][order[r]];
        out.vectors.push_back(std::move(vec));
    }
    return out;
}

EigenPair eigen_2x2(double a00, double a01, double a11) {
    const double mean = 0.5 * (a00 + a11);
    const double disc = std::sqrt(0.25 * (a00 - a11) * (a00 - a11) + a01 * a01);
    EigenPair out;
    out.values = {mean + disc, mean - disc};
    for (double lam : out.values) {
        double vx, vy;
        if (std::abs(a01) > 1e-300) {
            vx = a01;
            vy = lam - a00;
        } else {
            vx = lam == a00 ? 1.0 : 0.0;
            vy = lam == a00 ? 0.0 : 1.0;
        }
        const double nrm = std::hypot(vx, vy);
        out.vectors.push_back({vx / nrm, vy / nrm});
    }
    return out;
}

double brute_pearson(std::span<const double> a, std::span<const double> b) {
    const double n = static_cast<double>(a.size());
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
    }
    const double ma = sa / n, mb = sb / n;
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    return num / std::sqrt(da * db);
}

eigencl::Dataset random_dataset(std::size_t n, std::size_t t, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    eigencl::Dataset ds;
    for (std::size_t i = 0; i < n; ++i) {
        eigencl::NdreSeries s;
        s.patch_id = "r" + std::to_string(i);
        for (std::size_t d = 0; d < t; ++d) {
            s.dates.push_back(static_cast<int>(d * 10));
            s.values.push_back(uni(eng));
        }
        ds.series.push_back(std::move(s));
    }
    return ds;
}

eigencl::Matrix random_orthogonal(std::size_t d, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix q(d, d);
    for (std::size_t r = 0; r < d; ++r) {
        for (;;) {
            for (std::size_t c = 0; c < d; ++c) q(r, c) = gauss(eng);
            for (std::size_t p = 0; p < r; ++p) {
                double coef = 0.0;
                for (std::size_t c = 0; c < d; ++c) coef += q(r, c) * q(p, c);
                for (std::size_t c = 0; c < d; ++c) q(r, c) -= coef * q(p, c);
            }
            double n = 0.0;
            for (std::size_t c = 0; c < d; ++c) n += q(r, c) * q(r, c);
            n = std::sqrt(n);
            if (n > 1e-8) {
                for (std::size_t c = 0; c < d; ++c) q(r, c) /= n;
                break;
            }
        }
    }
    return q;
}

bool grad_close(double analytic, double numeric, double rel_tol, double abs_tol) {
    const double diff = std::abs(analytic - numeric);
    if (diff <= abs_tol) return true;
    return diff <= rel_tol * std::max(std::abs(analytic), std::abs(numeric));
}

}  // namespace oracle
