#include "eigencl/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace eigencl {

double median_pairwise_distance(const Dataset& dataset) {
    const std::size_t n = dataset.size();
    if (n < 2) throw contract_error("median distance needs at least 2 series");
    // Exact median for moderate N; deterministic strided subsample beyond.
    const std::size_t total = n * (n - 1) / 2;
    const std::size_t cap = 8u * 1000 * 1000;
    const std::size_t stride = total > cap ? (total + cap - 1) / cap : 1;
    std::vector<double> d;
    d.reserve(total / stride + 1);
    std::size_t counter = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j, ++counter) {
            if (counter % stride != 0) continue;
            d.push_back(std::sqrt(
                squared_distance(dataset.series[i].values, dataset.series[j].values)));
        }
    }
    std::sort(d.begin(), d.end());
    const std::size_t m = d.size();
    return (m % 2 == 1) ? d[m / 2] : 0.5 * (d[m / 2 - 1] + d[m / 2]);
}

double median_heuristic_gamma(const Dataset& dataset) {
    const double med = median_pairwise_distance(dataset);
    if (med <= 0.0) {
        throw numeric_error("median pairwise distance is zero; gamma undefined "
                            "(all series identical?)");
    }
    return 1.0 / (2.0 * med * med);
}

KernelMatrix rbf_matrix(const Dataset& dataset, double gamma) {
    if (!(gamma > 0.0)) throw config_error("RBF gamma must be positive");
    const std::size_t n = dataset.size();
    if (n < 2) throw contract_error("kernel needs at least 2 series");
    if (n > kMaxKernelPatches) {
        throw config_error("dataset has " + std::to_string(n) +
                           " patches; dense kernel is limited to " +
                           std::to_string(kMaxKernelPatches));
    }
    KernelMatrix k;
    k.gamma = gamma;
    k.entries = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        k.entries(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = std::exp(
                -gamma * squared_distance(dataset.series[i].values, dataset.series[j].values));
            k.entries(i, j) = v;
            k.entries(j, i) = v;
        }
    }
    return k;
}

namespace {

// Removes the components of `v` along previously locked rows of `basis`.
void project_out(std::span<double> v, const Matrix& basis, std::size_t count) {
    for (std::size_t c = 0; c < count; ++c) {
        const auto row = basis.row(c);
        const double coef = dot(v, row);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= coef * row[i];
    }
}

bool normalize(std::span<double> v) {
    const double n = norm2(v);
    if (n < 1e-300) return false;
    for (double& x : v) x /= n;
    return true;
}

struct Ritz2 {
    double hi = 0.0, lo = 0.0;  // eigenvalues of the 2x2 section
    double c = 1.0, s = 0.0;    // hi-vector = c*u0 + s*u1
};

Ritz2 solve_2x2(double a, double b, double off) {
    Ritz2 r;
    const double mean = 0.5 * (a + b);
    const double half = 0.5 * (a - b);
    const double disc = std::sqrt(half * half + off * off);
    r.hi = mean + disc;
    r.lo = mean - disc;
    double vx, vy;  // (A - hi*I) null vector, better-conditioned branch
    if (std::abs(r.hi - b) >= std::abs(r.hi - a)) {
        vx = r.hi - b;
        vy = off;
    } else {
        vx = off;
        vy = r.hi - a;
    }
    const double n = std::hypot(vx, vy);
    if (n < 1e-300) {
        r.c = 1.0;
        r.s = 0.0;
    } else {
        r.c = vx / n;
        r.s = vy / n;
    }
    return r;
}

}  // namespace

TopkResult topk_symmetric(const Matrix& m, std::size_t k, const TopkOptions& opts) {
    const std::size_t n = m.rows();
    if (m.cols() != n) throw contract_error("topk_symmetric needs a square matrix");
    if (k < 1 || k > n) throw config_error("requested component count out of range");

    TopkResult out;
    out.values.assign(k, 0.0);
    out.vectors = Matrix(k, n);

    Rng rng(0x51e5u);  // fixed internal seed keeps the decomposition deterministic
    std::vector<double> v(n), kv(n), u(n), ku(n), y0(n), y1(n);
    double lambda_ref = 0.0;

    auto random_direction = [&](std::span<double> x, std::size_t locked) {
        for (int attempt = 0; attempt < 8; ++attempt) {
            for (double& e : x) e = rng.uniform(-1.0, 1.0);
            project_out(x, out.vectors, locked);
            if (normalize(x)) return;
        }
        throw numeric_error("could not draw a direction outside the locked subspace");
    };

    std::size_t c = 0;
    while (c < k) {
        random_direction(v, c);

        double lambda = 0.0;
        double residual = std::numeric_limits<double>::infinity();
        double prev_residual = std::numeric_limits<double>::infinity();
        bool locked = false;
        int stall = 0;

        for (int iter = 0; iter < opts.max_iterations; ++iter) {
            matvec(m, v, kv);
            project_out(kv, out.vectors, c);
            lambda = dot(v, kv);
            double res2 = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = kv[i] - lambda * v[i];
                res2 += d * d;
            }
            residual = std::sqrt(res2);
            const double ref = (c == 0) ? std::max(std::abs(lambda), 1e-300) : lambda_ref;
            if (residual <= opts.tolerance_factor * ref) {
                locked = true;
                break;
            }
            if (norm2(kv) < 1e-300) {
                // deflated operator annihilates v: exact zero eigenpair
                lambda = 0.0;
                residual = 0.0;
                locked = true;
                break;
            }
            std::copy(kv.begin(), kv.end(), v.begin());
            normalize(v);
            if ((iter + 1) % 100 == 0) {
                if (residual > 0.5 * prev_residual) ++stall;
                prev_residual = residual;
                if (stall >= 2) break;  // near-degenerate pair: escalate
            }
        }

        bool have_pair = false;
        double pair_lo = 0.0;

        if (!locked) {
            // Joint two-vector iteration with a closed-form 2x2 Ritz step;
            // resolves eigenvalue pairs too close for single-vector power
            // iteration to separate.
            random_direction(u, c);
            const double coef0 = dot(u, v);
            for (std::size_t i = 0; i < n; ++i) u[i] -= coef0 * v[i];
            if (!normalize(u)) random_direction(u, c);

            for (int iter = 0; iter < opts.max_iterations; ++iter) {
                matvec(m, v, kv);
                project_out(kv, out.vectors, c);
                matvec(m, u, ku);
                project_out(ku, out.vectors, c);
                const double h00 = dot(v, kv);
                const double h11 = dot(u, ku);
                const double h01 = 0.5 * (dot(v, ku) + dot(u, kv));
                const Ritz2 rz = solve_2x2(h00, h11, h01);
                double res_hi = 0.0, res_lo = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    y0[i] = rz.c * v[i] + rz.s * u[i];
                    y1[i] = -rz.s * v[i] + rz.c * u[i];
                    const double d0 = (rz.c * kv[i] + rz.s * ku[i]) - rz.hi * y0[i];
                    const double d1 = (-rz.s * kv[i] + rz.c * ku[i]) - rz.lo * y1[i];
                    res_hi += d0 * d0;
                    res_lo += d1 * d1;
                }
                res_hi = std::sqrt(res_hi);
                res_lo = std::sqrt(res_lo);
                lambda = rz.hi;
                residual = res_hi;
                std::copy(y0.begin(), y0.end(), v.begin());
                const double ref = (c == 0) ? std::max(std::abs(rz.hi), 1e-300) : lambda_ref;
                const bool hi_ok = res_hi <= opts.tolerance_factor * ref;
                const bool lo_ok = res_lo <= opts.tolerance_factor * ref;
                if (hi_ok && (c + 1 >= k || lo_ok)) {
                    locked = true;
                    if (c + 1 < k) {
                        have_pair = true;
                        pair_lo = rz.lo;
                    }
                    break;
                }
                // subspace step: [v, u] <- orthonormalized images
                std::copy(kv.begin(), kv.end(), v.begin());
                project_out(v, out.vectors, c);
                if (!normalize(v)) random_direction(v, c);
                std::copy(ku.begin(), ku.end(), u.begin());
                project_out(u, out.vectors, c);
                const double coef = dot(u, v);
                for (std::size_t i = 0; i < n; ++i) u[i] -= coef * v[i];
                if (!normalize(u)) {
                    random_direction(u, c);
                    const double c2 = dot(u, v);
                    for (std::size_t i = 0; i < n; ++i) u[i] -= c2 * v[i];
                    normalize(u);
                }
            }
        }

        if (!locked) {
            const double ref = std::max(lambda_ref, std::abs(lambda));
            if (residual > opts.accept_factor * std::max(ref, 1e-300)) {
                throw numeric_error("eigen decomposition did not converge for component " +
                                    std::to_string(c) + " within budget; residual " +
                                    format_double(residual));
            }
        }

        out.values[c] = lambda;
        std::copy(v.begin(), v.end(), out.vectors.row(c).begin());
        if (c == 0) lambda_ref = std::max(std::abs(lambda), 1e-300);
        ++c;
        if (have_pair) {
            out.values[c] = pair_lo;
            std::copy(y1.begin(), y1.end(), out.vectors.row(c).begin());
            ++c;
        }
    }

    // near-ties can land microscopically out of order; restore descending
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return out.values[a] > out.values[b]; });
    TopkResult sorted;
    sorted.values.resize(k);
    sorted.vectors = Matrix(k, n);
    for (std::size_t i = 0; i < k; ++i) {
        sorted.values[i] = out.values[order[i]];
        const auto src = out.vectors.row(order[i]);
        std::copy(src.begin(), src.end(), sorted.vectors.row(i).begin());
    }
    return sorted;
}

EigenBasis eigen_decompose(const KernelMatrix& kernel, std::size_t k, const TopkOptions& opts) {
    const std::size_t n = kernel.size();
    if (k < 1 || k > n) throw config_error("k must be in [1, N]");
    TopkResult top = topk_symmetric(kernel.entries, k, opts);
    EigenBasis basis;
    basis.eigenvalues = std::move(top.values);
    basis.eigenvectors = std::move(top.vectors);
    basis.trace = 0.0;
    for (std::size_t i = 0; i < n; ++i) basis.trace += kernel.entries(i, i);
    if (!basis.eigenvalues.empty()) {
        const double floor = -1e-8 * std::max(basis.eigenvalues.front(), 0.0);
        if (basis.eigenvalues.back() < floor) {
            throw numeric_error("kernel is not positive semidefinite within tolerance "
                                "(lambda_min = " +
                                format_double(basis.eigenvalues.back()) + ")");
        }
    }
    return basis;
}

StressWeights stress_weights(const EigenBasis& basis, std::size_t component) {
    if (component >= basis.count()) {
        throw config_error("component " + std::to_string(component) + " not in basis (k = " +
                           std::to_string(basis.count()) + ")");
    }
    StressWeights sw;
    sw.source_component = component;
    const auto row = basis.eigenvectors.row(component);
    sw.w.assign(row.begin(), row.end());
    double sum = 0.0, scale = 0.0;
    for (double x : sw.w) {
        sum += x;
        scale += std::abs(x);
    }
    bool flip = false;
    if (std::abs(sum) > 1e-12 * std::max(scale, 1.0)) {
        flip = sum < 0.0;
    } else {
        for (double x : sw.w) {
            if (std::abs(x) > 1e-12) {
                flip = x < 0.0;
                break;
            }
        }
    }
    if (flip) {
        for (double& x : sw.w) x = -x;
    }
    return sw;
}

std::vector<double> explained_variance_ratio(const EigenBasis& basis) {
    if (!(basis.trace > 0.0)) throw contract_error("explained variance needs positive trace");
    std::vector<double> r(basis.count());
    for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] = std::clamp(basis.eigenvalues[i] / basis.trace, 0.0, 1.0);
    }
    return r;
}

double pearson_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw contract_error("correlation needs two equal-length sequences (n >= 2)");
    }
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) {
        throw numeric_error("correlation undefined: zero variance");
    }
    return sab / std::sqrt(saa * sbb);
}

double weight_ndre_correlation(const StressWeights& weights, const Dataset& dataset) {
    if (weights.w.size() != dataset.size()) {
        throw contract_error("weights/dataset size mismatch");
    }
    if (dataset.size() < 3) throw contract_error("correlation needs at least 3 patches");
    const auto means = dataset.mean_ndre();
    return pearson_correlation(weights.w, means);
}

}  // namespace eigencl
