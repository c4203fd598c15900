#pragma once

#include <cstdint>
#include <vector>

#include "eigencl/common.hpp"
#include "eigencl/core_data.hpp"

namespace eigencl {

// Dense RBF similarity matrix: entries[i][j] = exp(-gamma * ||x_i - x_j||^2)
// over raw NDRE series. Symmetric, unit diagonal, entrywise positive.
struct KernelMatrix {
    Matrix entries;
    double gamma = 0.0;

    std::size_t size() const { return entries.rows(); }
};

// Top-k eigenpairs, eigenvalues descending. Eigenvectors are stored as unit
// rows of a k x N matrix. `trace` is the exact trace of the source matrix,
// which gives explained-variance denominators without a full decomposition.
struct EigenBasis {
    std::vector<double> eigenvalues;
    Matrix eigenvectors;
    double trace = 0.0;

    std::size_t count() const { return eigenvalues.size(); }
};

// Entries of one sign-fixed eigenvector, used as per-patch stress proxies.
struct StressWeights {
    std::vector<double> w;
    std::size_t source_component = 0;
};

// Refuse to allocate dense kernels above this many patches.
inline constexpr std::size_t kMaxKernelPatches = 20000;

double median_pairwise_distance(const Dataset& dataset);

// Median-heuristic bandwidth: gamma = 1 / (2 * median^2).
double median_heuristic_gamma(const Dataset& dataset);

KernelMatrix rbf_matrix(const Dataset& dataset, double gamma);

struct TopkOptions {
    int max_iterations = 10000;       // per component
    double tolerance_factor = 1e-10;  // converged: residual <= factor * lambda_1
    double accept_factor = 1e-8;      // budget exhausted: accept below this, else fail
};

struct TopkResult {
    std::vector<double> values;
    Matrix vectors;  // k x N, unit rows
};

// Deflated power iteration for a dense symmetric matrix; components that
// stall on a near-degenerate pair escalate to a joint two-vector iteration
// with a closed-form 2x2 Ritz step.
TopkResult topk_symmetric(const Matrix& m, std::size_t k, const TopkOptions& opts = {});

EigenBasis eigen_decompose(const KernelMatrix& kernel, std::size_t k,
                           const TopkOptions& opts = {});

// Selected eigenvector with sign fixed so the entry sum is positive; an
// exactly-zero sum falls back to making the first nonzero entry positive.
// Component 0 of an entrywise-positive kernel is the all-positive Perron
// vector under this convention.
StressWeights stress_weights(const EigenBasis& basis, std::size_t component);

std::vector<double> explained_variance_ratio(const EigenBasis& basis);

double pearson_correlation(std::span<const double> a, std::span<const double> b);

// Pearson r between stress weights and per-patch mean NDRE.
double weight_ndre_correlation(const StressWeights& weights, const Dataset& dataset);

}  // namespace eigencl
