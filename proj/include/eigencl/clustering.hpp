#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "eigencl/common.hpp"

namespace eigencl {

struct ClusterModel {
    Matrix centroids;  // k x d
    std::vector<int> labels;
    double inertia = 0.0;
    std::size_t k = 0;
    std::uint64_t seed = 0;
};

struct ValidityReport {
    double silhouette = 0.0;
    double davies_bouldin = 0.0;
    double calinski_harabasz = 0.0;
};

// Lloyd iterations from k-means++ seeding, best of `restarts` runs by
// inertia. An emptied cluster is reseeded at the point farthest from its
// assigned centroid. Deterministic for a fixed seed.
ClusterModel kmeans(const Matrix& x, std::size_t k, std::uint64_t seed,
                    std::size_t restarts = 10);

std::vector<int> assign_to_centroids(const Matrix& x, const Matrix& centroids);

struct ElbowResult {
    std::size_t chosen_k = 0;
    std::vector<double> inertia;  // inertia[i] for k = i + 1
    bool low_confidence = false;  // curvature peak under 5% of the total drop
};

// k maximizing the second difference of the inertia curve over k = 1..k_max.
ElbowResult elbow(const Matrix& x, std::size_t k_max, std::uint64_t seed,
                  std::size_t restarts = 10);

double silhouette(const Matrix& x, std::span<const int> labels);
double davies_bouldin(const Matrix& x, std::span<const int> labels);
double calinski_harabasz(const Matrix& x, std::span<const int> labels);
ValidityReport compute_validity(const Matrix& x, std::span<const int> labels);

double adjusted_rand_index(std::span<const int> labels_a, std::span<const int> labels_b);

struct AriInterval {
    double ari = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

// Percentile bootstrap (2.5 / 97.5) over sample indices.
AriInterval ari_bootstrap_ci(std::span<const int> labels_a, std::span<const int> labels_b,
                             std::size_t resamples, std::uint64_t seed);

}  // namespace eigencl
