#pragma once

#include <span>
#include <vector>

#include "eigencl/common.hpp"

namespace eigencl {

struct LossHyper {
    double lambda = 4.0;  // push amplification
    double tau = 0.075;   // pull temperature
    double sigma = 0.5;   // affinity smoothing
    double margin = 0.2;  // push hinge margin

    void validate() const;
};

// Batch-normalized weights and the stress-affinity matrix built from them.
struct AffinityBatch {
    std::vector<double> w_hat;  // in [0, 1]
    Matrix S;                   // symmetric, unit diagonal, entries in (0, 1]
};

// Inverted min-max normalization: the largest raw weight maps to 0. A
// degenerate batch (max == min) maps everything to 0. Only absolute
// differences of w_hat feed the affinity, so the inversion is harmless;
// it matches the printed formula exactly.
std::vector<double> normalize_weights(std::span<const double> w_batch);

// S_ij = exp(-|w_hat_i - w_hat_j| / sigma)
AffinityBatch stress_affinity(std::span<const double> w_hat, double sigma);

// Pairwise cosine matrix for unit-norm rows (plain dot products).
Matrix cosine_matrix(const Matrix& z);

double pull_loss(const Matrix& sim, const Matrix& S, double tau);
double push_loss(const Matrix& sim, const Matrix& S, double lambda, double margin);

struct LossResult {
    double loss = 0.0;
    Matrix grad;  // dL/dz, same shape as z
};

// (pull + push) / (B (B - 1)) with the affinity matrix supplied directly.
// The affinity is treated as constant under differentiation. Shared by the
// eigen-guided loss and the cosine-ablation variant, which differ only in
// where S comes from.
LossResult weighted_contrastive_loss(const Matrix& z, const Matrix& S, const LossHyper& hyper);

LossResult eigencl_loss(const Matrix& z, std::span<const double> w_batch, const LossHyper& hyper);

struct NtxentResult {
    double loss = 0.0;
    Matrix grad_a;
    Matrix grad_b;
};

// Normalized-temperature cross entropy over 2B views; positives are the
// augmentation pairs (a_i, b_i).
NtxentResult ntxent_loss(const Matrix& z_a, const Matrix& z_b, double tau);

}  // namespace eigencl
