#include "eigencl/objective.hpp"

#include <algorithm>
#include <cmath>

namespace eigencl {

void LossHyper::validate() const {
    if (!(lambda > 0.0)) throw config_error("lambda must be positive");
    if (!(tau > 0.0)) throw config_error("tau must be positive");
    if (!(sigma > 0.0)) throw config_error("sigma must be positive");
    if (!(margin >= 0.0 && margin < 1.0)) throw config_error("margin must lie in [0, 1)");
}

std::vector<double> normalize_weights(std::span<const double> w_batch) {
    if (w_batch.size() < 2) throw contract_error("weight normalization needs a batch of >= 2");
    const auto [mn, mx] = std::minmax_element(w_batch.begin(), w_batch.end());
    std::vector<double> w_hat(w_batch.size(), 0.0);
    const double range = *mx - *mn;
    if (range > 0.0) {
        for (std::size_t i = 0; i < w_batch.size(); ++i) {
            w_hat[i] = (*mx - w_batch[i]) / range;
        }
    }
    return w_hat;
}

AffinityBatch stress_affinity(std::span<const double> w_hat, double sigma) {
    if (!(sigma > 0.0)) throw config_error("affinity sigma must be positive");
    const std::size_t b = w_hat.size();
    AffinityBatch out;
    out.w_hat.assign(w_hat.begin(), w_hat.end());
    out.S = Matrix(b, b);
    for (std::size_t i = 0; i < b; ++i) {
        out.S(i, i) = 1.0;
        for (std::size_t j = i + 1; j < b; ++j) {
            const double s = std::exp(-std::abs(w_hat[i] - w_hat[j]) / sigma);
            out.S(i, j) = s;
            out.S(j, i) = s;
        }
    }
    return out;
}

Matrix cosine_matrix(const Matrix& z) {
    const std::size_t b = z.rows();
    Matrix sim(b, b);
    for (std::size_t i = 0; i < b; ++i) {
        sim(i, i) = 1.0;
        for (std::size_t j = i + 1; j < b; ++j) {
            const double s = dot(z.row(i), z.row(j));
            sim(i, j) = s;
            sim(j, i) = s;
        }
    }
    return sim;
}

double pull_loss(const Matrix& sim, const Matrix& S, double tau) {
    if (!(tau > 0.0)) throw config_error("tau must be positive");
    const std::size_t b = sim.rows();
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            if (i == j) continue;
            loss += S(i, j) * std::log1p((1.0 - sim(i, j)) / tau);
        }
    }
    return loss;
}

double push_loss(const Matrix& sim, const Matrix& S, double lambda, double margin) {
    const std::size_t b = sim.rows();
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            if (i == j) continue;
            loss += lambda * (1.0 - S(i, j)) * std::max(0.0, sim(i, j) - margin);
        }
    }
    return loss;
}

LossResult weighted_contrastive_loss(const Matrix& z, const Matrix& S, const LossHyper& hyper) {
    hyper.validate();
    const std::size_t b = z.rows();
    if (b < 2) throw contract_error("contrastive loss needs a batch of >= 2");
    if (S.rows() != b || S.cols() != b) throw contract_error("affinity shape mismatch");
    for (std::size_t i = 0; i < b; ++i) {
        const double n = norm2(z.row(i));
        if (std::abs(n - 1.0) > 1e-4) {
            throw contract_error("embedding row " + std::to_string(i) +
                                 " is not unit norm (" + format_double(n) + ")");
        }
    }
    const Matrix sim = cosine_matrix(z);
    const double denom = static_cast<double>(b) * static_cast<double>(b - 1);

    LossResult out;
    out.loss = (pull_loss(sim, S, hyper.tau) +
                push_loss(sim, S, hyper.lambda, hyper.margin)) /
               denom;

    // Per-ordered-pair derivative wrt sim; both (i,j) and (j,i) contribute.
    Matrix g(b, b);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            if (i == j) continue;
            double d = -S(i, j) / (hyper.tau + 1.0 - sim(i, j));
            if (sim(i, j) > hyper.margin) d += hyper.lambda * (1.0 - S(i, j));
            g(i, j) = d / denom;
        }
    }
    out.grad = Matrix(b, z.cols());
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            if (i == j) continue;
            const double coef = g(i, j) + g(j, i);
            const auto zj = z.row(j);
            auto gi = out.grad.row(i);
            for (std::size_t d = 0; d < zj.size(); ++d) gi[d] += coef * zj[d];
        }
    }
    return out;
}

LossResult eigencl_loss(const Matrix& z, std::span<const double> w_batch, const LossHyper& hyper) {
    if (w_batch.size() != z.rows()) throw contract_error("weights/batch size mismatch");
    const auto w_hat = normalize_weights(w_batch);
    const AffinityBatch aff = stress_affinity(w_hat, hyper.sigma);
    return weighted_contrastive_loss(z, aff.S, hyper);
}

NtxentResult ntxent_loss(const Matrix& z_a, const Matrix& z_b, double tau) {
    if (!(tau > 0.0)) throw config_error("tau must be positive");
    const std::size_t b = z_a.rows();
    if (b < 2) throw contract_error("NT-Xent needs a batch of >= 2 pairs");
    if (z_b.rows() != b || z_b.cols() != z_a.cols()) {
        throw contract_error("paired view shapes do not match");
    }
    const std::size_t d = z_a.cols();
    const std::size_t n = 2 * b;

    // views stacked [a; b]; positive of k is (k + b) mod n
    Matrix u(n, d);
    for (std::size_t i = 0; i < b; ++i) {
        std::copy(z_a.row(i).begin(), z_a.row(i).end(), u.row(i).begin());
        std::copy(z_b.row(i).begin(), z_b.row(i).end(), u.row(b + i).begin());
    }
    const Matrix sim = cosine_matrix(u);

    Matrix e(n, n);
    std::vector<double> denom(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = 0; l < n; ++l) {
            if (k == l) continue;
            e(k, l) = std::exp(sim(k, l) / tau);
            denom[k] += e(k, l);
        }
    }

    NtxentResult out;
    double loss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t p = (k + b) % n;
        loss += -sim(k, p) / tau + std::log(denom[k]);
    }
    out.loss = loss / static_cast<double>(n);

    // dloss_k/dsim(k,l) = (softmax - 1{l = positive}) / tau, averaged over anchors
    Matrix g(n, n);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t p = (k + b) % n;
        for (std::size_t l = 0; l < n; ++l) {
            if (k == l) continue;
            double dv = e(k, l) / denom[k];
            if (l == p) dv -= 1.0;
            g(k, l) = dv / tau * inv_n;
        }
    }
    Matrix grad(n, d);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = 0; l < n; ++l) {
            if (k == l) continue;
            const double coef = g(k, l) + g(l, k);
            const auto ul = u.row(l);
            auto gk = grad.row(k);
            for (std::size_t c = 0; c < d; ++c) gk[c] += coef * ul[c];
        }
    }
    out.grad_a = Matrix(b, d);
    out.grad_b = Matrix(b, d);
    for (std::size_t i = 0; i < b; ++i) {
        std::copy(grad.row(i).begin(), grad.row(i).end(), out.grad_a.row(i).begin());
        std::copy(grad.row(b + i).begin(), grad.row(b + i).end(), out.grad_b.row(i).begin());
    }
    return out;
}

}  // namespace eigencl
