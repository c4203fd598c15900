#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "eigencl/objective.hpp"
#include "oracles.hpp"

using namespace eigencl;

namespace {

Matrix unit_rows(std::size_t b, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    Matrix z(b, d);
    for (std::size_t i = 0; i < b; ++i) {
        double n = 0.0;
        do {
            n = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                z(i, j) = rng.uniform(-1.0, 1.0);
                n += z(i, j) * z(i, j);
            }
            n = std::sqrt(n);
        } while (n < 1e-6);
        for (std::size_t j = 0; j < d; ++j) z(i, j) /= n;
    }
    return z;
}

Matrix pair_sim(double s) {
    Matrix m(2, 2);
    m(0, 0) = m(1, 1) = 1.0;
    m(0, 1) = m(1, 0) = s;
    return m;
}

Matrix constant(std::size_t b, double v) {
    Matrix m(b, b, v);
    for (std::size_t i = 0; i < b; ++i) m(i, i) = 1.0;
    return m;
}

}  // namespace

TEST_SUITE("objective") {

TEST_CASE("weight normalization is the inverted min-max") {
    const auto a = normalize_weights(std::vector<double>{1.0, 2.0, 3.0});
    CHECK(a[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(a[1] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(a[2] == doctest::Approx(0.0).epsilon(1e-15));

    const auto b = normalize_weights(std::vector<double>{5.0, 5.0, 5.0});
    for (double v : b) CHECK(v == 0.0);

    const auto c = normalize_weights(std::vector<double>{0.0, 10.0});
    CHECK(c[0] == doctest::Approx(1.0));
    CHECK(c[1] == doctest::Approx(0.0));
}

TEST_CASE("stress affinity decay") {
    SUBCASE("zero difference gives similarity one") {
        const auto aff = stress_affinity(std::vector<double>{0.4, 0.4}, 0.5);
        CHECK(aff.S(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(aff.S(0, 0) == 1.0);
    }
    SUBCASE("half point at sigma 0.5") {
        const auto aff = stress_affinity(std::vector<double>{1.0, 0.5}, 0.5);
        CHECK(aff.S(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    }
    SUBCASE("extreme dissimilarity regime") {
        const auto aff = stress_affinity(std::vector<double>{1.0, 0.0}, 0.1);
        CHECK(aff.S(0, 1) == doctest::Approx(std::exp(-10.0)).epsilon(1e-12));
    }
    SUBCASE("matrix is symmetric with unit diagonal") {
        const auto aff = stress_affinity(std::vector<double>{0.1, 0.7, 0.3}, 0.4);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(aff.S(i, i) == 1.0);
            for (std::size_t j = 0; j < 3; ++j) {
                CHECK(aff.S(i, j) == aff.S(j, i));
                CHECK(aff.S(i, j) > 0.0);
                CHECK(aff.S(i, j) <= 1.0);
            }
        }
    }
}

TEST_CASE("pull loss") {
    CHECK(pull_loss(pair_sim(1.0), constant(2, 1.0), 0.075) == doctest::Approx(0.0));
    // single pair, both ordered directions: 2 log 2
    CHECK(pull_loss(pair_sim(0.925), constant(2, 1.0), 0.075) ==
          doctest::Approx(1.3862943611198906).epsilon(1e-12));
    // tau -> infinity kills the term
    CHECK(pull_loss(pair_sim(-0.5), constant(2, 1.0), 1e12) ==
          doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("push loss") {
    CHECK(push_loss(pair_sim(0.2), constant(2, 0.0), 4.0, 0.2) == doctest::Approx(0.0));
    CHECK(push_loss(pair_sim(0.5), constant(2, 0.0), 4.0, 0.2) ==
          doctest::Approx(2.4).epsilon(1e-12));
    CHECK(push_loss(pair_sim(0.9), constant(2, 1.0), 4.0, 0.2) == doctest::Approx(0.0));
}

TEST_CASE("eigencl loss fixed points and hand values") {
    LossHyper hyper;  // lambda 4, tau 0.075, sigma 0.5, m 0.2

    SUBCASE("identical embeddings and weights give zero") {
        Matrix z(2, 3);
        z(0, 0) = z(1, 0) = 1.0;
        const LossResult res = eigencl_loss(z, std::vector<double>{0.3, 0.3}, hyper);
        CHECK(res.loss == doctest::Approx(0.0).epsilon(1e-15));
    }

    SUBCASE("orthogonal pair, hand-derived value") {
        Matrix z(2, 4);
        z(0, 0) = 1.0;
        z(1, 1) = 1.0;
        const LossResult res = eigencl_loss(z, std::vector<double>{0.0, 10.0}, hyper);
        // 2 * exp(-2) * log(1 + 1/0.075) / 2
        CHECK(res.loss == doctest::Approx(0.3603420777128468).epsilon(1e-12));
    }

    SUBCASE("non-normalized rows are rejected") {
        Matrix z(2, 3);
        z(0, 0) = 2.0;
        z(1, 1) = 1.0;
        CHECK_THROWS_AS(eigencl_loss(z, std::vector<double>{0.1, 0.2}, hyper), contract_error);
    }
}

TEST_CASE("loss is nonnegative and zero only at the collapsed fixed point") {
    LossHyper hyper;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const std::size_t b = 2 + seed % 5;
        const Matrix z = unit_rows(b, 6, 1000 + seed);
        std::vector<double> w(b);
        Rng rng(2000 + seed);
        for (double& v : w) v = rng.uniform(0.0, 1.0);
        const LossResult res = eigencl_loss(z, w, hyper);
        CHECK(res.loss >= 0.0);
        // random distinct embeddings: some pull term is active
        CHECK(res.loss > 0.0);
    }
}

TEST_CASE("loss is invariant to simultaneous permutation") {
    LossHyper hyper;
    const std::size_t b = 6;
    const Matrix z = unit_rows(b, 5, 42);
    std::vector<double> w = {0.9, 0.3, 0.5, 0.1, 0.7, 0.2};
    const double base = eigencl_loss(z, w, hyper).loss;

    const std::vector<std::size_t> perm = {4, 2, 0, 5, 1, 3};
    Matrix zp(b, 5);
    std::vector<double> wp(b);
    for (std::size_t i = 0; i < b; ++i) {
        std::copy(z.row(perm[i]).begin(), z.row(perm[i]).end(), zp.row(i).begin());
        wp[i] = w[perm[i]];
    }
    CHECK(eigencl_loss(zp, wp, hyper).loss == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("loss is invariant to global rotations of the embedding space") {
    LossHyper hyper;
    const std::size_t b = 5, d = 6;
    const Matrix z = unit_rows(b, d, 77);
    std::vector<double> w = {0.1, 0.9, 0.4, 0.6, 0.2};
    const double base = eigencl_loss(z, w, hyper).loss;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Matrix q = oracle::random_orthogonal(d, 300 + seed);
        Matrix zr(b, d);
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                double acc = 0.0;
                for (std::size_t c = 0; c < d; ++c) acc += z(i, c) * q(j, c);
                zr(i, j) = acc;
            }
        }
        CHECK(eigencl_loss(zr, w, hyper).loss == doctest::Approx(base).epsilon(1e-10));
    }
}

TEST_CASE("pull decreases and push increases in similarity") {
    // monotonicity on a single pair
    for (double s = -0.8; s < 0.9; s += 0.1) {
        const double p1 = pull_loss(pair_sim(s), constant(2, 0.7), 0.075);
        const double p2 = pull_loss(pair_sim(s + 0.05), constant(2, 0.7), 0.075);
        CHECK(p2 < p1);
    }
    for (double s = 0.25; s < 0.9; s += 0.1) {
        const double p1 = push_loss(pair_sim(s), constant(2, 0.6), 4.0, 0.2);
        const double p2 = push_loss(pair_sim(s + 0.05), constant(2, 0.6), 4.0, 0.2);
        CHECK(p2 > p1);
    }
}

TEST_CASE("analytic gradient matches finite differences over random batches") {
    LossHyper hyper;
    std::size_t failures = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const std::size_t b = 2 + seed % 5;
        const std::size_t d = 3 + seed % 6;
        Matrix z = unit_rows(b, d, 5000 + seed);
        std::vector<double> w(b);
        Rng rng(6000 + seed);
        for (double& v : w) v = rng.uniform(0.0, 1.0);

        const LossResult res = eigencl_loss(z, w, hyper);
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                const double fd = oracle::central_diff(
                    [&] { return eigencl_loss(z, w, hyper).loss; }, z(i, j));
                if (!oracle::grad_close(res.grad(i, j), fd, 1e-5, 1e-9)) ++failures;
            }
        }
    }
    CHECK(failures == 0);
}

TEST_CASE("dedicated B=4 d=8 gradient check") {
    LossHyper hyper;
    Matrix z = unit_rows(4, 8, 321);
    std::vector<double> w = {0.2, 0.9, 0.5, 0.7};
    const LossResult res = eigencl_loss(z, w, hyper);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 8; ++j) {
            const double fd =
                oracle::central_diff([&] { return eigencl_loss(z, w, hyper).loss; }, z(i, j));
            CHECK(oracle::grad_close(res.grad(i, j), fd, 1e-5, 1e-9));
        }
    }
}

TEST_CASE("ntxent baseline") {
    SUBCASE("single pair is rejected") {
        Matrix a(1, 3), b(1, 3);
        a(0, 0) = 1.0;
        b(0, 0) = 1.0;
        CHECK_THROWS_AS(ntxent_loss(a, b, 0.5), contract_error);
    }
    SUBCASE("hand-evaluated softmax value") {
        // positives identical, all negatives orthogonal, tau = 0.5, B = 2
        Matrix a(2, 2), b(2, 2);
        a(0, 0) = 1.0;
        a(1, 1) = 1.0;
        b = a;
        const NtxentResult res = ntxent_loss(a, b, 0.5);
        CHECK(res.loss == doctest::Approx(0.23954476622188450).epsilon(1e-12));
    }
    SUBCASE("pair order symmetry") {
        const Matrix a = unit_rows(4, 5, 11);
        const Matrix b = unit_rows(4, 5, 12);
        CHECK(ntxent_loss(a, b, 0.3).loss ==
              doctest::Approx(ntxent_loss(b, a, 0.3).loss).epsilon(1e-12));
    }
    SUBCASE("gradients match finite differences") {
        std::size_t failures = 0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Matrix a = unit_rows(3, 4, 800 + seed);
            Matrix b = unit_rows(3, 4, 900 + seed);
            const NtxentResult res = ntxent_loss(a, b, 0.2);
            for (std::size_t i = 0; i < 3; ++i) {
                for (std::size_t j = 0; j < 4; ++j) {
                    const double fd_a = oracle::central_diff(
                        [&] { return ntxent_loss(a, b, 0.2).loss; }, a(i, j));
                    const double fd_b = oracle::central_diff(
                        [&] { return ntxent_loss(a, b, 0.2).loss; }, b(i, j));
                    if (!oracle::grad_close(res.grad_a(i, j), fd_a, 1e-5, 1e-9)) ++failures;
                    if (!oracle::grad_close(res.grad_b(i, j), fd_b, 1e-5, 1e-9)) ++failures;
                }
            }
        }
        CHECK(failures == 0);
    }
}

TEST_CASE("standard and inverted min-max give identical affinities") {
    Rng rng(71);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> w(5);
        for (double& v : w) v = rng.uniform(-2.0, 2.0);
        const auto inverted = normalize_weights(w);
        // standard orientation
        const auto [mn, mx] = std::minmax_element(w.begin(), w.end());
        std::vector<double> standard(w.size(), 0.0);
        if (*mx > *mn) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                standard[i] = (w[i] - *mn) / (*mx - *mn);
            }
        }
        const auto s1 = stress_affinity(inverted, 0.5);
        const auto s2 = stress_affinity(standard, 0.5);
        for (std::size_t i = 0; i < w.size(); ++i) {
            for (std::size_t j = 0; j < w.size(); ++j) {
                CHECK(s1.S(i, j) == doctest::Approx(s2.S(i, j)).epsilon(1e-12));
            }
        }
    }
}

}  // TEST_SUITE
