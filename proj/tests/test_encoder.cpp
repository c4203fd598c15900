#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "eigencl/encoder.hpp"
#include "oracles.hpp"

using namespace eigencl;

namespace {

Matrix random_inputs(std::size_t b, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    Matrix x(b, d);
    for (double& v : x.data()) v = rng.uniform(-0.8, 0.8);
    return x;
}

// Scalar probe: L = sum_ij c_ij * z_ij with fixed random c. Its gradient wrt
// z is exactly c, which exercises the whole backward chain.
double probe_loss(EncoderParams& params, const Matrix& x, const Matrix& c) {
    ForwardResult fwd = forward(params, x, Mode::Train);
    double loss = 0.0;
    for (std::size_t i = 0; i < fwd.embeddings.data().size(); ++i) {
        loss += c.data()[i] * fwd.embeddings.data()[i];
    }
    return loss;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("init is deterministic and seeded") {
    EncoderConfig cfg;
    cfg.input_dim = 5;
    cfg.hidden_dims = {8};
    cfg.embed_dim = 4;
    cfg.seed = 9;
    const EncoderParams a = init_encoder(cfg);
    const EncoderParams b = init_encoder(cfg);
    CHECK(same_parameters(a, b));
    cfg.seed = 10;
    CHECK(!same_parameters(a, init_encoder(cfg)));
}

TEST_CASE("empty hidden stack is a single projection layer") {
    EncoderConfig cfg;
    cfg.input_dim = 5;
    cfg.hidden_dims = {};
    cfg.embed_dim = 3;
    const EncoderParams p = init_encoder(cfg);
    CHECK(p.layers.size() == 1);
    CHECK(p.layers[0].weight.rows() == 5);
    CHECK(p.layers[0].weight.cols() == 3);
}

TEST_CASE("one-dimensional embeddings normalize to plus/minus one") {
    EncoderConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden_dims = {6};
    cfg.embed_dim = 1;
    EncoderParams p = init_encoder(cfg);
    const Matrix x = random_inputs(5, 4, 3);
    const ForwardResult fwd = forward(p, x, Mode::Train);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(std::abs(std::abs(fwd.embeddings(i, 0)) - 1.0) < 1e-9);
    }
}

TEST_CASE("forward produces unit rows in both modes") {
    EncoderConfig cfg;
    cfg.input_dim = 5;
    cfg.hidden_dims = {16, 8};
    cfg.embed_dim = 6;
    EncoderParams p = init_encoder(cfg);
    const Matrix x = random_inputs(7, 5, 4);
    const ForwardResult tr = forward(p, x, Mode::Train);
    for (std::size_t i = 0; i < 7; ++i) {
        CHECK(norm2(tr.embeddings.row(i)) == doctest::Approx(1.0).epsilon(1e-6));
    }
    const Matrix ev = forward_eval(p, x);
    for (std::size_t i = 0; i < 7; ++i) {
        CHECK(norm2(ev.row(i)) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("train mode rejects a single-sample batch") {
    EncoderConfig cfg;
    cfg.input_dim = 3;
    EncoderParams p = init_encoder(cfg);
    CHECK_THROWS_AS(forward(p, random_inputs(1, 3, 5), Mode::Train), contract_error);
    CHECK_NOTHROW(forward(p, random_inputs(1, 3, 5), Mode::Eval));
}

TEST_CASE("eval mode is pure and per-row") {
    EncoderConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden_dims = {8};
    cfg.embed_dim = 5;
    EncoderParams p = init_encoder(cfg);
    // move running stats off their init values first
    forward(p, random_inputs(16, 4, 6), Mode::Train);
    const EncoderParams frozen = p;

    const Matrix x = random_inputs(6, 4, 7);
    const Matrix z1 = forward_eval(p, x);
    const Matrix z2 = forward_eval(p, x);
    CHECK(z1 == z2);
    CHECK(same_parameters(p, frozen));  // eval must not touch running stats

    SUBCASE("duplicate rows embed identically") {
        Matrix dup(2, 4);
        for (std::size_t j = 0; j < 4; ++j) {
            dup(0, j) = x(0, j);
            dup(1, j) = x(0, j);
        }
        const Matrix z = forward_eval(p, dup);
        for (std::size_t j = 0; j < 5; ++j) CHECK(z(0, j) == z(1, j));
    }
    SUBCASE("row result does not depend on batch company") {
        Matrix solo(1, 4);
        for (std::size_t j = 0; j < 4; ++j) solo(0, j) = x(2, j);
        const Matrix z = forward_eval(p, solo);
        for (std::size_t j = 0; j < 5; ++j) {
            CHECK(z(0, j) == doctest::Approx(z1(2, j)).epsilon(1e-15));
        }
    }
}

TEST_CASE("train forward commutes with row permutation") {
    EncoderConfig cfg;
    cfg.input_dim = 5;
    cfg.hidden_dims = {8};
    cfg.embed_dim = 4;
    const Matrix x = random_inputs(6, 5, 8);
    const std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
    Matrix xp(6, 5);
    for (std::size_t i = 0; i < 6; ++i) {
        std::copy(x.row(perm[i]).begin(), x.row(perm[i]).end(), xp.row(i).begin());
    }
    EncoderParams p1 = init_encoder(cfg);
    EncoderParams p2 = init_encoder(cfg);
    const Matrix z = forward(p1, x, Mode::Train).embeddings;
    const Matrix zp = forward(p2, xp, Mode::Train).embeddings;
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(zp(i, j) == doctest::Approx(z(perm[i], j)).epsilon(1e-12));
        }
    }
}

TEST_CASE("backward linearity in the upstream gradient") {
    EncoderConfig cfg;
    cfg.input_dim = 5;
    cfg.hidden_dims = {8};
    cfg.embed_dim = 4;
    EncoderParams p = init_encoder(cfg);
    const Matrix x = random_inputs(4, 5, 9);
    const ForwardResult fwd = forward(p, x, Mode::Train);

    Matrix zero(4, 4);
    const EncoderGrads g0 = backward(p, fwd.cache, zero);
    CHECK(g0.squared_norm() == doctest::Approx(0.0));

    Matrix g(4, 4), g2(4, 4);
    Rng rng(10);
    for (std::size_t i = 0; i < g.data().size(); ++i) {
        g.data()[i] = rng.uniform(-1.0, 1.0);
        g2.data()[i] = 2.0 * g.data()[i];
    }
    const EncoderGrads ga = backward(p, fwd.cache, g);
    const EncoderGrads gb = backward(p, fwd.cache, g2);
    for (std::size_t l = 0; l < ga.layers.size(); ++l) {
        for (std::size_t i = 0; i < ga.layers[l].weight.data().size(); ++i) {
            CHECK(gb.layers[l].weight.data()[i] ==
                  doctest::Approx(2.0 * ga.layers[l].weight.data()[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    for (std::uint64_t trial = 0; trial < 6; ++trial) {
        EncoderConfig cfg;
        cfg.input_dim = 4;
        cfg.hidden_dims = trial % 2 == 0 ? std::vector<std::size_t>{6}
                                         : std::vector<std::size_t>{5, 4};
        cfg.embed_dim = 3;
        cfg.seed = 20 + trial;
        EncoderParams p = init_encoder(cfg);
        const std::size_t batch = 3 + trial % 6;
        const Matrix x = random_inputs(batch, 4, 30 + trial);
        Matrix c(batch, 3);
        Rng rng(40 + trial);
        for (double& v : c.data()) v = rng.uniform(-1.0, 1.0);

        const ForwardResult fwd = forward(p, x, Mode::Train);
        const EncoderGrads analytic = backward(p, fwd.cache, c);

        EncoderGrads scratch = zero_grads(p);
        std::vector<double> fd_values;
        for_each_parameter(p, scratch, [&](double& param, double&) {
            fd_values.push_back(
                oracle::central_diff([&] { return probe_loss(p, x, c); }, param));
        });
        std::size_t cursor = 0, failed = 0;
        EncoderGrads analytic_copy = analytic;
        for_each_parameter(p, analytic_copy, [&](double&, double& g) {
            if (!oracle::grad_close(g, fd_values[cursor], 1e-4)) ++failed;
            ++cursor;
        });
        CHECK(cursor == fd_values.size());
        CHECK(failed == 0);
    }
}

TEST_CASE("stale cache is rejected") {
    EncoderConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden_dims = {4};
    cfg.embed_dim = 2;
    EncoderParams p = init_encoder(cfg);
    const ForwardResult fwd = forward(p, random_inputs(3, 3, 11), Mode::Train);
    Matrix wrong(2, 2);
    CHECK_THROWS_AS(backward(p, fwd.cache, wrong), contract_error);
}

TEST_CASE("checkpoint round-trips exactly") {
    EncoderConfig cfg;
    cfg.input_dim = 5;
    cfg.hidden_dims = {7, 3};
    cfg.embed_dim = 4;
    cfg.use_differences = true;
    cfg.input_dim = feature_dim(5, true);
    EncoderParams p = init_encoder(cfg);
    forward(p, random_inputs(8, cfg.input_dim, 12), Mode::Train);  // touch running stats

    const std::string path =
        (std::filesystem::temp_directory_path() / "eigencl_ckpt.json").string();
    save_checkpoint(p, path);
    const EncoderParams back = load_checkpoint(path);
    CHECK(same_parameters(p, back));
    CHECK(back.config.use_differences == true);
    CHECK(back.config.hidden_dims == cfg.hidden_dims);
    std::filesystem::remove(path);
}

TEST_CASE("feature expansion appends first differences") {
    Dataset ds;
    ds.series.push_back({"a", {0.5, 0.3, 0.2}, {0, 10, 20}});
    const Matrix plain = build_features(ds, false);
    CHECK(plain.cols() == 3);
    const Matrix diff = build_features(ds, true);
    REQUIRE(diff.cols() == 5);
    CHECK(diff(0, 3) == doctest::Approx(-0.2));
    CHECK(diff(0, 4) == doctest::Approx(-0.1));
}

}  // TEST_SUITE
