#include "doctest.h"

#include "mcei/errors.hpp"
#include "mcei/simulation.hpp"

#include <cmath>
#include <cstdio>

using namespace mcei;

TEST_CASE("generated shapes and names match the configuration") {
    SimConfig cfg;
    cfg.n = 10000;
    cfg.treatments = 50;
    cfg.true_dim = 2;
    cfg.seed = 3;
    SimDraw d = generate(cfg);
    CHECK(d.data.t.rows() == 10000);
    CHECK(d.data.t.cols() == 50);
    CHECK(d.data.y.size() == 10000);
    CHECK(d.data.has_outcome());
    CHECK(d.data.treatment_names.front() == "t_1");
    CHECK(d.data.treatment_names.back() == "t_50");
    CHECK(d.truth.W.rows() == 50);
    CHECK(d.truth.W.cols() == 2);
    CHECK(d.truth.z.rows() == 10000);
    CHECK(d.truth.eps.cols() == 50);
    CHECK(d.truth.W.minCoeff() >= 0.0);
    CHECK(d.truth.b_eps.minCoeff() >= 0.0);
    CHECK(d.truth.b_z.minCoeff() >= 0.0);
}

TEST_CASE("column moments match the analytic values") {
    SimConfig cfg;
    cfg.n = 10000;
    cfg.treatments = 50;
    cfg.true_dim = 2;
    cfg.gamma = 0.5;
    cfg.seed = 11;
    SimDraw d = generate(cfg);
    const double N = static_cast<double>(cfg.n);
    for (int i = 0; i < cfg.treatments; ++i) {
        double mean = d.data.t.col(i).mean();
        double var = (d.data.t.col(i).array() - mean).square().sum() / (N - 1.0);
        double want = cfg.gamma * d.truth.W.row(i).squaredNorm() + (1.0 - cfg.gamma) +
                      cfg.sim_sd * cfg.sim_sd;
        CHECK(std::abs(mean) < 0.05);
        CHECK(std::abs(var - want) / want < 0.05);
    }
}

TEST_CASE("zero confounding removes the latent path entirely") {
    SimConfig cfg;
    cfg.n = 10000;
    cfg.treatments = 8;
    cfg.gamma = 0.0;
    cfg.seed = 21;
    SimDraw d = generate(cfg);
    CHECK(d.truth.z.cwiseAbs().maxCoeff() == 0.0);

    // y reduces to b_eps' eps plus observation noise.
    Vec resid = d.data.y - d.truth.eps * d.truth.b_eps;
    double mean = resid.mean();
    double var = (resid.array() - mean).square().sum() / (cfg.n - 1.0);
    CHECK(var == doctest::Approx(cfg.outcome_sd * cfg.outcome_sd).epsilon(0.10));
}

TEST_CASE("effect oracle is the scaled noise weight vector") {
    SimConfig cfg;
    cfg.n = 10;
    cfg.treatments = 5;
    cfg.seed = 31;

    cfg.gamma = 0.0;
    SimDraw a = generate(cfg);
    CHECK((true_effect_oracle(a.truth) - a.truth.b_eps).cwiseAbs().maxCoeff() == 0.0);

    cfg.gamma = 0.99;
    SimDraw b = generate(cfg);
    CHECK((true_effect_oracle(b.truth) - 0.01 * b.truth.b_eps).cwiseAbs().maxCoeff() < 1e-12);

    // Decay construction: weights fall off as (i+1)^-0.6 times an |N(0,1)| draw.
    Vec raw = RngStream(31).derive("b_eps").normal_mat(5, 1).cwiseAbs();
    for (int i = 0; i < 5; ++i)
        CHECK(b.truth.b_eps(i) ==
              doctest::Approx(raw(i) * std::pow(i + 1.0, -0.6)).epsilon(1e-12));
}

TEST_CASE("quadrature over the confounder recovers the oracle effects") {
    SimConfig cfg;
    cfg.n = 4;
    cfg.treatments = 3;
    cfg.true_dim = 2;
    cfg.gamma = 0.6;
    cfg.seed = 41;
    SimDraw d = generate(cfg);
    const SimTruth &tr = d.truth;

    // E_z[y | do(t)] with eps read off as t - Wz; sigma -> 0 limit.
    const double sd = std::sqrt(cfg.gamma);
    const int G = 241;
    const double lo = -8.0 * sd, hi = 8.0 * sd;
    const double step = (hi - lo) / (G - 1);
    auto weight = [&](int k) { return (k == 0 || k == G - 1) ? 0.5 * step : step; };
    auto pdf = [&](double v) {
        return std::exp(-0.5 * v * v / (sd * sd)) / (sd * std::sqrt(2.0 * M_PI));
    };

    auto mean_outcome = [&](const Vec &t) {
        double acc = 0.0;
        for (int a = 0; a < G; ++a) {
            double za = lo + a * step;
            for (int b = 0; b < G; ++b) {
                double zb = lo + b * step;
                Vec z(2);
                z << za, zb;
                Vec eps = t - tr.W * z;
                double y = (1.0 - cfg.gamma) * tr.b_eps.dot(eps) +
                           cfg.gamma * tr.b_z.dot(z.cwiseAbs());
                acc += weight(a) * weight(b) * pdf(za) * pdf(zb) * y;
            }
        }
        return acc;
    };

    Vec t0(3);
    t0 << 0.3, -0.2, 0.5;
    Vec want = true_effect_oracle(tr);
    const double h = 1e-3;
    for (int i = 0; i < 3; ++i) {
        Vec up = t0, dn = t0;
        up(i) += h;
        dn(i) -= h;
        double fd = (mean_outcome(up) - mean_outcome(dn)) / (2.0 * h);
        CHECK(std::abs(fd - want(i)) < 1e-3);
    }
}

TEST_CASE("scaled mse matches its definition and rotation invariance") {
    Vec truth(4);
    truth << 1.0, -2.0, 0.5, 3.0;
    CHECK(scaled_mse(truth, truth) == 0.0);
    CHECK(scaled_mse(Vec::Zero(4), truth) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(scaled_mse(2.0 * truth, truth) == doctest::Approx(1.0).epsilon(1e-12));

    RngStream rng(51);
    Mat q = Eigen::HouseholderQR<Mat>(rng.normal_mat(4, 4)).householderQ();
    Vec est(4);
    est << 0.2, 1.0, -0.4, 2.0;
    CHECK(scaled_mse(Mat(q * est), Mat(q * truth)) ==
          doctest::Approx(scaled_mse(est, truth)).epsilon(1e-10));

    CHECK_THROWS_AS(scaled_mse(Vec::Ones(3), Vec::Zero(3)), DataError);
    CHECK_THROWS_AS(scaled_mse(Vec::Ones(3), Vec::Ones(4)), DataError);
}

TEST_CASE("generation is deterministic in the seed") {
    SimConfig cfg;
    cfg.n = 200;
    cfg.treatments = 6;
    cfg.seed = 61;
    SimDraw a = generate(cfg);
    SimDraw b = generate(cfg);
    CHECK(a.data.t == b.data.t);
    CHECK(a.data.y == b.data.y);
    CHECK(a.truth.W == b.truth.W);

    cfg.seed = 62;
    SimDraw c = generate(cfg);
    CHECK(a.data.t != c.data.t);
}

TEST_CASE("truth sidecar round trips the oracle effects") {
    SimConfig cfg;
    cfg.n = 50;
    cfg.treatments = 4;
    cfg.gamma = 0.3;
    cfg.seed = 71;
    SimDraw d = generate(cfg);
    const std::string path = "sim_truth_test.json";
    save_truth(d.truth, cfg, path);
    Vec loaded = true_effects_from_file(path);
    CHECK((loaded - true_effect_oracle(d.truth)).cwiseAbs().maxCoeff() < 1e-15);
    std::remove(path.c_str());

    json cj = sim_config_to_json(cfg);
    SimConfig back = sim_config_from_json(cj);
    CHECK(back.gamma == cfg.gamma);
    CHECK(back.seed == cfg.seed);
}

TEST_CASE("simulation config validation") {
    SimConfig cfg;
    cfg.n = 0;
    CHECK_THROWS_AS(generate(cfg), ConfigError);
    cfg = SimConfig{};
    cfg.gamma = 1.0;
    CHECK_THROWS_AS(generate(cfg), ConfigError);
    cfg = SimConfig{};
    cfg.gamma = -0.1;
    CHECK_THROWS_AS(generate(cfg), ConfigError);
    cfg = SimConfig{};
    cfg.true_dim = 0;
    CHECK_THROWS_AS(generate(cfg), ConfigError);
}
