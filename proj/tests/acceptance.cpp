// Acceptance gate, one check per criterion, selected with --criterion N.
// Each criterion prints its measurements and fails the process on any
// violated bound; runtime budgets are asserted where a criterion has one.
#include "CLI11.hpp"

#include "mcei/baselines.hpp"
#include "mcei/errors.hpp"
#include "mcei/harness.hpp"
#include "mcei/residuals.hpp"
#include "oracle_helpers.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

using namespace mcei;
using mcei::testutil::GaussianTestSystem;
using mcei::testutil::LinearModel;
using mcei::testutil::ManualGrads;
using ad::Tape;
using ad::Var;

namespace {

int g_failures = 0;

void check(bool ok, const std::string &what) {
    std::cout << (ok ? "  ok:   " : "  FAIL: ") << what << "\n";
    if (!ok) ++g_failures;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

struct Stopwatch {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

double pearson(const Vec &a, const Vec &b) {
    Vec ca = a.array() - a.mean();
    Vec cb = b.array() - b.mean();
    return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
}

Mat standardize_cols(const Mat &t, Vec *mean_out = nullptr, Vec *sd_out = nullptr) {
    const int n = static_cast<int>(t.rows());
    Vec mu = t.colwise().mean();
    Mat c = t.rowwise() - mu.transpose();
    Vec sd = (c.colwise().squaredNorm() / double(n - 1)).cwiseSqrt();
    if (mean_out) *mean_out = mu;
    if (sd_out) *sd_out = sd;
    return c.array().rowwise() / sd.transpose().array();
}

// Flattened tape gradient over a parameter pack, in pack order.
Eigen::VectorXd tape_gradient(Tape &t, const ad::ParamPack &pack) {
    int total = 0;
    for (Mat *mp : pack.mats) total += static_cast<int>(mp->size());
    Eigen::VectorXd out(total);
    int off = 0;
    for (Mat *mp : pack.mats) {
        Mat gm = t.grad_of(*mp);
        out.segment(off, mp->size()) = Eigen::Map<Eigen::VectorXd>(gm.data(), gm.size());
        off += static_cast<int>(mp->size());
    }
    return out;
}

// Objective gradients against central finite differences, every parameter of
// encoder, decoder, and auxiliary family on one frozen instance.
void criterion_1() {
    Stopwatch sw;
    TrainConfig cfg;
    cfg.confounder_dim = 2;
    cfg.encoder_scale_hidden = {5};
    cfg.decoder_hidden = {4};
    RngStream rng(2026);
    RngStream er = rng.derive("enc"), dr = rng.derive("dec"), ar = rng.derive("aux");
    EncoderParams enc = EncoderParams::make(3, 2, cfg, er);
    DecoderParams dec = DecoderParams::make(3, 2, cfg, dr);
    AuxFamily aux = AuxFamily::make(3, 2, cfg.init_scale, cfg.scale_floor, ar);

    Mat batch = rng.derive("data").normal_mat(3, 8);
    Mat delta = rng.derive("noise").normal_mat(2, 8);
    const double alpha = 0.7;

    ad::ParamPack pack;
    enc.dist.collect(pack.mats);
    dec.collect(pack.mats);
    aux.collect(pack.mats);
    Eigen::VectorXd theta = pack.pack();

    Tape t;
    Var obj = mclbo_objective(t, enc, dec, aux, batch, {NoiseDraw{delta}}, alpha,
                              BoundKind::kAuxiliary, nullptr);
    t.backward(obj);
    Eigen::VectorXd got = tape_gradient(t, pack);

    Eigen::VectorXd fd = ad::finite_diff_grad(
        [&](const Eigen::VectorXd &v) {
            pack.unpack(v);
            Tape tt;
            double val = tt.val(mclbo_objective(tt, enc, dec, aux, batch, {NoiseDraw{delta}},
                                                alpha, BoundKind::kAuxiliary, nullptr))(0, 0);
            pack.unpack(theta);
            return val;
        },
        theta, 1e-5);

    // Unit floor in the denominator so near-zero coordinates compare absolutely.
    double worst = 0.0;
    for (int i = 0; i < theta.size(); ++i)
        worst = std::max(worst, std::abs(got(i) - fd(i)) / std::max(1.0, std::abs(fd(i))));
    check(worst <= 1e-4, "max relative gradient error " + fmt(worst) + " <= 1e-4 over " +
                             std::to_string(theta.size()) + " parameters");
    double el = sw.seconds();
    check(el < 5.0, "runtime " + fmt(el) + " s < 5 s");
}

// Tape gradients against the hand-derived forms: decoder and auxiliary
// blocks exact on a shared draw, encoder block equal in expectation (its
// pathwise form omits a zero-mean score term).
void criterion_2() {
    Stopwatch sw;
    LinearModel m = LinearModel::make(3, 2, 7);
    RngStream rng(19);
    Mat batch = rng.derive("data").normal_mat(3, 8);
    Mat delta = rng.derive("noise").normal_mat(2, 8);
    const double alpha = 0.7;

    {
        Tape t;
        Var obj = mclbo_objective(t, m.enc, m.dec, m.aux, batch, {NoiseDraw{delta}}, alpha,
                                  BoundKind::kAuxiliary, nullptr);
        t.backward(obj);
        ManualGrads g = testutil::manual_gradients(m, batch, delta, alpha);
        double worst = 0.0;
        for (int i = 0; i < 3; ++i) {
            worst = std::max(
                {worst,
                 (t.grad_of(m.dec.heads[i].mean_net.layers[0].W) - g.dW[i]).cwiseAbs().maxCoeff(),
                 (t.grad_of(m.dec.heads[i].mean_net.layers[0].b) - g.db[i]).cwiseAbs().maxCoeff(),
                 (t.grad_of(m.dec.heads[i].scale_raw) - g.ds[i]).cwiseAbs().maxCoeff(),
                 (t.grad_of(m.aux.members[i].mean_net.layers[0].W) - g.aW[i]).cwiseAbs().maxCoeff(),
                 (t.grad_of(m.aux.members[i].mean_net.layers[0].b) - g.ab[i]).cwiseAbs().maxCoeff(),
                 (t.grad_of(m.aux.members[i].scale_raw) - g.as[i]).cwiseAbs().maxCoeff()});
        }
        check(worst <= 1e-10,
              "decoder and auxiliary gradient max deviation " + fmt(worst) + " <= 1e-10");
    }

    // Encoder block: mean of (tape - pathwise) over noise draws is the score
    // term, zero in expectation; every coordinate within 3 standard errors.
    const int K = 10000;
    ad::ParamPack epack;
    m.enc.dist.collect(epack.mats);
    int dim = 0;
    for (Mat *mp : epack.mats) dim += static_cast<int>(mp->size());
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim), sumsq = Eigen::VectorXd::Zero(dim);

    RngStream noise_rng = rng.derive("draws");
    for (int k = 0; k < K; ++k) {
        Mat dk = noise_rng.normal_mat(2, 8);
        Tape t;
        Var obj = mclbo_objective(t, m.enc, m.dec, m.aux, batch, {NoiseDraw{dk}}, alpha,
                                  BoundKind::kAuxiliary, nullptr);
        t.backward(obj);
        ManualGrads g = testutil::manual_gradients(m, batch, dk, alpha);
        Eigen::VectorXd tape_vec = tape_gradient(t, epack);
        Eigen::VectorXd path(dim);
        int off = 0;
        for (const Mat *pm : {&g.We, &g.be, &g.Ws, &g.bs}) {
            path.segment(off, pm->size()) =
                Eigen::Map<const Eigen::VectorXd>(pm->data(), pm->size());
            off += static_cast<int>(pm->size());
        }
        Eigen::VectorXd d = tape_vec - path;
        sum += d;
        sumsq += d.cwiseProduct(d);
    }
    double worst_t = 0.0;
    for (int i = 0; i < dim; ++i) {
        double mean = sum(i) / K;
        double var = (sumsq(i) - K * mean * mean) / (K - 1);
        double se = std::sqrt(var / K);
        worst_t = std::max(worst_t, std::abs(mean) / se);
    }
    check(worst_t <= 3.0, "encoder gradient worst |mean|/stderr " + fmt(worst_t) + " <= 3 over " +
                              std::to_string(K) + " draws");
    double el = sw.seconds();
    check(el < 60.0, "runtime " + fmt(el) + " s < 60 s");
}

// Auxiliary bound against the closed-form conditional-information oracle on
// a linear-Gaussian system: valid for arbitrary auxiliaries, near-tight
// after gradient ascent on them.
void criterion_3() {
    Stopwatch sw;
    RngStream rng(303);
    // Column-sparse loadings keep the exact leave-one-out conditionals inside
    // the diagonal auxiliary family, so tightness is achievable at all.
    GaussianTestSystem sys = GaussianTestSystem::make(2, 5, rng, true);
    AuxFamily fam = AuxFamily::make(5, 2, 0.8, 1e-4, rng);
    for (int i = 0; i < 5; ++i)
        check(sys.diagonal_family_gap(i) < 1e-10,
              "treatment " + std::to_string(i) + " leave-one-out conditional is diagonal");

    Mat eval_before = sys.sample_t(rng, 4000);
    for (int i = 0; i < 5; ++i) {
        RngStream sub = rng.derive(i);
        BoundEstimate est = aux_bound_estimate(sys.encoder, fam.members[i], eval_before, i, sub, 4);
        double oracle = sys.oracle_cmi(i);
        check(est.value <= -oracle + 3.0 * est.stderr_,
              "pre-optimization G_" + std::to_string(i) + " = " + fmt(est.value) +
                  " <= -I + 3se = " + fmt(-oracle + 3.0 * est.stderr_));
    }

    RngStream train = rng.derive("train");
    for (int i = 0; i < 5; ++i) {
        std::vector<Mat *> params;
        fam.members[i].collect(params);
        // Decaying step size so the iterates settle instead of random-walking
        // around the optimum at the gap tolerance scale.
        for (int step = 0; step < 6000; ++step) {
            Mat batch = sys.sample_t(train, 256);
            NoiseDraw noise = NoiseDraw::standard(train, 2, 256);
            Tape t;
            Var g = aux_bound(t, sys.encoder, fam, batch, noise, i);
            t.backward(g);
            const double lr = 0.05 / (1.0 + step / 500.0);
            for (Mat *mp : params) *mp += lr * t.grad_of(*mp);
        }
    }

    Mat eval_after = sys.sample_t(rng, 20000);
    for (int i = 0; i < 5; ++i) {
        RngStream sub = rng.derive(100 + i);
        BoundEstimate est = aux_bound_estimate(sys.encoder, fam.members[i], eval_after, i, sub, 8);
        double oracle = sys.oracle_cmi(i);
        double gap = -oracle - est.value;
        check(est.value <= -oracle + 3.0 * est.stderr_,
              "post-optimization G_" + std::to_string(i) + " still below -I + 3se");
        check(gap <= 0.10 * std::abs(oracle), "post-optimization gap " + fmt(gap) + " <= 10% of I = " +
                                                  fmt(0.10 * std::abs(oracle)));
    }
    double el = sw.seconds();
    check(el < 120.0, "runtime " + fmt(el) + " s < 120 s");
}

// Probabilistic-PCA posterior against the scalar closed form sigma/(sigma +
// kappa) over a parameter grid.
void criterion_4() {
    double worst = 0.0;
    for (int i = 1; i <= 10; ++i) {
        for (int j = 1; j <= 10; ++j) {
            const double sigma = 0.2 * i, kappa = 0.3 * j;
            PpcaModel model;
            model.W = Mat::Ones(1, 1);
            model.prior_var = sigma * sigma;
            model.noise_var = sigma * kappa;
            model.col_means = Vec::Zero(1);
            const double shrink = sigma / (sigma + kappa);
            for (double t : {-2.0, 0.4, 3.1}) {
                GaussianPosterior post = ppca_posterior(model, Vec::Constant(1, t));
                worst = std::max(worst, std::abs(post.mean(0) - shrink * t));
                worst = std::max(worst,
                                 std::abs(post.cov(0, 0) - sigma * sigma * (1.0 - shrink)));
            }
        }
    }
    check(worst <= 1e-10,
          "posterior mean and variance max deviation " + fmt(worst) + " <= 1e-10 on the 10x10 grid");
}

// Residual machinery: exact inversion roundtrip, residual independence from
// the confounder on a trained simulation, and agreement between the trained
// residual encoders and the closed-form inversion.
void criterion_5() {
    {
        TrainConfig cfg;
        cfg.confounder_dim = 2;
        cfg.encoder_scale_hidden = {};
        cfg.decoder_hidden = {};
        RngStream rng(55);
        RngStream er = rng.derive("enc"), dr = rng.derive("dec"), ar = rng.derive("aux");
        FittedConfounder f;
        f.treatments = 4;
        f.confounder_dim = 2;
        f.encoder = EncoderParams::make(4, 2, cfg, er);
        f.decoder = DecoderParams::make(4, 2, cfg, dr);
        f.aux = AuxFamily::make(4, 2, cfg.init_scale, cfg.scale_floor, ar);
        f.config = cfg;

        Dataset d;
        d.t = RngStream(56).normal_mat(200, 4);
        d.default_names();
        RngStream inv_rng(57);
        ResidualSet res = invert_residuals(f, d, inv_rng);
        double worst = 0.0;
        for (int r = 0; r < d.n(); ++r) {
            Mat z = res.z_samples.row(r).transpose();
            for (int i = 0; i < 4; ++i) {
                const CondGaussian &head = f.decoder.heads[i];
                double s = std::log1p(std::exp(head.scale_raw(0, 0))) + head.scale_floor;
                double back = head.mean_eval(z)(0, 0) + s * res.epsilon(r, i);
                worst = std::max(worst, std::abs(back - d.t(r, i)));
            }
        }
        check(worst <= 1e-9, "inversion roundtrip max deviation " + fmt(worst) + " <= 1e-9");
    }

    {
        SimConfig sc;
        sc.n = 5000;
        sc.treatments = 10;
        sc.true_dim = 2;
        sc.gamma = 0.5;
        sc.seed = 501;
        SimDraw draw = generate(sc);

        TrainConfig tc;
        tc.confounder_dim = 2;
        tc.alpha_grid = {0.5, 2.0, 8.0};
        // Small learning rate: the residual-confounder correlation floor
        // tracks the optimizer's stationary noise, not the sample size.
        tc.learning_rate = 0.005;
        tc.steps = 6000;
        tc.batch_size = 192;
        tc.eval_mc_samples = 8;
        tc.encoder_scale_hidden = {};
        tc.decoder_hidden = {};
        tc.seed = 502;
        FittedConfounder fitted = fit_confounder(draw.data, tc);

        RngStream rng(503);
        ResidualSet res = invert_residuals(fitted, draw.data, rng);
        IndependenceReport rep = independence_report(res);
        check(rep.max_abs <= 0.1, "max |corr(eps_i, z_d)| = " + fmt(rep.max_abs) +
                                      " <= 0.1 at N=5000 on the trained simulation");
    }

    {
        SimConfig sc;
        sc.n = 800;
        sc.treatments = 3;
        sc.true_dim = 2;
        sc.gamma = 0.5;
        sc.seed = 59;
        SimDraw draw = generate(sc);

        TrainConfig tc;
        tc.confounder_dim = 2;
        tc.alpha_grid = {0.5};
        tc.steps = 250;
        tc.batch_size = 64;
        tc.eval_mc_samples = 4;
        tc.encoder_scale_hidden = {8};
        tc.decoder_hidden = {8};
        tc.seed = 60;
        FittedConfounder fitted = fit_confounder(draw.data, tc);

        ResidualConfig rc;
        rc.steps = 6000;
        rc.batch_size = 96;
        rc.kappa = 0.2;
        rc.seed = 61;
        LagrangianResult lag = fit_lagrangian_residuals(fitted, draw.data, rc);

        const int N = draw.data.n();
        for (int i = 0; i < 3; ++i) {
            const CondGaussian &head = fitted.decoder.heads[i];
            double s = std::log1p(std::exp(head.scale_raw(0, 0))) + head.scale_floor;
            Vec inv(N);
            for (int r = 0; r < N; ++r) {
                Mat z = lag.set.z_samples.row(r).transpose();
                inv(r) = (draw.data.t(r, i) - head.mean_eval(z)(0, 0)) / s;
            }
            double c = pearson(inv, lag.set.epsilon.col(i));
            check(std::abs(c) >= 0.95, "treatment " + std::to_string(i) +
                                           " trained-vs-inversion residual |corr| = " +
                                           fmt(std::abs(c)) + " >= 0.95");
        }
    }
}

ExperimentConfig desk_experiment() {
    ExperimentConfig cfg;
    cfg.sim.n = 2000;
    cfg.sim.treatments = 20;
    cfg.sim.true_dim = 2;
    cfg.sim.sim_sd = 0.02;
    cfg.sim.outcome_sd = 0.1;
    cfg.gammas = {0.2, 0.5, 0.8};
    cfg.redraws = 2;
    cfg.methods = {"mcei", "pca_correct", "naive"};
    cfg.fit_dims = {2, 10};
    cfg.mcei.train.confounder_dim = 2;
    cfg.mcei.train.alpha_grid = {0.5, 2.0, 8.0};
    cfg.mcei.train.steps = 600;
    cfg.mcei.train.batch_size = 96;
    cfg.mcei.train.eval_mc_samples = 8;
    cfg.mcei.train.encoder_scale_hidden = {};
    cfg.mcei.train.decoder_hidden = {};
    cfg.mcei.outcome.steps = 1200;
    cfg.mcei.outcome.hidden = {8, 8};
    cfg.mcei.probes = 100;
    cfg.mcei.ensembles = 5;
    cfg.seed = 5;
    return cfg;
}

// Mean scaled error over ok rows for one (method, fit_dim) arm at one gamma.
double arm_mean(const std::vector<SweepRow> &rows, const std::string &method, int dim,
                double gamma) {
    double sum = 0.0;
    int n = 0;
    for (const SweepRow &r : rows)
        if (r.method == method && r.fit_dim == dim && r.gamma == gamma && r.status == "ok" &&
            std::isfinite(r.scaled_mse)) {
            sum += r.scaled_mse;
            ++n;
        }
    if (n == 0) throw DataError("no ok rows for " + method + " dim " + std::to_string(dim));
    return sum / n;
}

// Desk-scale sweep: naive error grows with confounding and loses to the
// corrected estimate, the corrected estimate beats the zero predictor
// everywhere, and overshooting the confounder dimension degrades it no more
// than it degrades the linear correction.
void criterion_6() {
    Stopwatch sw;
    ExperimentConfig cfg = desk_experiment();
    std::vector<SweepRow> rows = run_sweep(cfg);

    for (const SweepRow &r : rows)
        check(r.status == "ok", r.method + " dim " + std::to_string(r.fit_dim) + " gamma " +
                                    fmt(r.gamma) + " redraw " + std::to_string(r.redraw) +
                                    " status " + r.status);

    const std::vector<double> gammas = cfg.gammas;
    std::map<double, double> naive, mcei2, mcei10, pca2, pca10;
    for (double g : gammas) {
        naive[g] = arm_mean(rows, "naive", 2, g);
        mcei2[g] = arm_mean(rows, "mcei", 2, g);
        mcei10[g] = arm_mean(rows, "mcei", 10, g);
        pca2[g] = arm_mean(rows, "pca_correct", 2, g);
        pca10[g] = arm_mean(rows, "pca_correct", 10, g);
        std::cout << "  gamma " << fmt(g) << ": naive " << fmt(naive[g]) << ", mcei(2) "
                  << fmt(mcei2[g]) << ", mcei(10) " << fmt(mcei10[g]) << ", pca(2) "
                  << fmt(pca2[g]) << ", pca(10) " << fmt(pca10[g]) << "\n";
    }

    check(naive[0.2] < naive[0.5] && naive[0.5] < naive[0.8],
          "naive error is monotonically increasing in gamma");
    check(naive[0.8] > mcei2[0.8], "naive " + fmt(naive[0.8]) + " exceeds mcei " +
                                       fmt(mcei2[0.8]) + " at gamma 0.8");
    for (double g : gammas)
        check(mcei2[g] < 1.0,
              "mcei scaled error " + fmt(mcei2[g]) + " < 1 at gamma " + fmt(g));

    double inc_mcei = 0.0, inc_pca = 0.0;
    for (double g : gammas) {
        inc_mcei += (mcei10[g] - mcei2[g]) / gammas.size();
        inc_pca += (pca10[g] - pca2[g]) / gammas.size();
    }
    check(inc_mcei <= inc_pca + 0.05, "overspecified-dimension increase: mcei " + fmt(inc_mcei) +
                                          " <= pca " + fmt(inc_pca) + " + 0.05");
    double el = sw.seconds();
    check(el <= 900.0, "runtime " + fmt(el) + " s <= 900 s");
}

// More simultaneously observed treatments sharpen the confounder posterior:
// mean scaled error is non-increasing in T at fixed N.
// Fully linear-Gaussian instance: the confounder enters the outcome linearly,
// so the model family is well specified and the only obstacle is recovery.
Dataset linear_gaussian_draw(int T, std::uint64_t seed, Vec &truth_out) {
    const int N = 4000, D = 2;
    const double gamma = 0.5, outcome_sd = 0.1;
    RngStream root(seed);
    Mat W = root.derive("W").normal_mat(T, D).cwiseAbs();
    Vec b_eps = root.derive("b_eps").normal_mat(T, 1).cwiseAbs();
    for (int i = 0; i < T; ++i) b_eps(i) *= std::pow(static_cast<double>(i + 1), -0.6);
    Vec b_z = root.derive("b_z").normal_mat(D, 1).cwiseAbs();

    Mat z = std::sqrt(gamma) * root.derive("z").normal_mat(N, D);
    Mat eps = std::sqrt(1.0 - gamma) * root.derive("eps").normal_mat(N, T);

    Dataset data;
    data.t = z * W.transpose() + eps;
    data.y = eps * b_eps + z * b_z + outcome_sd * root.derive("y_noise").normal_mat(N, 1);
    data.default_names();
    truth_out = b_eps;
    return data;
}

void criterion_7() {
    Stopwatch sw;
    MceiCellConfig cell;
    cell.train.confounder_dim = 2;
    cell.train.alpha_grid = {0.5, 4.0};
    cell.train.steps = 400;
    cell.train.batch_size = 96;
    cell.train.eval_mc_samples = 8;
    cell.train.encoder_scale_hidden = {};
    cell.train.decoder_hidden = {};
    cell.outcome.steps = 3000;
    cell.outcome.learning_rate = 0.005;
    cell.outcome.hidden = {};
    cell.probes = 100;
    cell.z_bank_cap = 512;
    cell.ensembles = 3;

    const std::vector<int> treatment_counts = {5, 15, 50};
    std::vector<double> means;
    for (int T : treatment_counts) {
        double sum = 0.0;
        for (int s = 0; s < 3; ++s) {
            Vec truth;
            Dataset data = linear_gaussian_draw(T, 700 + 10 * static_cast<std::uint64_t>(T) + s,
                                                truth);
            Vec est = mcei_effect_estimate(data, cell, 7000 + 10 * static_cast<std::uint64_t>(T) + s);
            sum += scaled_mse(est, truth);
        }
        means.push_back(sum / 3.0);
        std::cout << "  T=" << T << ": mean scaled error " << fmt(means.back()) << "\n";
    }
    check(means[0] >= means[1] && means[1] >= means[2],
          "mean scaled error non-increasing in T: " + fmt(means[0]) + " >= " + fmt(means[1]) +
              " >= " + fmt(means[2]));
    double el = sw.seconds();
    check(el <= 600.0, "runtime " + fmt(el) + " s <= 600 s");
}

// Alpha selection: without confounding the penalty costs nothing and the
// grid maximum wins; under strong confounding the selected model predicts
// held-out treatments well below the marginal-entropy ceiling.
void criterion_8() {
    {
        SimConfig sc;
        sc.n = 2000;
        sc.treatments = 10;
        sc.true_dim = 2;
        sc.gamma = 0.0;
        sc.seed = 801;
        SimDraw draw = generate(sc);

        TrainConfig tc;
        tc.confounder_dim = 2;
        tc.alpha_grid = {0.5, 2.0, 8.0};
        tc.steps = 600;
        tc.batch_size = 96;
        tc.eval_mc_samples = 8;
        tc.encoder_scale_hidden = {};
        tc.decoder_hidden = {};
        tc.seed = 802;
        FittedConfounder fitted = fit_confounder(draw.data, tc);
        check(fitted.alpha == tc.alpha_grid.back(),
              "unconfounded data selects the grid maximum: alpha = " + fmt(fitted.alpha));
    }

    {
        // One draw split into train and held-out rows; a second seed would
        // redraw the loading matrix and change the distribution itself.
        SimConfig sc;
        sc.n = 5000;
        sc.treatments = 10;
        sc.true_dim = 2;
        sc.gamma = 0.8;
        sc.seed = 811;
        SimDraw draw = generate(sc);
        const int n_train = 4000, n_eval = sc.n - n_train;

        Vec mu, sd;
        Dataset train;
        train.t = standardize_cols(draw.data.t.topRows(n_train), &mu, &sd);
        train.default_names();

        TrainConfig tc;
        tc.confounder_dim = 2;
        tc.alpha_grid = {0.5, 2.0, 8.0};
        tc.learning_rate = 0.005;
        tc.steps = 1500;
        tc.batch_size = 192;
        tc.eval_mc_samples = 8;
        tc.encoder_scale_hidden = {};
        tc.decoder_hidden = {};
        tc.seed = 812;
        FittedConfounder fitted = fit_confounder(train, tc);
        std::cout << "  selected alpha " << fmt(fitted.alpha) << "\n";

        Mat eval_t = draw.data.t.bottomRows(n_eval);
        eval_t.rowwise() -= mu.transpose();
        eval_t.array().rowwise() /= sd.transpose().array();
        Mat eval_cols = eval_t.transpose();

        RngStream rng(814);
        double score = holdout_predictive(fitted, eval_cols, rng, 32);
        double ceiling = mean_marginal_entropy(eval_cols);
        check(score <= 0.9 * ceiling, "held-out predictive " + fmt(score) +
                                          " beats the marginal-entropy ceiling " + fmt(ceiling) +
                                          " by >= 10%");
    }
}

std::string slurp(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Identical config and seed produce a byte-identical results file, running
// the actual sweep subcommand when the binary's path is provided.
void criterion_9() {
    ExperimentConfig cfg;
    cfg.sim.n = 300;
    cfg.sim.treatments = 5;
    cfg.sim.true_dim = 2;
    cfg.gammas = {0.2, 0.6};
    cfg.redraws = 1;
    cfg.methods = {"mcei", "pca_correct", "naive"};
    cfg.fit_dims = {2};
    cfg.mcei.train.confounder_dim = 2;
    cfg.mcei.train.alpha_grid = {0.5, 2.0};
    cfg.mcei.train.steps = 120;
    cfg.mcei.train.batch_size = 64;
    cfg.mcei.train.eval_mc_samples = 4;
    cfg.mcei.train.encoder_scale_hidden = {};
    cfg.mcei.train.decoder_hidden = {};
    cfg.mcei.outcome.steps = 200;
    cfg.mcei.outcome.hidden = {8};
    cfg.mcei.probes = 40;
    cfg.seed = 99;

    namespace fs = std::filesystem;
    fs::path work = fs::temp_directory_path() / "mcei_acceptance_9";
    fs::remove_all(work);
    fs::create_directories(work);

    const char *cli = std::getenv("MCEI_CLI");
    std::string a = (work / "run_a").string(), b = (work / "run_b").string();
    if (cli && *cli) {
        const std::string cfg_path = (work / "config.json").string();
        std::ofstream out(cfg_path);
        out << experiment_config_to_json(cfg).dump(2) << "\n";
        out.close();
        for (const std::string &dir : {a, b}) {
            std::string cmd = std::string(cli) + " sweep --config " + cfg_path +
                              " --output-dir " + dir + " > /dev/null";
            int rc = std::system(cmd.c_str());
            check(rc == 0, "sweep subcommand exited 0 for " + dir);
        }
    } else {
        std::cout << "  note: MCEI_CLI unset, running the sweep in-process\n";
        for (const std::string &dir : {a, b}) {
            cfg.output_dir = dir;
            fs::create_directories(dir);
            write_results_csv(run_sweep(cfg), dir + "/results.csv");
        }
    }
    std::string ra = slurp(a + "/results.csv"), rb = slurp(b + "/results.csv");
    check(!ra.empty() && ra.find('\n') != std::string::npos, "results file has content");
    check(ra == rb, "two runs produced byte-identical results files (" +
                        std::to_string(ra.size()) + " bytes)");
    fs::remove_all(work);
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"acceptance checks"};
    int criterion = 0;
    app.add_option("--criterion", criterion, "criterion number, 1 through 9")
        ->required()
        ->check(CLI::Range(1, 9));
    CLI11_PARSE(app, argc, argv);

    try {
        switch (criterion) {
        case 1: criterion_1(); break;
        case 2: criterion_2(); break;
        case 3: criterion_3(); break;
        case 4: criterion_4(); break;
        case 5: criterion_5(); break;
        case 6: criterion_6(); break;
        case 7: criterion_7(); break;
        case 8: criterion_8(); break;
        case 9: criterion_9(); break;
        }
    } catch (const std::exception &e) {
        std::cout << "  FAIL: unexpected exception: " << e.what() << "\n";
        ++g_failures;
    }
    std::cout << "criterion " << criterion << ": " << (g_failures == 0 ? "PASS" : "FAIL") << "\n";
    return g_failures == 0 ? 0 : 1;
}
