#include "mcei/outcome.hpp"
#include "mcei/errors.hpp"

#include <cmath>
#include <fstream>

namespace mcei {

using ad::Tape;
using ad::Var;

void OutcomeConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (steps < 1) throw ConfigError("steps must be positive");
    if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (fixed_sd <= 0.0) throw ConfigError("fixed_sd must be positive");
}

OutcomeParams fit_outcome(const ResidualSet &residuals, const Dataset &data,
                          const OutcomeConfig &cfg) {
    cfg.validate();
    if (!data.has_outcome()) throw DataError("outcome column is required to fit the outcome model");
    if (residuals.n() != data.n()) throw DataError("residuals are not row-aligned with the dataset");
    if (!residuals.epsilon.allFinite() || !residuals.z_samples.allFinite())
        throw DataError("residual set contains non-finite values");
    if (cfg.logistic) {
        for (int r = 0; r < data.n(); ++r)
            if (data.y(r) != 0.0 && data.y(r) != 1.0)
                throw DataError("logistic outcome requires y in {0, 1}");
    }

    const int N = data.n();
    const int D = residuals.confounder_dim(), T = residuals.treatments();
    const int B = std::min(cfg.batch_size, N);

    Mat x(D + T, N);
    x.topRows(D) = residuals.z_samples.transpose();
    x.bottomRows(T) = residuals.epsilon.transpose();

    RngStream root(cfg.seed);
    RngStream init = root.derive("init");
    OutcomeParams out;
    out.logistic = cfg.logistic;
    out.fixed_sd = cfg.fixed_sd;
    out.mean_net = Mlp::make(D + T, cfg.hidden, 1, Act::kTanh, Act::kIdentity, init);

    Optimizer opt;
    opt.learning_rate = cfg.learning_rate;
    opt.adaptive = cfg.adaptive;

    std::vector<Mat *> params;
    out.mean_net.collect(params);

    RngStream batch_rng = root.derive("batch");
    for (int s = 0; s < cfg.steps; ++s) {
        Mat xb(D + T, B);
        Mat yb(1, B);
        for (int b = 0; b < B; ++b) {
            int r = static_cast<int>(batch_rng.below(N));
            xb.col(b) = x.col(r);
            yb(0, b) = data.y(r);
        }
        try {
            Tape t;
            Var f = out.mean_net.apply(t, t.leaf(xb));
            Var y = t.leaf(yb);
            Var loglik;
            if (cfg.logistic) {
                // y * f - softplus(f), the Bernoulli log likelihood in logits
                loglik = t.mean(t.sub(t.mul(y, f), t.softplus(f)));
            } else {
                Var w = t.scale(t.sub(y, f), 1.0 / cfg.fixed_sd);
                loglik = t.mean(t.scale(t.square(w), -0.5));
            }
            t.backward(loglik);
            opt.ascend(t);
        } catch (const ad::TapeError &e) {
            throw NumericError(std::string("outcome training diverged: ") + e.what());
        }
        if ((s & 63) == 0)
            for (const Mat *p : params)
                if (!p->allFinite()) throw NumericError("outcome training diverged");
    }
    for (const Mat *p : params)
        if (!p->allFinite()) throw NumericError("outcome training diverged");
    return out;
}

Eigen::RowVectorXd outcome_predict(const OutcomeParams &outcome, const Mat &x) {
    if (x.rows() != outcome.input_dim()) throw DataError("outcome input dimension mismatch");
    return outcome.mean_net.eval(x).row(0);
}

double CausalEstimator::do_estimate(const Vec &t_star) const {
    const int M = bank_size(), T = treatments();
    const int D = static_cast<int>(z_bank_cols.rows());
    if (M < 1) throw DataError("empty confounder bank");
    if (t_star.size() != T) throw DataError("do_estimate: treatment vector size mismatch");

    Mat x(D + T, M);
    x.topRows(D) = z_bank_cols;
    for (int i = 0; i < T; ++i)
        x.row(D + i) = (t_star(i) - mu_bank.row(i).array()) / s(i);
    return outcome.mean_net.eval(x).row(0).mean();
}

Vec CausalEstimator::effect_vector(const Mat &probe_points, double h, Vec *stderr_out) const {
    const int T = treatments();
    const int K = static_cast<int>(probe_points.rows());
    if (K < 1) throw DataError("effect_vector needs at least one probe point");
    if (probe_points.cols() != T) throw DataError("probe points must have one column per treatment");
    if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");

    Vec effects = Vec::Zero(T);
    if (stderr_out) *stderr_out = Vec::Zero(T);
    Vec fd(K);
    for (int i = 0; i < T; ++i) {
        for (int k = 0; k < K; ++k) {
            Vec up = probe_points.row(k).transpose();
            Vec dn = up;
            up(i) += h;
            dn(i) -= h;
            fd(k) = (do_estimate(up) - do_estimate(dn)) / (2.0 * h);
        }
        effects(i) = fd.mean();
        if (stderr_out && K > 1) {
            double var = (fd.array() - effects(i)).square().sum() / (K - 1.0);
            (*stderr_out)(i) = std::sqrt(var / K);
        }
    }
    return effects;
}

CausalEstimator make_causal_estimator(const OutcomeParams &outcome, const FittedConfounder &fitted,
                                      const Dataset &data, RngStream &rng, int bank_cap) {
    data.require_complete();
    if (data.treatments() != fitted.treatments)
        throw DataError("dataset treatment count does not match the fitted model");
    if (outcome.input_dim() != fitted.confounder_dim + fitted.treatments)
        throw DataError("outcome input dimension does not match the fitted model");

    const int N = data.n(), T = fitted.treatments, D = fitted.confounder_dim;
    Mat cols = data.t_cols();
    Mat bank = fitted.encoder.dist.sample_eval(cols, rng.normal_mat(D, N)); // D x N

    if (bank_cap > 0 && bank_cap < N) {
        std::vector<int> perm = rng.permutation(N);
        Mat sub(D, bank_cap);
        for (int m = 0; m < bank_cap; ++m) sub.col(m) = bank.col(perm[m]);
        bank = sub;
    }

    CausalEstimator est;
    est.outcome = outcome;
    est.z_bank_cols = bank;
    est.mu_bank = Mat(T, bank.cols());
    est.s = Vec(T);
    for (int i = 0; i < T; ++i) {
        const CondGaussian &head = fitted.decoder.heads[i];
        if (head.scale_is_net) throw ConfigError("do-estimation requires fixed-scale decoder heads");
        est.mu_bank.row(i) = head.mean_eval(bank).row(0);
        est.s(i) = std::log1p(std::exp(head.scale_raw(0, 0))) + head.scale_floor;
    }
    return est;
}

void write_effects_csv(const std::vector<std::string> &treatment_names, const Vec &effects,
                       const Vec &stderrs, const std::string &path) {
    if (static_cast<int>(treatment_names.size()) != effects.size() ||
        effects.size() != stderrs.size())
        throw DataError("effects, stderrs, and names must have matching lengths");
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out << "treatment,effect,fd_stderr\n";
    for (int i = 0; i < effects.size(); ++i)
        out << treatment_names[i] << "," << format_double(effects(i)) << ","
            << format_double(stderrs(i)) << "\n";
}

} // namespace mcei
