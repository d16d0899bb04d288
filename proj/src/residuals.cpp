#include "mcei/residuals.hpp"
#include "mcei/errors.hpp"

#include <cmath>
#include <fstream>

namespace mcei {

using ad::Tape;
using ad::Var;

void ResidualConfig::validate() const {
    if (kappa < 0.0 || !std::isfinite(kappa)) throw ConfigError("kappa must be finite and >= 0");
    if (steps < 1) throw ConfigError("steps must be positive");
    if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (init_scale <= 0.0) throw ConfigError("init_scale must be positive");
    if (scale_floor <= 0.0) throw ConfigError("scale_floor must be positive");
}

namespace {

double fixed_scale_of(const CondGaussian &g) {
    if (g.scale_is_net) throw ConfigError("decoder heads must use a fixed scale for inversion");
    return std::log1p(std::exp(g.scale_raw(0, 0))) + g.scale_floor;
}

} // namespace

ResidualSet invert_residuals(const FittedConfounder &fitted, const Dataset &data, RngStream &rng,
                             int draws) {
    if (draws < 1) throw ConfigError("draws must be at least 1");
    data.require_complete();
    if (data.treatments() != fitted.treatments)
        throw DataError("dataset treatment count does not match the fitted model");

    const int N = data.n(), T = fitted.treatments, D = fitted.confounder_dim;
    Mat cols = data.t_cols();

    ResidualSet out;
    out.source = ResidualSet::Source::kInversion;
    out.epsilon = Mat::Zero(N, T);
    out.z_samples = Mat::Zero(N, D);

    // Heads are column-wise, so one pass per draw covers every row at once.
    for (int k = 0; k < draws; ++k) {
        Mat z = fitted.encoder.dist.sample_eval(cols, rng.normal_mat(D, N));
        out.z_samples += z.transpose();
        for (int i = 0; i < T; ++i) {
            const CondGaussian &head = fitted.decoder.heads[i];
            Mat mu = head.mean_eval(z); // 1 x N
            double s = fixed_scale_of(head);
            out.epsilon.col(i) += (cols.row(i) - mu.row(0)).transpose() / s;
        }
    }
    out.epsilon /= static_cast<double>(draws);
    out.z_samples /= static_cast<double>(draws);
    return out;
}

void LagrangianTrainer::collect(std::vector<Mat *> &out) {
    for (CondGaussian &g : encoders) g.collect(out);
    for (CondGaussian &g : decoders) g.collect(out);
    for (GaussianMarginal &m : marginals) {
        out.push_back(&m.mean);
        out.push_back(&m.scale_raw);
    }
}

namespace {

// log m(eps) for the free marginal, broadcast over columns.
Var marginal_log_prob(Tape &t, GaussianMarginal &m, Var eps) {
    Var mean = t.param(m.mean);
    Var scale = t.shift(t.softplus(t.param(m.scale_raw)), m.scale_floor);
    Var w = t.div(t.sub(eps, mean), scale);
    Var quad = t.scale(t.square(w), -0.5);
    Var log_s = t.log(scale);
    Var c = t.shift(t.scale(log_s, -1.0), -0.5 * std::log(2.0 * M_PI));
    return t.add(quad, c);
}

struct StepResult {
    double objective = 0.0;
    bool tape_failed = false;
    std::string message;
};

StepResult lagrangian_step(Optimizer *opt, LagrangianTrainer &tr, const Mat &z, const Mat &batch,
                           const std::vector<Mat> &eps_noise, double kappa) {
    const int T = static_cast<int>(tr.encoders.size());
    StepResult res;
    try {
        Tape t;
        Var z_leaf = t.leaf(z);
        Var total;
        bool first = true;
        for (int i = 0; i < T; ++i) {
            Var ti = t.leaf(batch.row(i));
            Var enc_in = t.vcat(z_leaf, ti);
            CondGaussian::Heads eh = tr.encoders[i].heads(t, enc_in);
            Var eps = tr.encoders[i].sample(t, eh, eps_noise[i]);
            Var dec_in = t.vcat(z_leaf, eps);
            Var recon = t.mean(tr.decoders[i].log_prob_cols(t, dec_in, ti));
            Var term = recon;
            if (kappa > 0.0) {
                Var lp_enc = CondGaussian::log_prob_cols(t, eh, eps);
                Var lp_marg = marginal_log_prob(t, tr.marginals[i], eps);
                Var info = t.mean(t.sub(lp_enc, lp_marg));
                term = t.add(recon, t.scale(info, -kappa));
            }
            total = first ? term : t.add(total, term);
            first = false;
        }
        res.objective = t.val(total)(0, 0);
        if (opt) {
            t.backward(total);
            opt->ascend(t);
        }
    } catch (const ad::TapeError &e) {
        res.tape_failed = true;
        res.message = e.what();
    }
    return res;
}

bool params_finite(std::vector<Mat *> &params) {
    for (const Mat *p : params)
        if (!p->allFinite()) return false;
    return true;
}

} // namespace

LagrangianResult fit_lagrangian_residuals(const FittedConfounder &fitted, const Dataset &data,
                                          const ResidualConfig &cfg) {
    cfg.validate();
    data.require_complete();
    if (data.treatments() != fitted.treatments)
        throw DataError("dataset treatment count does not match the fitted model");

    const int N = data.n(), T = fitted.treatments, D = fitted.confounder_dim;
    const int B = std::min(cfg.batch_size, N);
    Mat cols = data.t_cols();
    RngStream root(cfg.seed);

    LagrangianResult out;
    LagrangianTrainer &tr = out.trainer;
    tr.kappa = cfg.kappa;
    RngStream init = root.derive("init");
    for (int i = 0; i < T; ++i) {
        RngStream ei = init.derive("enc").derive(static_cast<std::uint64_t>(i));
        RngStream di = init.derive("dec").derive(static_cast<std::uint64_t>(i));
        tr.encoders.push_back(CondGaussian::make_fixed_scale(D + 1, cfg.hidden, 1, Act::kTanh,
                                                             cfg.init_scale, cfg.scale_floor, ei));
        tr.decoders.push_back(CondGaussian::make_fixed_scale(D + 1, cfg.hidden, 1, Act::kTanh,
                                                             cfg.init_scale, cfg.scale_floor, di));
        GaussianMarginal m;
        m.mean = Mat::Zero(1, 1);
        m.scale_raw = Mat::Constant(1, 1, inv_softplus(1.0 - cfg.scale_floor));
        m.scale_floor = cfg.scale_floor;
        tr.marginals.push_back(m);
    }

    std::vector<Mat *> params;
    tr.collect(params);

    Optimizer opt;
    opt.learning_rate = cfg.learning_rate;
    opt.adaptive = cfg.adaptive;

    RngStream batch_rng = root.derive("batch");
    RngStream z_rng = root.derive("z");
    RngStream eps_rng = root.derive("eps");
    out.objective_trace.reserve(cfg.steps);
    for (int s = 0; s < cfg.steps; ++s) {
        Mat batch(T, B);
        for (int b = 0; b < B; ++b) batch.col(b) = cols.col(static_cast<int>(batch_rng.below(N)));
        Mat z = fitted.encoder.dist.sample_eval(batch, z_rng.normal_mat(D, B));
        std::vector<Mat> eps_noise;
        eps_noise.reserve(T);
        for (int i = 0; i < T; ++i) eps_noise.push_back(eps_rng.normal_mat(1, B));

        StepResult res = lagrangian_step(&opt, tr, z, batch, eps_noise, cfg.kappa);
        if (res.tape_failed) throw NumericError("residual training diverged: " + res.message);
        out.objective_trace.push_back(res.objective);
        if ((s & 63) == 0 && !params_finite(params))
            throw NumericError("residual training diverged: non-finite parameters");
    }
    if (!params_finite(params)) throw NumericError("residual training diverged: non-finite parameters");

    // Residual values are the encoder conditional means at a fresh posterior
    // draw of z; sampling is only needed inside training.
    RngStream final_rng = root.derive("extract");
    Mat z_all = fitted.encoder.dist.sample_eval(cols, final_rng.normal_mat(D, N));
    out.set.source = ResidualSet::Source::kLagrangian;
    out.set.z_samples = z_all.transpose();
    out.set.epsilon = Mat::Zero(N, T);
    for (int i = 0; i < T; ++i) {
        Mat in(D + 1, N);
        in.topRows(D) = z_all;
        in.row(D) = cols.row(i);
        out.set.epsilon.col(i) = tr.encoders[i].mean_eval(in).row(0).transpose();
    }
    if (!out.set.epsilon.allFinite()) throw NumericError("residual extraction produced non-finite values");
    return out;
}

IndependenceReport independence_report(const ResidualSet &res) {
    const int N = res.n(), T = res.treatments(), D = res.confounder_dim();
    if (N < 30) throw DataError("independence report needs at least 30 rows");

    IndependenceReport rep;
    rep.corr = Mat::Zero(T, D);
    Vec ez = res.z_samples.colwise().mean();
    Vec ee = res.epsilon.colwise().mean();
    for (int i = 0; i < T; ++i) {
        double ve = (res.epsilon.col(i).array() - ee(i)).square().sum();
        for (int d = 0; d < D; ++d) {
            double vz = (res.z_samples.col(d).array() - ez(d)).square().sum();
            if (ve <= 0.0 || vz <= 0.0) {
                rep.corr(i, d) = std::numeric_limits<double>::quiet_NaN();
                rep.has_undefined = true;
                continue;
            }
            double cov = ((res.epsilon.col(i).array() - ee(i)) *
                          (res.z_samples.col(d).array() - ez(d)))
                             .sum();
            double c = cov / std::sqrt(ve * vz);
            rep.corr(i, d) = c;
            rep.max_abs = std::max(rep.max_abs, std::abs(c));
        }
    }
    return rep;
}

void write_residuals_csv(const ResidualSet &res, const std::vector<std::string> &treatment_names,
                         const std::string &path) {
    if (static_cast<int>(treatment_names.size()) != res.treatments())
        throw DataError("treatment name count does not match the residual set");
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path + " for writing");
    for (int i = 0; i < res.treatments(); ++i) out << "eps_" << treatment_names[i] << ",";
    for (int d = 0; d < res.confounder_dim(); ++d)
        out << "z_" << (d + 1) << (d + 1 < res.confounder_dim() ? "," : "\n");
    for (int r = 0; r < res.n(); ++r) {
        for (int i = 0; i < res.treatments(); ++i) out << format_double(res.epsilon(r, i)) << ",";
        for (int d = 0; d < res.confounder_dim(); ++d)
            out << format_double(res.z_samples(r, d))
                << (d + 1 < res.confounder_dim() ? "," : "\n");
    }
}

} // namespace mcei
