#include "mcei/confounder.hpp"

#include "mcei/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mcei {

void TrainConfig::validate() const {
    if (confounder_dim < 1) throw ConfigError("confounder_dim must be at least 1");
    if (alpha_grid.empty()) throw ConfigError("alpha grid is empty");
    for (double a : alpha_grid)
        if (a < 0.0 || !std::isfinite(a)) throw ConfigError("alpha values must be finite and >= 0");
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (steps < 1) throw ConfigError("steps must be positive");
    if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (mc_samples < 1) throw ConfigError("mc_samples must be at least 1");
    if (holdout_fraction < 0.0 || holdout_fraction >= 1.0)
        throw ConfigError("holdout_fraction must lie in [0, 1)");
    if (alpha_grid.size() > 1 && holdout_fraction == 0.0)
        throw ConfigError("alpha selection needs a holdout split");
    if (rel_tolerance < 0.0) throw ConfigError("rel_tolerance must be >= 0");
    if (eval_mc_samples < 1) throw ConfigError("eval_mc_samples must be at least 1");
    if (init_scale <= scale_floor) throw ConfigError("init_scale must exceed scale_floor");
}

EncoderParams EncoderParams::make(int T, int D, const TrainConfig &cfg, RngStream &rng) {
    EncoderParams e;
    std::vector<int> mean_hidden = cfg.nonlinear_encoder ? cfg.encoder_hidden : std::vector<int>{};
    e.dist = CondGaussian::make_net_scale(T, mean_hidden, cfg.encoder_scale_hidden, D, Act::kTanh,
                                          cfg.scale_floor, rng);
    return e;
}

DecoderParams DecoderParams::make(int T, int D, const TrainConfig &cfg, RngStream &rng) {
    DecoderParams d;
    d.heads.reserve(T);
    for (int i = 0; i < T; ++i) {
        RngStream sub = rng.derive(static_cast<std::uint64_t>(i));
        d.heads.push_back(CondGaussian::make_fixed_scale(D, cfg.decoder_hidden, 1, Act::kTanh,
                                                         cfg.init_scale, cfg.scale_floor, sub));
    }
    return d;
}

void DecoderParams::collect(std::vector<Mat *> &out) {
    for (CondGaussian &h : heads) h.collect(out);
}

ad::Var mclbo_objective(ad::Tape &t, EncoderParams &enc, DecoderParams &dec, AuxFamily &aux,
                        const Mat &batch, const std::vector<NoiseDraw> &noise, double alpha,
                        BoundKind kind, RngStream *perm_rng, MclboParts *parts) {
    const int T = static_cast<int>(batch.rows());
    if (dec.treatments() != T)
        throw std::invalid_argument("mclbo_objective: decoder head count mismatch");
    if (alpha > 0.0 && kind == BoundKind::kAuxiliary && aux.treatments() != T)
        throw std::invalid_argument("mclbo_objective: aux member count mismatch");
    if (noise.empty()) throw std::invalid_argument("mclbo_objective: need at least one noise draw");
    if (kind == BoundKind::kDirect && perm_rng == nullptr)
        throw std::invalid_argument("mclbo_objective: direct bound needs a permutation stream");

    CondGaussian::Heads eh = enc.dist.heads(t, t.leaf(batch));
    const double inv_s = 1.0 / static_cast<double>(noise.size());

    ad::Var recon_total;
    ad::Var bound_total;
    for (const NoiseDraw &draw : noise) {
        ad::Var z = enc.dist.sample(t, eh, draw.delta);

        ad::Var recon;
        for (int i = 0; i < T; ++i) {
            CondGaussian::Heads hh = dec.heads[i].heads(t, z);
            ad::Var lp = CondGaussian::log_prob_cols(t, hh, t.leaf(batch.row(i)));
            ad::Var m = t.mean(lp);
            recon = recon.valid() ? t.add(recon, m) : m;
        }
        recon_total = recon_total.valid() ? t.add(recon_total, recon) : recon;

        if (alpha > 0.0) {
            ad::Var bound;
            if (kind == BoundKind::kAuxiliary) {
                ad::Var lp_enc = CondGaussian::log_prob_cols(t, eh, z);
                for (int i = 0; i < T; ++i) {
                    ad::Var lp_aux =
                        aux.members[i].log_prob_cols(t, t.leaf(drop_row(batch, i)), z);
                    ad::Var g = t.mean(t.sub(lp_aux, lp_enc));
                    bound = bound.valid() ? t.add(bound, g) : g;
                }
            } else {
                ad::Var ent = t.mean(CondGaussian::entropy_cols(t, eh));
                for (int i = 0; i < T; ++i) {
                    Mat shuffled = batch;
                    std::vector<int> p =
                        perm_rng->permutation(static_cast<int>(batch.cols()));
                    for (Eigen::Index j = 0; j < batch.cols(); ++j)
                        shuffled(i, j) = batch(i, p[j]);
                    CondGaussian::Heads hs = enc.dist.heads(t, t.leaf(shuffled));
                    ad::Var lp = t.mean(CondGaussian::log_prob_cols(t, hs, z));
                    ad::Var g = t.add(lp, ent);
                    bound = bound.valid() ? t.add(bound, g) : g;
                }
            }
            bound_total = bound_total.valid() ? t.add(bound_total, bound) : bound;
        }
    }

    ad::Var recon_mean = t.scale(recon_total, inv_s);
    ad::Var obj = recon_mean;
    double bound_val = 0.0;
    if (bound_total.valid()) {
        ad::Var bound_mean = t.scale(bound_total, inv_s);
        bound_val = t.val(bound_mean)(0, 0);
        obj = t.add(recon_mean, t.scale(bound_mean, alpha));
    }
    if (parts) {
        parts->recon = t.val(recon_mean)(0, 0);
        parts->bound_sum = bound_val;
    }
    return obj;
}

MclboParts grad_step(Optimizer &opt, EncoderParams &enc, DecoderParams &dec, AuxFamily &aux,
                     const Mat &batch, const std::vector<NoiseDraw> &noise, double alpha,
                     BoundKind kind, RngStream *perm_rng) {
    ad::Tape t;
    MclboParts parts;
    ad::Var obj = mclbo_objective(t, enc, dec, aux, batch, noise, alpha, kind, perm_rng, &parts);
    t.backward(obj);
    opt.ascend(t);
    return parts;
}

namespace {

Mat take_cols(const Mat &m, const std::vector<int> &idx) {
    Mat out(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(idx[k]);
    return out;
}

bool params_finite(std::vector<Mat *> &mats) {
    for (const Mat *m : mats)
        if (!m->allFinite()) return false;
    return true;
}

// Trains the auxiliary conditionals against frozen encoder samples; used in
// direct-bound mode purely so the holdout score has a working z sampler.
void aux_score_step(Optimizer &opt, EncoderParams &enc, AuxFamily &aux, const Mat &batch,
                    RngStream &noise_rng) {
    Mat delta = noise_rng.normal_mat(enc.dist.out_dim(), static_cast<int>(batch.cols()));
    Mat z = enc.dist.sample_eval(batch, delta);
    ad::Tape t;
    ad::Var zleaf = t.leaf(z);
    ad::Var total;
    for (int i = 0; i < aux.treatments(); ++i) {
        ad::Var lp = aux.members[i].log_prob_cols(t, t.leaf(drop_row(batch, i)), zleaf);
        ad::Var m = t.mean(lp);
        total = total.valid() ? t.add(total, m) : m;
    }
    t.backward(total);
    opt.ascend(t);
}

} // namespace

SingleFit train_single_alpha(const Mat &train_cols, double alpha, const TrainConfig &cfg,
                             RngStream stream) {
    const int T = static_cast<int>(train_cols.rows());
    const int D = cfg.confounder_dim;
    const int n = static_cast<int>(train_cols.cols());

    RngStream init_rng = stream.derive("init");
    RngStream dec_rng = init_rng.derive("decoder");
    RngStream aux_rng = init_rng.derive("aux");
    RngStream batch_rng = stream.derive("batch");
    RngStream noise_rng = stream.derive("noise");
    RngStream perm_rng = stream.derive("perm");

    SingleFit out;
    out.encoder = EncoderParams::make(T, D, cfg, init_rng);
    out.decoder = DecoderParams::make(T, D, cfg, dec_rng);
    out.aux = AuxFamily::make(T, D, cfg.init_scale, cfg.scale_floor, aux_rng);

    std::vector<Mat *> all_params;
    out.encoder.dist.collect(all_params);
    out.decoder.collect(all_params);
    out.aux.collect(all_params);

    Optimizer opt;
    opt.learning_rate = cfg.learning_rate;
    opt.adaptive = cfg.adaptive;
    Optimizer aux_opt;
    aux_opt.learning_rate = cfg.learning_rate;
    aux_opt.adaptive = cfg.adaptive;

    const int batch_size = std::min(cfg.batch_size, n);
    out.trace.reserve(cfg.record_trace ? cfg.steps : 0);

    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<int> idx(batch_size);
        for (int &k : idx) k = static_cast<int>(batch_rng.below(static_cast<std::uint64_t>(n)));
        Mat batch = take_cols(train_cols, idx);

        std::vector<NoiseDraw> noise;
        noise.reserve(cfg.mc_samples);
        for (int s = 0; s < cfg.mc_samples; ++s)
            noise.push_back(NoiseDraw::standard(noise_rng, D, batch_size));

        try {
            MclboParts parts = grad_step(opt, out.encoder, out.decoder, out.aux, batch, noise,
                                         alpha, cfg.bound, &perm_rng);
            if (cfg.bound == BoundKind::kDirect)
                aux_score_step(aux_opt, out.encoder, out.aux, batch, noise_rng);
            if (cfg.record_trace)
                out.trace.push_back(TraceRow{step, parts.recon + alpha * parts.bound_sum,
                                             parts.recon, parts.bound_sum});
        } catch (const ad::TapeError &e) {
            out.failed = true;
            out.message = e.what();
            return out;
        }

        if ((step & 63) == 0 && !params_finite(all_params)) {
            out.failed = true;
            out.message = "parameters diverged at step " + std::to_string(step);
            return out;
        }
    }

    if (!params_finite(all_params)) {
        out.failed = true;
        out.message = "parameters diverged";
    }
    return out;
}

double holdout_predictive(const EncoderParams &, const DecoderParams &dec, const AuxFamily &aux,
                          const Mat &holdout_cols, RngStream &rng, int samples) {
    const int T = static_cast<int>(holdout_cols.rows());
    const int H = static_cast<int>(holdout_cols.cols());
    if (H < 1) throw DataError("holdout_predictive: empty holdout");
    if (dec.treatments() != T || aux.treatments() != T)
        throw std::invalid_argument("holdout_predictive: model and data disagree on treatments");
    const int D = aux.confounder_dim();

    double total = 0.0;
    for (int i = 0; i < T; ++i) {
        const Mat rest = drop_row(holdout_cols, i);
        const Mat mean = aux.members[i].mean_eval(rest);
        const Mat scale = aux.members[i].scale_eval(rest);
        const Mat value = holdout_cols.row(i);

        Mat lse = Mat::Constant(1, H, -std::numeric_limits<double>::infinity());
        Mat acc = Mat::Zero(1, H);
        // Two passes of the usual streaming trick would need storing all
        // draws; instead track the running max and rescale the accumulator.
        for (int s = 0; s < samples; ++s) {
            Mat delta = rng.normal_mat(D, H);
            Mat z = (scale.cols() == H)
                        ? Mat(mean + (scale.array() * delta.array()).matrix())
                        : Mat(mean + (delta.array().colwise() * scale.col(0).array()).matrix());
            Eigen::RowVectorXd lp = gaussian_log_prob(dec.heads[i].mean_eval(z),
                                                      dec.heads[i].scale_eval(z), value);
            for (int h = 0; h < H; ++h) {
                if (lp(h) > lse(0, h)) {
                    acc(0, h) = acc(0, h) * std::exp(lse(0, h) - lp(h)) + 1.0;
                    lse(0, h) = lp(h);
                } else {
                    acc(0, h) += std::exp(lp(h) - lse(0, h));
                }
            }
        }
        for (int h = 0; h < H; ++h)
            total += lse(0, h) + std::log(acc(0, h)) - std::log(static_cast<double>(samples));
    }
    return -total / (static_cast<double>(T) * static_cast<double>(H));
}

double holdout_predictive(const FittedConfounder &fitted, const Mat &holdout_cols, RngStream &rng,
                          int samples) {
    return holdout_predictive(fitted.encoder, fitted.decoder, fitted.aux, holdout_cols, rng,
                              samples);
}

FittedConfounder fit_confounder(const Dataset &data, const TrainConfig &cfg) {
    cfg.validate();
    data.require_complete();
    const int T = data.treatments();
    const int n = data.n();
    if (T < 2) throw DataError("need at least two treatments");

    RngStream root(cfg.seed);
    Mat cols = data.t_cols();

    // Holdout split by a seeded permutation.
    RngStream split_rng = root.derive("split");
    std::vector<int> perm = split_rng.permutation(n);
    int n_hold = cfg.holdout_fraction > 0.0
                     ? std::max(1, static_cast<int>(std::lround(cfg.holdout_fraction * n)))
                     : 0;
    if (n - n_hold < 2) throw DataError("not enough rows left after the holdout split");
    std::vector<int> hold_idx(perm.begin(), perm.begin() + n_hold);
    std::vector<int> train_idx(perm.begin() + n_hold, perm.end());
    Mat train_cols = take_cols(cols, train_idx);
    Mat hold_cols = n_hold > 0 ? take_cols(cols, hold_idx) : Mat();

    std::vector<SingleFit> fits;
    std::vector<AlphaResult> table;
    for (std::size_t ai = 0; ai < cfg.alpha_grid.size(); ++ai) {
        const double alpha = cfg.alpha_grid[ai];
        RngStream cell = root.derive("alpha").derive(static_cast<std::uint64_t>(ai));
        SingleFit sf = train_single_alpha(train_cols, alpha, cfg, cell);

        AlphaResult res;
        res.alpha = alpha;
        res.failed = sf.failed;
        res.message = sf.message;
        if (!sf.failed && n_hold > 0) {
            RngStream score_rng = cell.derive("score");
            res.score = holdout_predictive(sf.encoder, sf.decoder, sf.aux, hold_cols, score_rng,
                                           cfg.eval_mc_samples);
            if (!std::isfinite(res.score)) {
                res.failed = true;
                res.message = "holdout score is not finite";
            }
        }
        table.push_back(res);
        fits.push_back(std::move(sf));
    }

    // Largest alpha within tolerance of the best holdout score.
    int best = -1;
    for (std::size_t k = 0; k < table.size(); ++k)
        if (!table[k].failed && (best < 0 || table[k].score < table[best].score))
            best = static_cast<int>(k);
    if (best < 0) {
        std::string detail;
        for (const AlphaResult &r : table)
            if (!r.message.empty()) detail = r.message;
        throw NumericError("every alpha cell failed to train" +
                           (detail.empty() ? "" : ": " + detail));
    }

    int chosen = best;
    if (table.size() > 1) {
        const double tol =
            table[best].score + cfg.rel_tolerance * std::abs(table[best].score) + 1e-12;
        for (std::size_t k = 0; k < table.size(); ++k)
            if (!table[k].failed && table[k].score <= tol &&
                table[k].alpha > table[chosen].alpha)
                chosen = static_cast<int>(k);
    }

    FittedConfounder out;
    out.treatments = T;
    out.confounder_dim = cfg.confounder_dim;
    out.alpha = table[chosen].alpha;
    out.encoder = std::move(fits[chosen].encoder);
    out.decoder = std::move(fits[chosen].decoder);
    out.aux = std::move(fits[chosen].aux);
    out.alpha_table = std::move(table);
    out.trace = std::move(fits[chosen].trace);
    out.config = cfg;
    return out;
}

double mean_marginal_entropy(const Mat &t_cols) {
    const double n = static_cast<double>(t_cols.cols());
    if (n < 2) throw DataError("mean_marginal_entropy: need at least two columns");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < t_cols.rows(); ++i) {
        double m = t_cols.row(i).mean();
        double var = (t_cols.row(i).array() - m).square().sum() / (n - 1.0);
        acc += 0.5 * std::log(2.0 * M_PI * M_E * var);
    }
    return acc / static_cast<double>(t_cols.rows());
}

void write_trace_csv(const std::vector<TraceRow> &trace, const std::string &path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "step,objective,recon,bound\n";
    for (const TraceRow &r : trace)
        out << r.step << ',' << format_double(r.objective) << ',' << format_double(r.recon) << ','
            << format_double(r.bound_sum) << '\n';
}

namespace {

json alpha_result_to_json(const AlphaResult &r) {
    return {{"alpha", r.alpha},
            {"score", r.score},
            {"failed", r.failed},
            {"message", r.message}};
}

AlphaResult alpha_result_from_json(const json &j) {
    AlphaResult r;
    r.alpha = j.at("alpha").get<double>();
    r.score = j.at("score").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                      : j.at("score").get<double>();
    r.failed = j.at("failed").get<bool>();
    r.message = j.at("message").get<std::string>();
    return r;
}

} // namespace

json train_config_to_json(const TrainConfig &c) {
    return {{"confounder_dim", c.confounder_dim},
            {"alpha_grid", c.alpha_grid},
            {"learning_rate", c.learning_rate},
            {"adaptive", c.adaptive},
            {"steps", c.steps},
            {"batch_size", c.batch_size},
            {"mc_samples", c.mc_samples},
            {"holdout_fraction", c.holdout_fraction},
            {"rel_tolerance", c.rel_tolerance},
            {"seed", c.seed},
            {"bound", c.bound == BoundKind::kAuxiliary ? "auxiliary" : "direct"},
            {"nonlinear_encoder", c.nonlinear_encoder},
            {"encoder_hidden", c.encoder_hidden},
            {"encoder_scale_hidden", c.encoder_scale_hidden},
            {"decoder_hidden", c.decoder_hidden},
            {"init_scale", c.init_scale},
            {"scale_floor", c.scale_floor},
            {"eval_mc_samples", c.eval_mc_samples},
            {"record_trace", c.record_trace}};
}

TrainConfig train_config_from_json(const json &j) {
    TrainConfig c;
    c.confounder_dim = j.value("confounder_dim", c.confounder_dim);
    if (j.contains("alpha_grid")) c.alpha_grid = j.at("alpha_grid").get<std::vector<double>>();
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.adaptive = j.value("adaptive", c.adaptive);
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.mc_samples = j.value("mc_samples", c.mc_samples);
    c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
    c.rel_tolerance = j.value("rel_tolerance", c.rel_tolerance);
    c.seed = j.value("seed", c.seed);
    if (j.contains("bound")) {
        std::string b = j.at("bound").get<std::string>();
        if (b == "auxiliary")
            c.bound = BoundKind::kAuxiliary;
        else if (b == "direct")
            c.bound = BoundKind::kDirect;
        else
            throw ConfigError("unknown bound kind: " + b);
    }
    c.nonlinear_encoder = j.value("nonlinear_encoder", c.nonlinear_encoder);
    if (j.contains("encoder_hidden"))
        c.encoder_hidden = j.at("encoder_hidden").get<std::vector<int>>();
    if (j.contains("encoder_scale_hidden"))
        c.encoder_scale_hidden = j.at("encoder_scale_hidden").get<std::vector<int>>();
    if (j.contains("decoder_hidden"))
        c.decoder_hidden = j.at("decoder_hidden").get<std::vector<int>>();
    c.init_scale = j.value("init_scale", c.init_scale);
    c.scale_floor = j.value("scale_floor", c.scale_floor);
    c.eval_mc_samples = j.value("eval_mc_samples", c.eval_mc_samples);
    c.record_trace = j.value("record_trace", c.record_trace);
    return c;
}

json fitted_to_json(const FittedConfounder &f) {
    json dec = json::array();
    for (const CondGaussian &h : f.decoder.heads) dec.push_back(cond_gaussian_to_json(h));
    json aux = json::array();
    for (const CondGaussian &m : f.aux.members) aux.push_back(cond_gaussian_to_json(m));
    json table = json::array();
    for (const AlphaResult &r : f.alpha_table) table.push_back(alpha_result_to_json(r));
    return {{"schema_version", kSchemaVersion},
            {"kind", "fitted_confounder"},
            {"treatments", f.treatments},
            {"confounder_dim", f.confounder_dim},
            {"alpha", f.alpha},
            {"encoder", cond_gaussian_to_json(f.encoder.dist)},
            {"decoder", dec},
            {"aux", aux},
            {"alpha_table", table},
            {"config", train_config_to_json(f.config)}};
}

FittedConfounder fitted_from_json(const json &j) {
    const int v = j.at("schema_version").get<int>();
    if (v != kSchemaVersion)
        throw DataError("unsupported fitted-model schema version " + std::to_string(v));
    FittedConfounder f;
    f.treatments = j.at("treatments").get<int>();
    f.confounder_dim = j.at("confounder_dim").get<int>();
    f.alpha = j.at("alpha").get<double>();
    f.encoder.dist = cond_gaussian_from_json(j.at("encoder"));
    for (const json &h : j.at("decoder")) f.decoder.heads.push_back(cond_gaussian_from_json(h));
    for (const json &m : j.at("aux")) f.aux.members.push_back(cond_gaussian_from_json(m));
    for (const json &r : j.at("alpha_table")) f.alpha_table.push_back(alpha_result_from_json(r));
    if (j.contains("config")) f.config = train_config_from_json(j.at("config"));
    return f;
}

void save_fitted(const FittedConfounder &f, const std::string &path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << fitted_to_json(f).dump(2) << '\n';
}

FittedConfounder load_fitted(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    json j;
    in >> j;
    return fitted_from_json(j);
}

} // namespace mcei
