#pragma once
#include "mcei/ami_bounds.hpp"
#include "mcei/dataset.hpp"
#include "mcei/serialize.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace mcei {

enum class BoundKind { kAuxiliary, kDirect };

struct TrainConfig {
    int confounder_dim = 2;
    std::vector<double> alpha_grid = {0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0};
    double learning_rate = 0.02;
    bool adaptive = true;
    int steps = 800;
    int batch_size = 96;
    int mc_samples = 1;
    double holdout_fraction = 0.2;
    double rel_tolerance = 0.02;
    std::uint64_t seed = 1;
    BoundKind bound = BoundKind::kAuxiliary;
    bool nonlinear_encoder = false;
    std::vector<int> encoder_hidden = {16, 16}; // mean net, nonlinear mode only
    std::vector<int> encoder_scale_hidden = {16, 16};
    std::vector<int> decoder_hidden = {16, 16, 16};
    double init_scale = 0.5; // decoder and aux scale initialization
    double scale_floor = 1e-4;
    int eval_mc_samples = 32; // z draws per point when scoring the holdout
    bool record_trace = true;

    void validate() const;
};

// Encoder q(z | t): mean linear (or a small net), scale always a net of t.
struct EncoderParams {
    CondGaussian dist;
    static EncoderParams make(int T, int D, const TrainConfig &cfg, RngStream &rng);
};

// Per-treatment likelihood heads p(t_i | z), Gaussian with learned scalar scale.
struct DecoderParams {
    std::vector<CondGaussian> heads;
    int treatments() const { return static_cast<int>(heads.size()); }
    static DecoderParams make(int T, int D, const TrainConfig &cfg, RngStream &rng);
    void collect(std::vector<Mat *> &out);
};

struct MclboParts {
    double recon = 0.0;     // mean per-point reconstruction term
    double bound_sum = 0.0; // unweighted sum of the per-treatment bound terms
};

// Objective per data point: sum_i E[log p(t_i | z)] + alpha * sum_i G_i,
// averaged over the batch columns and the shared noise draws.
ad::Var mclbo_objective(ad::Tape &t, EncoderParams &enc, DecoderParams &dec, AuxFamily &aux,
                        const Mat &batch, const std::vector<NoiseDraw> &noise, double alpha,
                        BoundKind kind, RngStream *perm_rng, MclboParts *parts = nullptr);

// One joint ascent step over encoder, decoder, and auxiliary parameters.
MclboParts grad_step(Optimizer &opt, EncoderParams &enc, DecoderParams &dec, AuxFamily &aux,
                     const Mat &batch, const std::vector<NoiseDraw> &noise, double alpha,
                     BoundKind kind, RngStream *perm_rng);

struct TraceRow {
    int step = 0;
    double objective = 0.0;
    double recon = 0.0;
    double bound_sum = 0.0;
};

struct AlphaResult {
    double alpha = 0.0;
    double score = std::numeric_limits<double>::quiet_NaN();
    bool failed = false;
    std::string message;
};

struct FittedConfounder {
    int treatments = 0;
    int confounder_dim = 0;
    double alpha = 0.0;
    EncoderParams encoder;
    DecoderParams decoder;
    AuxFamily aux;
    std::vector<AlphaResult> alpha_table;
    std::vector<TraceRow> trace; // chosen alpha only
    TrainConfig config;
};

struct SingleFit {
    EncoderParams encoder;
    DecoderParams decoder;
    AuxFamily aux;
    bool failed = false;
    std::string message;
    std::vector<TraceRow> trace;
};

// Trains one alpha cell from scratch; all randomness comes from `stream`.
SingleFit train_single_alpha(const Mat &train_cols, double alpha, const TrainConfig &cfg,
                             RngStream stream);

// Mean negative predictive log-likelihood of held-out treatments, each
// predicted from the others by mixing decoder heads over z ~ r_i(z | t_{-i});
// lower is better.
double holdout_predictive(const EncoderParams &enc, const DecoderParams &dec,
                          const AuxFamily &aux, const Mat &holdout_cols, RngStream &rng,
                          int samples);
double holdout_predictive(const FittedConfounder &fitted, const Mat &holdout_cols,
                          RngStream &rng, int samples = 32);

// Grid fit: trains every alpha, scores each on the holdout split, then keeps
// the largest alpha whose score is within rel_tolerance of the best.
FittedConfounder fit_confounder(const Dataset &data, const TrainConfig &cfg);

// Gaussian entropy of each treatment's marginal, averaged over treatments;
// a ceiling for the per-pair predictive score on roughly Gaussian data.
double mean_marginal_entropy(const Mat &t_cols);

void write_trace_csv(const std::vector<TraceRow> &trace, const std::string &path);

json fitted_to_json(const FittedConfounder &f);
FittedConfounder fitted_from_json(const json &j);
void save_fitted(const FittedConfounder &f, const std::string &path);
FittedConfounder load_fitted(const std::string &path);

json train_config_to_json(const TrainConfig &cfg);
TrainConfig train_config_from_json(const json &j);

} // namespace mcei
