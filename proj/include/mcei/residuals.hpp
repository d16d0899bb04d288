#pragma once
#include "mcei/confounder.hpp"

namespace mcei {

// Per-treatment noise components recovered from a fitted confounder model.
// epsilon is row-aligned with the dataset; z_samples holds the confounder
// draw each row's residuals were computed against.
struct ResidualSet {
    enum class Source { kInversion, kLagrangian };
    Mat epsilon;   // n x T
    Mat z_samples; // n x D
    Source source = Source::kInversion;

    int n() const { return static_cast<int>(epsilon.rows()); }
    int treatments() const { return static_cast<int>(epsilon.cols()); }
    int confounder_dim() const { return static_cast<int>(z_samples.cols()); }
};

// Location-scale decoders invert in closed form: eps_i = (t_i - mu_i(z)) / s_i
// with z drawn from the fitted posterior, one draw per row. draws > 1 averages
// the inverted residuals over that many posterior draws and records the mean z.
ResidualSet invert_residuals(const FittedConfounder &fitted, const Dataset &data, RngStream &rng,
                             int draws = 1);

struct ResidualConfig {
    double kappa = 0.5; // information penalty weight
    int steps = 400;
    int batch_size = 96;
    double learning_rate = 0.02;
    bool adaptive = true;
    std::vector<int> hidden = {16, 16};
    double init_scale = 0.5;
    double scale_floor = 1e-4;
    std::uint64_t seed = 1;

    void validate() const;
};

// One-dimensional Gaussian with free mean and scale, the variational marginal
// used to bound the residual-confounder information from above.
struct GaussianMarginal {
    Mat mean;      // 1 x 1
    Mat scale_raw; // 1 x 1 pre-softplus
    double scale_floor = 1e-4;
};

// Per-treatment residual encoder p(eps_i | z, t_i), reconstruction decoder
// p(t_i | z, eps_i), and marginal; trained jointly under the penalized
// reconstruction objective with the confounder held fixed.
struct LagrangianTrainer {
    std::vector<CondGaussian> encoders;  // (D+1) -> 1
    std::vector<CondGaussian> decoders;  // (D+1) -> 1
    std::vector<GaussianMarginal> marginals;
    double kappa = 0.5;

    void collect(std::vector<Mat *> &out);
};

struct LagrangianResult {
    ResidualSet set;
    LagrangianTrainer trainer;
    std::vector<double> objective_trace;
};

// Maximizes sum_i E[log p(t_i | z, eps_i)] - kappa * I_hat(eps_i, z), where
// I_hat is the variational bound E[log p(eps_i | z, t_i) - log m(eps_i)].
// The bound dominates the true information, so driving it down enforces the
// independence constraint. Throws NumericError on divergence.
LagrangianResult fit_lagrangian_residuals(const FittedConfounder &fitted, const Dataset &data,
                                          const ResidualConfig &cfg);

struct IndependenceReport {
    Mat corr; // T x D Pearson correlations, NaN where undefined
    double max_abs = 0.0;
    bool has_undefined = false;
};

IndependenceReport independence_report(const ResidualSet &res);

void write_residuals_csv(const ResidualSet &res, const std::vector<std::string> &treatment_names,
                         const std::string &path);

} // namespace mcei
