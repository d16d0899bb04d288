#pragma once
#include "mcei/residuals.hpp"

namespace mcei {

struct OutcomeConfig {
    std::vector<int> hidden = {16, 16, 16};
    double learning_rate = 0.02;
    bool adaptive = true;
    int steps = 600;
    int batch_size = 96;
    std::uint64_t seed = 1;
    bool logistic = false; // binary outcome on the log-odds scale
    double fixed_sd = 1.0; // Gaussian head observation sd, not learned

    void validate() const;
};

// Outcome regression on (z, eps) only. Raw treatments never enter the fit:
// given t the confounder carries no extra information about y, so a
// regression on (z, t) is free to ignore z and lose the causal correction.
struct OutcomeParams {
    Mlp mean_net; // (D + T) -> 1
    bool logistic = false;
    double fixed_sd = 1.0;

    int input_dim() const { return mean_net.in_dim(); }
};

OutcomeParams fit_outcome(const ResidualSet &residuals, const Dataset &data,
                          const OutcomeConfig &cfg);

// Mean prediction (or log-odds when logistic) at columns of x = [z; eps].
Eigen::RowVectorXd outcome_predict(const OutcomeParams &outcome, const Mat &x);

// Intervention machinery: E[y | do(t = t*)] is the z-average of the outcome
// model at eps = (t* - mu(z)) / s. The z bank is one posterior draw per
// dataset row (optionally capped); decoder means over the bank are cached
// since they do not depend on t*.
struct CausalEstimator {
    OutcomeParams outcome;
    Mat z_bank_cols; // D x M
    Mat mu_bank;     // T x M decoder means at each bank draw
    Vec s;           // per-treatment decoder scales

    int bank_size() const { return static_cast<int>(z_bank_cols.cols()); }
    int treatments() const { return static_cast<int>(mu_bank.rows()); }

    double do_estimate(const Vec &t_star) const;
    // Average central difference of do_estimate over probe rows (K x T),
    // per treatment; stderr_out gets the probe-spread standard error.
    Vec effect_vector(const Mat &probe_points, double h, Vec *stderr_out = nullptr) const;
};

CausalEstimator make_causal_estimator(const OutcomeParams &outcome, const FittedConfounder &fitted,
                                      const Dataset &data, RngStream &rng, int bank_cap = 0);

void write_effects_csv(const std::vector<std::string> &treatment_names, const Vec &effects,
                       const Vec &stderrs, const std::string &path);

} // namespace mcei
