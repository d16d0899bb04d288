#pragma once
#include "mcei/dataset.hpp"
#include "mcei/rng.hpp"
#include "mcei/serialize.hpp"

#include <cstdint>

namespace mcei {

// Synthetic generator: a shared low-dimensional confounder drives all
// treatments, and the outcome mixes the treatment-specific noise with a
// nonlinear function of the confounder. gamma in [0, 1) is the confounding
// rate: var(z) = gamma per coordinate and var(eps) = 1 - gamma, so raising
// gamma shifts signal from the direct path into the confounded one.
// sim_sd and outcome_sd are standard deviations; that convention is used
// for every noise knob in this repository.
struct SimConfig {
    int n = 10000;
    int treatments = 50;
    int true_dim = 2;
    double gamma = 0.5;
    double sim_sd = 0.02;
    double outcome_sd = 0.1;
    std::uint64_t seed = 1;

    void validate() const;
};

// Ground truth for one generated dataset. Loading weights and outcome
// weights are absolute values of standard normal draws; b_eps additionally
// decays as (i+1)^-0.6 so the outcome variance stays bounded in T.
// The realized latents are kept so diagnostics can correlate estimated
// residuals and confounders against them.
struct SimTruth {
    Mat W;      // treatments x true_dim
    Vec b_eps;  // length treatments, decay already applied
    Vec b_z;    // length true_dim
    double gamma = 0.0;
    Mat z;      // n x true_dim realized confounders
    Mat eps;    // n x treatments realized treatment noise
};

struct SimDraw {
    Dataset data;
    SimTruth truth;
};

SimDraw generate(const SimConfig &cfg);

// Effect of do(t_i) on E[y]: y depends on t only through eps = t - Wz, so
// each unit of t_i moves y by (1 - gamma) * b_eps_i.
Vec true_effect_oracle(const SimTruth &truth);

// ||estimate - truth||^2 / ||truth||^2
double scaled_mse(const Vec &estimate, const Vec &truth);

json sim_config_to_json(const SimConfig &cfg);
SimConfig sim_config_from_json(const json &j);

// Sidecar with the config and everything needed to score an estimate;
// realized latents stay out of it.
json truth_to_json(const SimTruth &truth, const SimConfig &cfg);
void save_truth(const SimTruth &truth, const SimConfig &cfg, const std::string &path);
Vec true_effects_from_file(const std::string &path);

} // namespace mcei
