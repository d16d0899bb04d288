#include "mcei/simulation.hpp"
#include "mcei/errors.hpp"

#include <cmath>
#include <fstream>

namespace mcei {

void SimConfig::validate() const {
    if (n < 1) throw ConfigError("simulation n must be at least 1");
    if (treatments < 1) throw ConfigError("simulation treatments must be at least 1");
    if (true_dim < 1) throw ConfigError("simulation true_dim must be at least 1");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
    if (sim_sd < 0.0) throw ConfigError("sim_sd must be >= 0");
    if (outcome_sd < 0.0) throw ConfigError("outcome_sd must be >= 0");
}

SimDraw generate(const SimConfig &cfg) {
    cfg.validate();
    const int N = cfg.n, T = cfg.treatments, D = cfg.true_dim;
    RngStream root(cfg.seed);

    SimTruth truth;
    truth.gamma = cfg.gamma;
    truth.W = root.derive("W").normal_mat(T, D).cwiseAbs();
    truth.b_eps = root.derive("b_eps").normal_mat(T, 1).cwiseAbs();
    for (int i = 0; i < T; ++i)
        truth.b_eps(i) *= std::pow(static_cast<double>(i + 1), -0.6);
    truth.b_z = root.derive("b_z").normal_mat(D, 1).cwiseAbs();

    const double z_sd = std::sqrt(cfg.gamma);
    const double eps_sd = std::sqrt(1.0 - cfg.gamma);
    truth.z = z_sd * root.derive("z").normal_mat(N, D);
    truth.eps = eps_sd * root.derive("eps").normal_mat(N, T);

    SimDraw out;
    out.truth = truth;
    out.data.t = truth.z * truth.W.transpose() + truth.eps +
                 cfg.sim_sd * root.derive("t_noise").normal_mat(N, T);
    out.data.y = (1.0 - cfg.gamma) * (truth.eps * truth.b_eps) +
                 cfg.gamma * (truth.z.cwiseAbs() * truth.b_z) +
                 cfg.outcome_sd * root.derive("y_noise").normal_mat(N, 1);
    out.data.default_names();
    return out;
}

Vec true_effect_oracle(const SimTruth &truth) { return (1.0 - truth.gamma) * truth.b_eps; }

double scaled_mse(const Vec &estimate, const Vec &truth) {
    if (estimate.size() != truth.size()) throw DataError("scaled_mse: size mismatch");
    const double denom = truth.squaredNorm();
    if (denom <= 0.0) throw DataError("scaled_mse: truth vector has zero norm");
    return (estimate - truth).squaredNorm() / denom;
}

json sim_config_to_json(const SimConfig &cfg) {
    return json{{"n", cfg.n},
                {"treatments", cfg.treatments},
                {"true_dim", cfg.true_dim},
                {"gamma", cfg.gamma},
                {"sim_sd", cfg.sim_sd},
                {"outcome_sd", cfg.outcome_sd},
                {"seed", cfg.seed}};
}

SimConfig sim_config_from_json(const json &j) {
    SimConfig cfg;
    cfg.n = j.value("n", cfg.n);
    cfg.treatments = j.value("treatments", cfg.treatments);
    cfg.true_dim = j.value("true_dim", cfg.true_dim);
    cfg.gamma = j.value("gamma", cfg.gamma);
    cfg.sim_sd = j.value("sim_sd", cfg.sim_sd);
    cfg.outcome_sd = j.value("outcome_sd", cfg.outcome_sd);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.validate();
    return cfg;
}

json truth_to_json(const SimTruth &truth, const SimConfig &cfg) {
    Vec effects = true_effect_oracle(truth);
    return json{{"schema_version", kSchemaVersion},
                {"config", sim_config_to_json(cfg)},
                {"W", mat_to_json(truth.W)},
                {"b_eps", mat_to_json(truth.b_eps)},
                {"b_z", mat_to_json(truth.b_z)},
                {"gamma", truth.gamma},
                {"true_effects", mat_to_json(effects)}};
}

void save_truth(const SimTruth &truth, const SimConfig &cfg, const std::string &path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out << truth_to_json(truth, cfg).dump(2) << "\n";
}

Vec true_effects_from_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    json j = json::parse(in, nullptr, true, true);
    if (!j.contains("true_effects")) throw DataError(path + ": no true_effects field");
    Mat m = mat_from_json(j.at("true_effects"));
    if (m.cols() != 1) throw DataError(path + ": true_effects must be a column");
    return m.col(0);
}

} // namespace mcei
