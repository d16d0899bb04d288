#include "mcei/harness.hpp"
#include "mcei/errors.hpp"
#include "mcei/residuals.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace mcei {

namespace {

double column_median(const Vec &col, const std::string &name) {
    std::vector<double> present;
    present.reserve(col.size());
    for (int r = 0; r < col.size(); ++r)
        if (std::isfinite(col(r))) present.push_back(col(r));
    if (present.empty()) throw DataError("column " + name + " has no usable values");
    std::sort(present.begin(), present.end());
    const std::size_t m = present.size() / 2;
    return present.size() % 2 == 1 ? present[m] : 0.5 * (present[m - 1] + present[m]);
}

void standardize_column(Eigen::Ref<Vec> col, const std::string &name) {
    const double n = static_cast<double>(col.size());
    double mean = col.mean();
    double var = (col.array() - mean).square().sum() / (n - 1.0);
    if (!(var > 0.0)) throw DataError("column " + name + " is constant, cannot standardize");
    col = (col.array() - mean) / std::sqrt(var);
}

} // namespace

double IngestSpec::shift_for(const std::string &column, double col_min) const {
    for (const auto &kv : shifts)
        if (kv.first == column) return kv.second;
    return 1.0 - col_min;
}

Dataset ingest(const CsvTable &table, const IngestSpec &spec) {
    std::vector<std::string> t_names = spec.treatment_columns;
    if (t_names.empty()) {
        for (const std::string &c : table.columns)
            if (c != spec.outcome_column) t_names.push_back(c);
    }
    if (t_names.empty()) throw DataError("no treatment columns to ingest");

    const int N = static_cast<int>(table.cells.rows());
    if (N < 2) throw DataError("need at least two data rows");

    auto prepare = [&](const std::string &name) {
        int idx = table.col_index(name);
        if (idx < 0) throw DataError("column " + name + " not found in the input");
        Vec col = table.cells.col(idx);
        double median = column_median(col, name);
        for (int r = 0; r < N; ++r)
            if (!std::isfinite(col(r))) col(r) = median;
        if (spec.log_transform) {
            double shift = spec.shift_for(name, col.minCoeff());
            for (int r = 0; r < N; ++r) {
                double v = col(r) + shift;
                if (!(v > 0.0))
                    throw DataError("column " + name + " has non-positive values after shift");
                col(r) = std::log(v);
            }
        }
        return col;
    };

    Dataset out;
    out.t = Mat(N, static_cast<int>(t_names.size()));
    for (std::size_t i = 0; i < t_names.size(); ++i) {
        Vec col = prepare(t_names[i]);
        if (spec.standardize) standardize_column(col, t_names[i]);
        out.t.col(static_cast<int>(i)) = col;
    }
    out.treatment_names = t_names;

    // A missing outcome column is not an error; the dataset is then
    // treatments-only, matching the plain CSV reader's behavior.
    if (!spec.outcome_column.empty() && table.col_index(spec.outcome_column) >= 0) {
        Vec y = prepare(spec.outcome_column);
        if (spec.binarize_outcome) {
            // Mean thresholding commutes with standardization, so the raw
            // transformed values are thresholded directly.
            double mean = y.mean();
            for (int r = 0; r < N; ++r) y(r) = y(r) > mean ? 1.0 : 0.0;
        } else if (spec.standardize) {
            standardize_column(y, spec.outcome_column);
        }
        out.y = y;
        out.outcome_name = spec.outcome_column;
    }
    out.require_complete();
    return out;
}

Dataset ingest_csv(const std::string &path, const IngestSpec &spec) {
    return ingest(read_csv_table(path), spec);
}

void MceiCellConfig::validate() const {
    train.validate();
    outcome.validate();
    if (probes < 1) throw ConfigError("probes must be at least 1");
    if (!(probe_step > 0.0)) throw ConfigError("probe_step must be positive");
    if (z_bank_cap < 0) throw ConfigError("z_bank_cap must be >= 0");
    if (residual_draws < 1) throw ConfigError("residual_draws must be at least 1");
    if (ensembles < 1) throw ConfigError("ensembles must be at least 1");
}

Vec mcei_effect_estimate(const Dataset &data, const MceiCellConfig &cfg, std::uint64_t seed) {
    cfg.validate();
    data.require_complete();
    if (!data.has_outcome()) throw DataError("effect estimation requires an outcome column");
    const int N = data.n(), T = data.treatments();

    // Standardize treatments and outcome; effects are mapped back at the end.
    Vec t_sd(T);
    Dataset std_data = data;
    for (int i = 0; i < T; ++i) {
        double mean = data.t.col(i).mean();
        double var = (data.t.col(i).array() - mean).square().sum() / (N - 1.0);
        if (!(var > 0.0)) throw DataError("treatment column " + std::to_string(i + 1) + " is constant");
        t_sd(i) = std::sqrt(var);
        std_data.t.col(i) = (data.t.col(i).array() - mean) / t_sd(i);
    }
    double y_mean = data.y.mean();
    double y_var = (data.y.array() - y_mean).square().sum() / (N - 1.0);
    if (!(y_var > 0.0)) throw DataError("outcome column is constant");
    const double y_sd = std::sqrt(y_var);
    std_data.y = (data.y.array() - y_mean) / y_sd;

    RngStream root(seed);
    Vec eff_std = Vec::Zero(T);
    // Ensemble members differ only in their random streams; averaging their
    // effect vectors damps optimizer and sampling noise within a cell.
    for (int e = 0; e < cfg.ensembles; ++e) {
        RngStream run = root.derive("member").derive(static_cast<std::uint64_t>(e));
        TrainConfig tc = cfg.train;
        tc.seed = run.derive("confounder").next_u64();
        FittedConfounder fitted = fit_confounder(std_data, tc);

        RngStream res_rng = run.derive("residuals");
        ResidualSet res = invert_residuals(fitted, std_data, res_rng, cfg.residual_draws);

        OutcomeConfig oc = cfg.outcome;
        oc.seed = run.derive("outcome").next_u64();
        OutcomeParams outcome = fit_outcome(res, std_data, oc);

        RngStream bank_rng = run.derive("bank");
        CausalEstimator est =
            make_causal_estimator(outcome, fitted, std_data, bank_rng, cfg.z_bank_cap);

        const int K = std::min(cfg.probes, N);
        RngStream probe_rng = run.derive("probes");
        std::vector<int> perm = probe_rng.permutation(N);
        Mat probes(K, T);
        for (int k = 0; k < K; ++k) probes.row(k) = std_data.t.row(perm[k]);

        eff_std += est.effect_vector(probes, cfg.probe_step);
    }
    eff_std /= static_cast<double>(cfg.ensembles);
    Vec eff(T);
    for (int i = 0; i < T; ++i) eff(i) = eff_std(i) * y_sd / t_sd(i);
    return eff;
}

void ExperimentConfig::validate() const {
    sim.validate();
    mcei.validate();
    if (gammas.empty()) throw ConfigError("gamma grid is empty");
    for (double g : gammas)
        if (!(g >= 0.0 && g < 1.0)) throw ConfigError("gamma values must lie in [0, 1)");
    if (redraws < 1) throw ConfigError("redraws must be at least 1");
    if (methods.empty()) throw ConfigError("method list is empty");
    for (const std::string &m : methods)
        if (m != "mcei" && m != "pca_correct" && m != "naive")
            throw ConfigError("unknown method " + m);
    if (fit_dims.empty()) throw ConfigError("fit_dims is empty");
    for (int d : fit_dims)
        if (d < 1) throw ConfigError("fit dimensions must be at least 1");
}

namespace {

std::string sanitize_status(std::string s) {
    for (char &c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}

} // namespace

std::vector<SweepRow> run_sweep(const ExperimentConfig &cfg) {
    cfg.validate();
    // The hash fingerprints the experiment, not where or how verbosely it is
    // written, so output location and timing flags are excluded.
    json hashed = experiment_config_to_json(cfg);
    hashed.erase("output_dir");
    hashed.erase("timing");
    const std::string hash = config_hash(hashed);
    RngStream root(cfg.seed);

    std::vector<SweepRow> rows;
    for (std::size_t gi = 0; gi < cfg.gammas.size(); ++gi) {
        for (int r = 0; r < cfg.redraws; ++r) {
            // One dataset per (gamma, redraw), shared by all methods and dims.
            // Redraws reuse their seed across the gamma grid, so the sweep
            // axis varies only the confounding knob and never the instance.
            SimConfig sc = cfg.sim;
            sc.gamma = cfg.gammas[gi];
            sc.seed = root.derive("sim").derive(static_cast<std::uint64_t>(r)).next_u64();
            SimDraw draw = generate(sc);
            Vec truth = true_effect_oracle(draw.truth);

            for (int fit_dim : cfg.fit_dims) {
                for (const std::string &method : cfg.methods) {
                    SweepRow row;
                    row.gamma = cfg.gammas[gi];
                    row.redraw = r;
                    row.method = method;
                    row.fit_dim = fit_dim;
                    row.seed = cfg.seed;
                    row.config_hash = hash;
                    row.code_version = kCodeVersion;

                    auto start = std::chrono::steady_clock::now();
                    try {
                        Vec effects;
                        if (method == "naive") {
                            effects = naive_regress(draw.data).effects;
                        } else if (method == "pca_correct") {
                            effects = pca_correct_regress(draw.data, fit_dim).effects;
                        } else {
                            MceiCellConfig mc = cfg.mcei;
                            mc.train.confounder_dim = fit_dim;
                            std::uint64_t cell_seed = root.derive(method)
                                                          .derive(static_cast<std::uint64_t>(gi))
                                                          .derive(static_cast<std::uint64_t>(r))
                                                          .derive(static_cast<std::uint64_t>(fit_dim))
                                                          .next_u64();
                            effects = mcei_effect_estimate(draw.data, mc, cell_seed);
                        }
                        row.scaled_mse = scaled_mse(effects, truth);
                    } catch (const std::exception &e) {
                        row.status = sanitize_status(std::string("failed: ") + e.what());
                    }
                    if (cfg.timing) {
                        auto end = std::chrono::steady_clock::now();
                        row.wall_seconds =
                            std::chrono::duration<double>(end - start).count();
                    }
                    rows.push_back(std::move(row));
                }
            }
        }
    }
    return rows;
}

void write_results_csv(const std::vector<SweepRow> &rows, const std::string &path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out << "gamma,redraw,method,fit_dim,scaled_mse,wall_seconds,status,seed,config_hash,"
           "code_version\n";
    char wall[32];
    for (const SweepRow &r : rows) {
        std::snprintf(wall, sizeof wall, "%.3f", r.wall_seconds);
        out << format_double(r.gamma) << "," << r.redraw << "," << r.method << "," << r.fit_dim
            << "," << format_double(r.scaled_mse) << "," << wall << "," << r.status << ","
            << r.seed << "," << r.config_hash << "," << r.code_version << "\n";
    }
}

std::vector<SweepRow> read_results_csv(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + " is empty");

    std::vector<SweepRow> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 10)
            throw DataError(path + ":" + std::to_string(line_no) + ": expected 10 fields");
        SweepRow r;
        try {
            r.gamma = std::stod(f[0]);
            r.redraw = std::stoi(f[1]);
            r.method = f[2];
            r.fit_dim = std::stoi(f[3]);
            r.scaled_mse = f[4] == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[4]);
            r.wall_seconds = std::stod(f[5]);
            r.status = f[6];
            r.seed = std::stoull(f[7]);
            r.config_hash = f[8];
            r.code_version = f[9];
        } catch (const std::exception &) {
            throw DataError(path + ":" + std::to_string(line_no) + ": malformed row");
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

namespace {

struct GroupKey {
    double gamma;
    std::string method;
    int fit_dim;
    bool operator<(const GroupKey &o) const {
        if (gamma != o.gamma) return gamma < o.gamma;
        if (method != o.method) return method < o.method;
        return fit_dim < o.fit_dim;
    }
};

struct GroupStats {
    std::vector<double> mses;
    int failed = 0;
};

} // namespace

void emit_report(const std::vector<SweepRow> &rows, const std::string &out_dir) {
    if (rows.empty()) throw DataError("no sweep rows to report on");
    std::filesystem::create_directories(out_dir);

    std::map<GroupKey, GroupStats> groups;
    for (const SweepRow &r : rows) {
        GroupStats &g = groups[GroupKey{r.gamma, r.method, r.fit_dim}];
        if (r.status == "ok" && std::isfinite(r.scaled_mse))
            g.mses.push_back(r.scaled_mse);
        else
            ++g.failed;
    }

    json summary;
    summary["schema_version"] = kSchemaVersion;
    summary["code_version"] = kCodeVersion;
    summary["config_hash"] = rows.front().config_hash;
    summary["groups"] = json::array();

    std::ofstream csv(out_dir + "/summary.csv");
    if (!csv) throw DataError("cannot open " + out_dir + "/summary.csv for writing");
    csv << "gamma,method,fit_dim,mean_scaled_mse,sd_scaled_mse,ok_cells,failed_cells\n";

    std::map<std::pair<std::string, int>, std::vector<std::pair<double, std::pair<double, double>>>>
        series;
    for (const auto &kv : groups) {
        const GroupKey &k = kv.first;
        const GroupStats &g = kv.second;
        double mean = std::numeric_limits<double>::quiet_NaN();
        double sd = std::numeric_limits<double>::quiet_NaN();
        if (!g.mses.empty()) {
            mean = 0.0;
            for (double v : g.mses) mean += v;
            mean /= static_cast<double>(g.mses.size());
            sd = 0.0;
            if (g.mses.size() > 1) {
                for (double v : g.mses) sd += (v - mean) * (v - mean);
                sd = std::sqrt(sd / static_cast<double>(g.mses.size() - 1));
            }
        }
        json row{{"gamma", k.gamma},
                 {"method", k.method},
                 {"fit_dim", k.fit_dim},
                 {"ok_cells", static_cast<int>(g.mses.size())},
                 {"failed_cells", g.failed}};
        if (std::isfinite(mean)) {
            row["mean_scaled_mse"] = mean;
            row["sd_scaled_mse"] = sd;
        } else {
            row["mean_scaled_mse"] = nullptr;
            row["sd_scaled_mse"] = nullptr;
        }
        summary["groups"].push_back(row);
        csv << format_double(k.gamma) << "," << k.method << "," << k.fit_dim << ","
            << format_double(mean) << "," << format_double(sd) << "," << g.mses.size() << ","
            << g.failed << "\n";
        if (std::isfinite(mean))
            series[{k.method, k.fit_dim}].push_back({k.gamma, {mean, sd}});
    }

    std::ofstream js(out_dir + "/summary.json");
    if (!js) throw DataError("cannot open " + out_dir + "/summary.json for writing");
    js << summary.dump(2) << "\n";

    for (const auto &kv : series) {
        std::string base =
            out_dir + "/plot_" + kv.first.first + "_dim" + std::to_string(kv.first.second);
        std::ofstream mean_out(base + ".csv");
        std::ofstream sd_out(base + "_sd.csv");
        if (!mean_out || !sd_out) throw DataError("cannot write plot series under " + out_dir);
        mean_out << "gamma,mean_scaled_mse\n";
        sd_out << "gamma,sd_scaled_mse\n";
        for (const auto &pt : kv.second) {
            mean_out << format_double(pt.first) << "," << format_double(pt.second.first) << "\n";
            sd_out << format_double(pt.first) << "," << format_double(pt.second.second) << "\n";
        }
    }
}

json outcome_config_to_json(const OutcomeConfig &cfg) {
    return json{{"hidden", cfg.hidden},
                {"learning_rate", cfg.learning_rate},
                {"adaptive", cfg.adaptive},
                {"steps", cfg.steps},
                {"batch_size", cfg.batch_size},
                {"seed", cfg.seed},
                {"logistic", cfg.logistic},
                {"fixed_sd", cfg.fixed_sd}};
}

OutcomeConfig outcome_config_from_json(const json &j) {
    OutcomeConfig cfg;
    cfg.hidden = j.value("hidden", cfg.hidden);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.adaptive = j.value("adaptive", cfg.adaptive);
    cfg.steps = j.value("steps", cfg.steps);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.logistic = j.value("logistic", cfg.logistic);
    cfg.fixed_sd = j.value("fixed_sd", cfg.fixed_sd);
    return cfg;
}

json experiment_config_to_json(const ExperimentConfig &cfg) {
    return json{{"schema_version", kSchemaVersion},
                {"sim", sim_config_to_json(cfg.sim)},
                {"gammas", cfg.gammas},
                {"redraws", cfg.redraws},
                {"methods", cfg.methods},
                {"fit_dims", cfg.fit_dims},
                {"train", train_config_to_json(cfg.mcei.train)},
                {"outcome", outcome_config_to_json(cfg.mcei.outcome)},
                {"probes", cfg.mcei.probes},
                {"probe_step", cfg.mcei.probe_step},
                {"z_bank_cap", cfg.mcei.z_bank_cap},
                {"residual_draws", cfg.mcei.residual_draws},
                {"ensembles", cfg.mcei.ensembles},
                {"seed", cfg.seed},
                {"timing", cfg.timing},
                {"output_dir", cfg.output_dir}};
}

ExperimentConfig experiment_config_from_json(const json &j) {
    ExperimentConfig cfg;
    if (j.contains("sim")) cfg.sim = sim_config_from_json(j.at("sim"));
    cfg.gammas = j.value("gammas", cfg.gammas);
    cfg.redraws = j.value("redraws", cfg.redraws);
    cfg.methods = j.value("methods", cfg.methods);
    cfg.fit_dims = j.value("fit_dims", cfg.fit_dims);
    if (j.contains("train")) cfg.mcei.train = train_config_from_json(j.at("train"));
    if (j.contains("outcome")) cfg.mcei.outcome = outcome_config_from_json(j.at("outcome"));
    cfg.mcei.probes = j.value("probes", cfg.mcei.probes);
    cfg.mcei.probe_step = j.value("probe_step", cfg.mcei.probe_step);
    cfg.mcei.z_bank_cap = j.value("z_bank_cap", cfg.mcei.z_bank_cap);
    cfg.mcei.residual_draws = j.value("residual_draws", cfg.mcei.residual_draws);
    cfg.mcei.ensembles = j.value("ensembles", cfg.mcei.ensembles);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.timing = j.value("timing", cfg.timing);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.validate();
    return cfg;
}

std::string config_hash(const json &j) {
    std::uint64_t h = RngStream::fnv1a(j.dump());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

} // namespace mcei
