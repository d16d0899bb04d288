// Command-line front end: simulate, ingest, fit, residuals, effects, sweep,
// report. A JSON config file can drive any stage; explicit flags override it.
// Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
// failure.
#include "CLI11.hpp"

#include "mcei/errors.hpp"
#include "mcei/harness.hpp"
#include "mcei/residuals.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using namespace mcei;

json load_json_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception &e) {
        throw ConfigError(path + " is not valid JSON: " + e.what());
    }
}

// The unified config file nests stage sections; a bare section is accepted
// anywhere so small files stay small.
json section(const json &j, const std::string &key) {
    return j.contains(key) ? j.at(key) : j;
}

std::vector<std::pair<std::string, double>> parse_shifts(const std::vector<std::string> &raw) {
    std::vector<std::pair<std::string, double>> shifts;
    for (const std::string &s : raw) {
        std::size_t eq = s.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("shift must look like column=value, got '" + s + "'");
        try {
            shifts.emplace_back(s.substr(0, eq), std::stod(s.substr(eq + 1)));
        } catch (const std::exception &) {
            throw ConfigError("bad shift value in '" + s + "'");
        }
    }
    return shifts;
}

struct SimulateArgs {
    SimConfig cfg;
    std::string config_file;
    std::string out;
    std::string truth_out;
};

int run_simulate(const SimulateArgs &a, const std::vector<CLI::Option *> &set_flags) {
    SimConfig cfg = a.cfg;
    if (!a.config_file.empty()) {
        cfg = sim_config_from_json(section(load_json_file(a.config_file), "sim"));
        // Flags beat the file; a.cfg holds the parsed flag values.
        for (const CLI::Option *o : set_flags)
            if (o->count() > 0) {
                const std::string n = o->get_name();
                if (n == "--n") cfg.n = a.cfg.n;
                else if (n == "--treatments") cfg.treatments = a.cfg.treatments;
                else if (n == "--true-dim") cfg.true_dim = a.cfg.true_dim;
                else if (n == "--gamma") cfg.gamma = a.cfg.gamma;
                else if (n == "--sim-sd") cfg.sim_sd = a.cfg.sim_sd;
                else if (n == "--outcome-sd") cfg.outcome_sd = a.cfg.outcome_sd;
                else if (n == "--seed") cfg.seed = a.cfg.seed;
            }
    }
    SimDraw draw = generate(cfg);
    write_dataset_csv(draw.data, a.out);
    std::cout << "wrote " << draw.data.n() << " rows x " << draw.data.treatments()
              << " treatments to " << a.out << "\n";
    if (!a.truth_out.empty()) {
        save_truth(draw.truth, cfg, a.truth_out);
        std::cout << "wrote generative truth to " << a.truth_out << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    using namespace mcei;

    CLI::App app{"latent-confounder effect estimation from multiple treatments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kCodeVersion));

    // simulate
    SimulateArgs sim;
    CLI::App *c_sim = app.add_subcommand("simulate", "draw a synthetic dataset");
    std::vector<CLI::Option *> sim_opts;
    sim_opts.push_back(c_sim->add_option("--n", sim.cfg.n, "observations"));
    sim_opts.push_back(c_sim->add_option("--treatments", sim.cfg.treatments, "treatment count"));
    sim_opts.push_back(c_sim->add_option("--true-dim", sim.cfg.true_dim, "confounder dimension"));
    sim_opts.push_back(c_sim->add_option("--gamma", sim.cfg.gamma, "confounding strength in [0,1)"));
    sim_opts.push_back(c_sim->add_option("--sim-sd", sim.cfg.sim_sd, "treatment noise sd"));
    sim_opts.push_back(c_sim->add_option("--outcome-sd", sim.cfg.outcome_sd, "outcome noise sd"));
    sim_opts.push_back(c_sim->add_option("--seed", sim.cfg.seed, "rng seed"));
    c_sim->add_option("--config", sim.config_file, "JSON config file (sim section)");
    c_sim->add_option("--out", sim.out, "output dataset CSV")->required();
    c_sim->add_option("--truth-out", sim.truth_out, "sidecar JSON with the generative truth");

    // ingest
    std::string in_input, in_out, in_outcome = "y";
    std::vector<std::string> in_columns, in_shifts;
    bool in_log = false, in_std = false, in_bin = false;
    CLI::App *c_ing = app.add_subcommand("ingest", "preprocess a raw CSV into a dataset");
    c_ing->add_option("--input", in_input, "raw CSV with a header row")->required();
    c_ing->add_option("--out", in_out, "output dataset CSV")->required();
    c_ing->add_option("--outcome", in_outcome, "outcome column name ('' for none)");
    c_ing->add_option("--columns", in_columns, "treatment columns (default: all non-outcome)");
    c_ing->add_option("--shift", in_shifts, "per-column log shift, column=value (repeatable)");
    c_ing->add_flag("--log", in_log, "apply shifted log transform");
    c_ing->add_flag("--standardize", in_std, "standardize columns");
    c_ing->add_flag("--binarize-outcome", in_bin, "threshold the outcome at its mean");

    // fit
    std::string f_input, f_out, f_outcome = "y", f_config, f_bound = "auxiliary";
    TrainConfig f_train;
    bool f_nonlinear = false;
    CLI::App *c_fit = app.add_subcommand("fit", "fit the confounder model with alpha selection");
    c_fit->add_option("--input", f_input, "dataset CSV")->required();
    c_fit->add_option("--out", f_out, "output model JSON")->required();
    c_fit->add_option("--outcome", f_outcome, "outcome column to exclude from the fit");
    c_fit->add_option("--config", f_config, "JSON config file (train section)");
    std::vector<CLI::Option *> fit_opts;
    fit_opts.push_back(c_fit->add_option("--dim", f_train.confounder_dim, "confounder dimension"));
    fit_opts.push_back(c_fit->add_option("--alphas", f_train.alpha_grid, "alpha grid"));
    fit_opts.push_back(c_fit->add_option("--lr", f_train.learning_rate, "learning rate"));
    fit_opts.push_back(c_fit->add_option("--steps", f_train.steps, "gradient steps per alpha"));
    fit_opts.push_back(c_fit->add_option("--batch", f_train.batch_size, "batch size"));
    fit_opts.push_back(c_fit->add_option("--mc-samples", f_train.mc_samples, "noise draws per step"));
    fit_opts.push_back(c_fit->add_option("--holdout", f_train.holdout_fraction, "holdout fraction"));
    fit_opts.push_back(
        c_fit->add_option("--tolerance", f_train.rel_tolerance, "alpha selection tolerance"));
    fit_opts.push_back(c_fit->add_option("--seed", f_train.seed, "rng seed"));
    fit_opts.push_back(c_fit->add_option("--eval-mc", f_train.eval_mc_samples,
                                         "z draws per holdout point"));
    CLI::Option *o_bound =
        c_fit->add_option("--bound", f_bound, "information bound: auxiliary or direct")
            ->check(CLI::IsMember({"auxiliary", "direct"}));
    CLI::Option *o_nonlin =
        c_fit->add_flag("--nonlinear-encoder", f_nonlinear, "use a nonlinear encoder mean");

    // residuals
    std::string r_model, r_input, r_out, r_outcome = "y", r_method = "inversion";
    int r_draws = 1;
    ResidualConfig r_cfg;
    CLI::App *c_res = app.add_subcommand("residuals", "extract per-treatment residuals");
    c_res->add_option("--model", r_model, "fitted model JSON")->required();
    c_res->add_option("--input", r_input, "dataset CSV")->required();
    c_res->add_option("--out", r_out, "output residual CSV")->required();
    c_res->add_option("--outcome", r_outcome, "outcome column to exclude");
    c_res->add_option("--method", r_method, "inversion or lagrangian")
        ->check(CLI::IsMember({"inversion", "lagrangian"}));
    c_res->add_option("--draws", r_draws, "posterior draws averaged by inversion");
    c_res->add_option("--kappa", r_cfg.kappa, "lagrangian information penalty");
    c_res->add_option("--steps", r_cfg.steps, "lagrangian gradient steps");
    c_res->add_option("--batch", r_cfg.batch_size, "lagrangian batch size");
    c_res->add_option("--lr", r_cfg.learning_rate, "lagrangian learning rate");
    c_res->add_option("--seed", r_cfg.seed, "rng seed");

    // effects
    std::string e_model, e_input, e_out, e_outcome = "y";
    MceiCellConfig e_cell;
    std::uint64_t e_seed = 1;
    CLI::App *c_eff = app.add_subcommand(
        "effects", "estimate do-intervention effects from a fitted model (data used as-is; "
                   "standardize via ingest)");
    c_eff->add_option("--model", e_model, "fitted model JSON")->required();
    c_eff->add_option("--input", e_input, "dataset CSV with the outcome")->required();
    c_eff->add_option("--out", e_out, "output effects CSV")->required();
    c_eff->add_option("--outcome", e_outcome, "outcome column name");
    c_eff->add_option("--outcome-steps", e_cell.outcome.steps, "outcome training steps");
    c_eff->add_option("--outcome-hidden", e_cell.outcome.hidden, "outcome net hidden widths");
    c_eff->add_flag("--logistic", e_cell.outcome.logistic, "binary outcome, log-odds effects");
    c_eff->add_option("--probes", e_cell.probes, "finite-difference probe rows");
    c_eff->add_option("--probe-step", e_cell.probe_step, "finite-difference step");
    c_eff->add_option("--z-bank-cap", e_cell.z_bank_cap, "cap on confounder bank draws (0 = all)");
    c_eff->add_option("--draws", e_cell.residual_draws, "posterior draws for residual inversion");
    c_eff->add_option("--seed", e_seed, "rng seed");

    // sweep
    std::string s_config, s_outdir;
    ExperimentConfig s_cfg;
    CLI::App *c_swp = app.add_subcommand("sweep", "run the gamma grid experiment");
    c_swp->add_option("--config", s_config, "JSON experiment config");
    std::vector<CLI::Option *> swp_opts;
    swp_opts.push_back(c_swp->add_option("--gammas", s_cfg.gammas, "gamma grid"));
    swp_opts.push_back(c_swp->add_option("--redraws", s_cfg.redraws, "redraws per gamma"));
    swp_opts.push_back(c_swp->add_option("--methods", s_cfg.methods,
                                         "subset of mcei, pca_correct, naive"));
    swp_opts.push_back(c_swp->add_option("--fit-dims", s_cfg.fit_dims, "estimator dimensions"));
    swp_opts.push_back(c_swp->add_option("--n", s_cfg.sim.n, "observations per draw"));
    swp_opts.push_back(c_swp->add_option("--treatments", s_cfg.sim.treatments, "treatment count"));
    swp_opts.push_back(c_swp->add_option("--true-dim", s_cfg.sim.true_dim,
                                         "generative confounder dimension"));
    swp_opts.push_back(c_swp->add_option("--alphas", s_cfg.mcei.train.alpha_grid, "alpha grid"));
    swp_opts.push_back(c_swp->add_option("--steps", s_cfg.mcei.train.steps, "confounder steps"));
    swp_opts.push_back(
        c_swp->add_option("--outcome-steps", s_cfg.mcei.outcome.steps, "outcome steps"));
    swp_opts.push_back(c_swp->add_option("--probes", s_cfg.mcei.probes, "probe rows"));
    swp_opts.push_back(c_swp->add_option("--probe-step", s_cfg.mcei.probe_step, "probe step"));
    swp_opts.push_back(
        c_swp->add_option("--z-bank-cap", s_cfg.mcei.z_bank_cap, "confounder bank cap"));
    swp_opts.push_back(
        c_swp->add_option("--ensembles", s_cfg.mcei.ensembles, "averaged pipeline runs per cell"));
    swp_opts.push_back(c_swp->add_option("--seed", s_cfg.seed, "experiment seed"));
    swp_opts.push_back(c_swp->add_option("--output-dir", s_cfg.output_dir, "output directory"));
    CLI::Option *o_timing = c_swp->add_flag("--timing", s_cfg.timing, "record real wall times");

    // report
    std::string rep_results, rep_outdir = ".";
    CLI::App *c_rep = app.add_subcommand("report", "aggregate a results CSV into summaries");
    c_rep->add_option("--results", rep_results, "results CSV from a sweep")->required();
    c_rep->add_option("--out-dir", rep_outdir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*c_sim) {
            return run_simulate(sim, sim_opts);
        }
        if (*c_ing) {
            IngestSpec spec;
            spec.treatment_columns = in_columns;
            spec.outcome_column = in_outcome;
            spec.log_transform = in_log;
            spec.standardize = in_std;
            spec.binarize_outcome = in_bin;
            spec.shifts = parse_shifts(in_shifts);
            Dataset d = ingest_csv(in_input, spec);
            write_dataset_csv(d, in_out);
            std::cout << "wrote " << d.n() << " rows x " << d.treatments() << " treatments"
                      << (d.has_outcome() ? " + outcome" : "") << " to " << in_out << "\n";
            return 0;
        }
        if (*c_fit) {
            TrainConfig tc = f_train;
            if (!f_config.empty()) {
                tc = train_config_from_json(section(load_json_file(f_config), "train"));
                for (const CLI::Option *o : fit_opts)
                    if (o->count() > 0) {
                        const std::string n = o->get_name();
                        if (n == "--dim") tc.confounder_dim = f_train.confounder_dim;
                        else if (n == "--alphas") tc.alpha_grid = f_train.alpha_grid;
                        else if (n == "--lr") tc.learning_rate = f_train.learning_rate;
                        else if (n == "--steps") tc.steps = f_train.steps;
                        else if (n == "--batch") tc.batch_size = f_train.batch_size;
                        else if (n == "--mc-samples") tc.mc_samples = f_train.mc_samples;
                        else if (n == "--holdout") tc.holdout_fraction = f_train.holdout_fraction;
                        else if (n == "--tolerance") tc.rel_tolerance = f_train.rel_tolerance;
                        else if (n == "--seed") tc.seed = f_train.seed;
                        else if (n == "--eval-mc") tc.eval_mc_samples = f_train.eval_mc_samples;
                    }
            }
            if (o_bound->count() > 0 || f_config.empty())
                tc.bound = f_bound == "direct" ? BoundKind::kDirect : BoundKind::kAuxiliary;
            if (o_nonlin->count() > 0) tc.nonlinear_encoder = f_nonlinear;

            Dataset d = read_dataset_csv(f_input, f_outcome);
            FittedConfounder fitted = fit_confounder(d, tc);
            for (const AlphaResult &ar : fitted.alpha_table) {
                std::cout << "alpha " << ar.alpha << ": ";
                if (ar.failed)
                    std::cout << "failed (" << ar.message << ")\n";
                else
                    std::cout << "holdout predictive " << ar.score << "\n";
            }
            std::cout << "selected alpha " << fitted.alpha << "\n";
            save_fitted(fitted, f_out);
            std::cout << "wrote model to " << f_out << "\n";
            return 0;
        }
        if (*c_res) {
            FittedConfounder fitted = load_fitted(r_model);
            Dataset d = read_dataset_csv(r_input, r_outcome);
            ResidualSet set;
            if (r_method == "lagrangian") {
                LagrangianResult lag = fit_lagrangian_residuals(fitted, d, r_cfg);
                set = std::move(lag.set);
            } else {
                RngStream rng(r_cfg.seed);
                set = invert_residuals(fitted, d, rng, r_draws);
            }
            IndependenceReport rep = independence_report(set);
            std::cout << "max |corr(eps_i, z_d)| = " << rep.max_abs
                      << (rep.has_undefined ? " (some undefined)" : "") << "\n";
            write_residuals_csv(set, d.treatment_names, r_out);
            std::cout << "wrote residuals to " << r_out << "\n";
            return 0;
        }
        if (*c_eff) {
            FittedConfounder fitted = load_fitted(e_model);
            Dataset d = read_dataset_csv(e_input, e_outcome);
            if (!d.has_outcome()) throw DataError("effects needs an outcome column");
            e_cell.validate();

            RngStream root(e_seed);
            RngStream res_rng = root.derive("residuals");
            ResidualSet res = invert_residuals(fitted, d, res_rng, e_cell.residual_draws);
            OutcomeConfig oc = e_cell.outcome;
            oc.seed = root.derive("outcome").next_u64();
            OutcomeParams outcome = fit_outcome(res, d, oc);
            RngStream bank_rng = root.derive("bank");
            CausalEstimator est =
                make_causal_estimator(outcome, fitted, d, bank_rng, e_cell.z_bank_cap);

            const int K = std::min(e_cell.probes, d.n());
            RngStream probe_rng = root.derive("probes");
            std::vector<int> perm = probe_rng.permutation(d.n());
            Mat probes(K, d.treatments());
            for (int k = 0; k < K; ++k) probes.row(k) = d.t.row(perm[k]);

            Vec se;
            Vec eff = est.effect_vector(probes, e_cell.probe_step, &se);
            write_effects_csv(d.treatment_names, eff, se, e_out);
            std::cout << "wrote " << eff.size() << " effects to " << e_out << "\n";
            return 0;
        }
        if (*c_swp) {
            ExperimentConfig cfg = s_cfg;
            if (!s_config.empty()) {
                cfg = experiment_config_from_json(load_json_file(s_config));
                for (const CLI::Option *o : swp_opts)
                    if (o->count() > 0) {
                        const std::string n = o->get_name();
                        if (n == "--gammas") cfg.gammas = s_cfg.gammas;
                        else if (n == "--redraws") cfg.redraws = s_cfg.redraws;
                        else if (n == "--methods") cfg.methods = s_cfg.methods;
                        else if (n == "--fit-dims") cfg.fit_dims = s_cfg.fit_dims;
                        else if (n == "--n") cfg.sim.n = s_cfg.sim.n;
                        else if (n == "--treatments") cfg.sim.treatments = s_cfg.sim.treatments;
                        else if (n == "--true-dim") cfg.sim.true_dim = s_cfg.sim.true_dim;
                        else if (n == "--alphas") cfg.mcei.train.alpha_grid = s_cfg.mcei.train.alpha_grid;
                        else if (n == "--steps") cfg.mcei.train.steps = s_cfg.mcei.train.steps;
                        else if (n == "--outcome-steps") cfg.mcei.outcome.steps = s_cfg.mcei.outcome.steps;
                        else if (n == "--probes") cfg.mcei.probes = s_cfg.mcei.probes;
                        else if (n == "--probe-step") cfg.mcei.probe_step = s_cfg.mcei.probe_step;
                        else if (n == "--z-bank-cap") cfg.mcei.z_bank_cap = s_cfg.mcei.z_bank_cap;
                        else if (n == "--ensembles") cfg.mcei.ensembles = s_cfg.mcei.ensembles;
                        else if (n == "--seed") cfg.seed = s_cfg.seed;
                        else if (n == "--output-dir") cfg.output_dir = s_cfg.output_dir;
                    }
                if (o_timing->count() > 0) cfg.timing = s_cfg.timing;
            }
            std::vector<SweepRow> rows = run_sweep(cfg);
            std::filesystem::create_directories(cfg.output_dir);
            const std::string path = cfg.output_dir + "/results.csv";
            write_results_csv(rows, path);
            int failed = 0;
            for (const SweepRow &r : rows)
                if (r.status != "ok") ++failed;
            std::cout << "wrote " << rows.size() << " cells (" << failed << " failed) to " << path
                      << "\n";
            return 0;
        }
        if (*c_rep) {
            std::vector<SweepRow> rows = read_results_csv(rep_results);
            emit_report(rows, rep_outdir);
            std::cout << "wrote summary.json, summary.csv, and plot series to " << rep_outdir
                      << "\n";
            return 0;
        }
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError &e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError &e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
