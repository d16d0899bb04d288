#pragma once
#include "mcei/baselines.hpp"
#include "mcei/outcome.hpp"
#include "mcei/simulation.hpp"

namespace mcei {

// Column preprocessing: median imputation, optional shifted log, optional
// standardization, optional mean-threshold binarization of the outcome.
struct IngestSpec {
    std::vector<std::string> treatment_columns; // empty means every non-outcome column
    std::string outcome_column = "y";           // empty means no outcome
    bool log_transform = false;
    bool standardize = false;
    bool binarize_outcome = false;
    // Additive constants applied inside the log; columns not listed get
    // 1 - min(column), which makes every argument at least 1.
    std::vector<std::pair<std::string, double>> shifts;

    double shift_for(const std::string &column, double col_min) const;
};

Dataset ingest(const CsvTable &table, const IngestSpec &spec);
Dataset ingest_csv(const std::string &path, const IngestSpec &spec);

// Full treatment-effect pipeline on one dataset: confounder fit, residual
// inversion, outcome regression on (z, eps), and finite-difference effect
// extraction. Treatments and outcome are standardized internally and the
// effects mapped back to the raw scale.
struct MceiCellConfig {
    TrainConfig train;
    OutcomeConfig outcome;
    int probes = 100;          // probe rows for effect extraction
    double probe_step = 0.1;   // finite-difference step, standardized units
    int z_bank_cap = 0;        // 0 keeps one bank draw per row
    int residual_draws = 1;
    int ensembles = 1;         // independent pipeline runs averaged per cell

    void validate() const;
};

Vec mcei_effect_estimate(const Dataset &data, const MceiCellConfig &cfg, std::uint64_t seed);

struct ExperimentConfig {
    SimConfig sim; // gamma and seed are overridden per sweep cell
    std::vector<double> gammas = {0.1, 0.3, 0.5, 0.7, 0.9};
    int redraws = 5;
    std::vector<std::string> methods = {"mcei", "pca_correct", "naive"};
    std::vector<int> fit_dims = {2};
    MceiCellConfig mcei;
    std::uint64_t seed = 1;
    bool timing = false; // emit real wall_seconds instead of the 0.000 placeholder
    std::string output_dir = ".";

    void validate() const;
};

struct SweepRow {
    double gamma = 0.0;
    int redraw = 0;
    std::string method;
    int fit_dim = 0;
    double scaled_mse = std::numeric_limits<double>::quiet_NaN();
    double wall_seconds = 0.0;
    std::string status = "ok";
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string code_version;
};

// One row per (gamma, redraw, fit_dim, method) cell; failures are recorded
// in the row and the sweep keeps going. Data generation depends only on
// (seed, gamma index, redraw), so every method sees the same draw and adding
// methods or dims never perturbs existing cells.
std::vector<SweepRow> run_sweep(const ExperimentConfig &cfg);

void write_results_csv(const std::vector<SweepRow> &rows, const std::string &path);
std::vector<SweepRow> read_results_csv(const std::string &path);

// Aggregates over redraws and writes summary.json, summary.csv, and per
// (method, fit_dim) plot series under out_dir.
void emit_report(const std::vector<SweepRow> &rows, const std::string &out_dir);

json experiment_config_to_json(const ExperimentConfig &cfg);
ExperimentConfig experiment_config_from_json(const json &j);
std::string config_hash(const json &j);

json outcome_config_to_json(const OutcomeConfig &cfg);
OutcomeConfig outcome_config_from_json(const json &j);

} // namespace mcei
