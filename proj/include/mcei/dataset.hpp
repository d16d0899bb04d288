#pragma once
#include "mcei/mlp.hpp"

#include <string>
#include <vector>

namespace mcei {

// Tabular data: rows are observations, columns are treatments, plus an
// optional outcome column kept separate. Model code works column-major
// (observations in columns); t_cols() hands over that orientation.
struct Dataset {
    Mat t;
    Vec y;
    std::vector<std::string> treatment_names;
    std::string outcome_name = "y";

    int n() const { return static_cast<int>(t.rows()); }
    int treatments() const { return static_cast<int>(t.cols()); }
    bool has_outcome() const { return y.size() == t.rows() && y.size() > 0; }
    Mat t_cols() const { return t.transpose(); }

    void default_names();
    // Finite-value check; missing data must be resolved upstream.
    void require_complete() const;
};

// Raw CSV table with NaN for empty cells; header is required.
struct CsvTable {
    std::vector<std::string> columns;
    Mat cells;

    int col_index(const std::string &name) const; // -1 when absent
};

CsvTable read_csv_table(const std::string &path);

// Builds a Dataset from a table. outcome may be empty (no outcome column);
// when present it is removed from the treatment block.
Dataset dataset_from_table(const CsvTable &table, const std::string &outcome);

Dataset read_dataset_csv(const std::string &path, const std::string &outcome = "y");
void write_dataset_csv(const Dataset &data, const std::string &path);

std::string format_double(double v);

} // namespace mcei
