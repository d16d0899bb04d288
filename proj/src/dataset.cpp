#include "mcei/dataset.hpp"

#include "mcei/errors.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace mcei {

void Dataset::default_names() {
    treatment_names.resize(treatments());
    for (int j = 0; j < treatments(); ++j)
        if (treatment_names[j].empty()) treatment_names[j] = "t_" + std::to_string(j + 1);
    if (outcome_name.empty()) outcome_name = "y";
}

void Dataset::require_complete() const {
    if (!t.allFinite())
        throw DataError("treatment matrix contains missing or non-finite values");
    if (has_outcome() && !y.allFinite())
        throw DataError("outcome contains missing or non-finite values");
}

int CsvTable::col_index(const std::string &name) const {
    for (std::size_t j = 0; j < columns.size(); ++j)
        if (columns[j] == name) return static_cast<int>(j);
    return -1;
}

namespace {

std::string trim(const std::string &s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

} // namespace

CsvTable read_csv_table(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    CsvTable table;
    table.columns = split_csv_line(line);
    if (table.columns.empty()) throw DataError(path + ": header row has no columns");

    std::vector<std::vector<double>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != table.columns.size())
            throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(table.columns.size()) + " cells, got " +
                            std::to_string(cells.size()));
        std::vector<double> row(cells.size());
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (cells[j].empty()) {
                row[j] = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            char *end = nullptr;
            row[j] = std::strtod(cells[j].c_str(), &end);
            if (end == cells[j].c_str() || *end != '\0')
                throw DataError(path + ":" + std::to_string(lineno) + ": bad numeric cell '" +
                                cells[j] + "' in column " + table.columns[j]);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError(path + ": no data rows");

    table.cells.resize(static_cast<Eigen::Index>(rows.size()),
                       static_cast<Eigen::Index>(table.columns.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            table.cells(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return table;
}

Dataset dataset_from_table(const CsvTable &table, const std::string &outcome) {
    Dataset d;
    int yc = outcome.empty() ? -1 : table.col_index(outcome);
    const int T = static_cast<int>(table.columns.size()) - (yc >= 0 ? 1 : 0);
    if (T < 1) throw DataError("table has no treatment columns");
    d.t.resize(table.cells.rows(), T);
    d.treatment_names.clear();
    int k = 0;
    for (int j = 0; j < static_cast<int>(table.columns.size()); ++j) {
        if (j == yc) continue;
        d.t.col(k) = table.cells.col(j);
        d.treatment_names.push_back(table.columns[j]);
        ++k;
    }
    if (yc >= 0) {
        d.y = table.cells.col(yc);
        d.outcome_name = table.columns[yc];
    }
    return d;
}

Dataset read_dataset_csv(const std::string &path, const std::string &outcome) {
    CsvTable table = read_csv_table(path);
    std::string y = outcome;
    if (!y.empty() && table.col_index(y) < 0) y.clear();
    return dataset_from_table(table, y);
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_dataset_csv(const Dataset &data, const std::string &path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    Dataset named = data;
    named.default_names();
    for (int j = 0; j < named.treatments(); ++j) {
        if (j) out << ',';
        out << named.treatment_names[j];
    }
    if (named.has_outcome()) out << ',' << named.outcome_name;
    out << '\n';
    for (int i = 0; i < named.n(); ++i) {
        for (int j = 0; j < named.treatments(); ++j) {
            if (j) out << ',';
            out << format_double(named.t(i, j));
        }
        if (named.has_outcome()) out << ',' << format_double(named.y(i));
        out << '\n';
    }
    if (!out) throw DataError("failed writing " + path);
}

} // namespace mcei
