#include "robest/cli_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "robest/datasets.hpp"
#include "robest/errors.hpp"

namespace robest {

namespace {

bool parse_double(const std::string& token, double& out) {
    const char* begin = token.data();
    const char* end = begin + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',' || ch == ';' || ch == '\t' || ch == ' ') {
            if (!cur.empty()) fields.push_back(std::move(cur)), cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    if (!cur.empty()) fields.push_back(std::move(cur));
    return fields;
}

}  // namespace

Dataset ingest(const std::string& source) {
    if (source.rfind("embedded:", 0) == 0) {
        const std::string name = source.substr(9);
        if (name == "copper") return copper_dataset();
        if (name == "polonium") return polonium_dataset();
        throw InvalidData("unknown embedded dataset: " + name);
    }

    std::ifstream in(source);
    if (!in) throw InvalidData("cannot open data file: " + source);

    std::vector<double> observations;
    std::vector<std::pair<double, double>> table;
    int columns = 0;  // decided by the first data line
    std::string line;
    long line_no = 0;
    bool header_allowed = true;
    while (std::getline(in, line)) {
        ++line_no;
        const auto fields = split_fields(line);
        if (fields.empty()) continue;
        double v = 0.0, c = 0.0;
        const bool first_ok = parse_double(fields[0], v);
        if (!first_ok && header_allowed) {
            header_allowed = false;  // a single header line is tolerated
            continue;
        }
        header_allowed = false;
        if (!first_ok)
            throw InvalidData(source + ":" + std::to_string(line_no) + ": cannot parse value");
        if (columns == 0) columns = static_cast<int>(fields.size()) >= 2 ? 2 : 1;
        if (columns == 1) {
            if (fields.size() != 1)
                throw InvalidData(source + ":" + std::to_string(line_no) +
                                  ": expected a single column");
            observations.push_back(v);
        } else {
            if (fields.size() != 2 || !parse_double(fields[1], c))
                throw InvalidData(source + ":" + std::to_string(line_no) +
                                  ": expected value,count");
            if (c < 0.0)
                throw InvalidData(source + ":" + std::to_string(line_no) + ": negative count");
            table.emplace_back(v, c);
        }
    }
    if (columns == 1 && !observations.empty())
        return Dataset::from_observations(std::move(observations), source);
    if (columns == 2 && !table.empty()) return Dataset::from_frequency_table(std::move(table), source);
    throw InvalidData(source + ": no observations found");
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

nlohmann::json vector_to_json(const Vector& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

}  // namespace

nlohmann::json report_to_json(const EstimationReport& report, const std::string& model,
                              double eps_lower, double eps_upper) {
    nlohmann::json j;
    j["model"] = model;
    j["neighbor"] = to_string(report.neighborhood);
    j["eps"] = {{"lower", eps_lower}, {"upper", eps_upper}};
    j["radii"] = {{"lo", report.r_lo}, {"up", report.r_up}, {"rmx", report.r0}};
    j["start"] = {{"method", report.start_method}, {"estimate", vector_to_json(report.start)}};
    j["estimate"] = vector_to_json(report.estimate);
    nlohmann::json mult;
    mult["A"] = matrix_to_json(report.A);
    mult["a"] = vector_to_json(report.a);
    mult["b"] = report.b;
    if (std::isfinite(report.c)) mult["c"] = report.c;
    j["multipliers"] = mult;
    nlohmann::json diag;
    diag["clip_residual"] = report.diagnostics.clip_residual;
    diag["centering_residual"] = report.diagnostics.centering_residual;
    diag["fisher_residual"] = report.diagnostics.fisher_residual;
    diag["sweeps"] = report.diagnostics.sweeps;
    diag["shift_norm"] = report.shift.norm();
    diag["mse"] = report.risk.mse;
    diag["tr_A"] = report.risk.tr_A;
    if (report.diagnostics.theta_perturbation != 0.0)
        diag["theta_perturbation"] = report.diagnostics.theta_perturbation;
    if (report.approximate_tv) diag["approximate_tv"] = true;
    j["diagnostics"] = diag;
    return j;
}

std::string format_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace robest
