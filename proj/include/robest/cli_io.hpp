#pragma once

#include <string>

#include <json.hpp>

#include "robest/onestep.hpp"

namespace robest {

// reads a dataset: "embedded:copper", "embedded:polonium", or a CSV path
// (single column of reals, or value,count rows; header line optional)
Dataset ingest(const std::string& source);

// machine-readable estimation report:
// {model, neighbor, eps, radii, start, estimate, multipliers{A,a,b,c}, diagnostics}
nlohmann::json report_to_json(const EstimationReport& report, const std::string& model,
                              double eps_lower, double eps_upper);

std::string format_json(const nlohmann::json& j);

}  // namespace robest
