#pragma once

#include <Eigen/Dense>
#include <string>

namespace robest {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Neighborhood { contamination, total_variation };

inline const char* to_string(Neighborhood nb) {
    return nb == Neighborhood::contamination ? "c" : "v";
}

inline Neighborhood neighborhood_from_string(const std::string& s) {
    if (s == "c" || s == "contamination") return Neighborhood::contamination;
    if (s == "v" || s == "total-variation") return Neighborhood::total_variation;
    throw std::invalid_argument("unknown neighborhood type: " + s);
}

}  // namespace robest
