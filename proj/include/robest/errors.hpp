#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "robest/types.hpp"

namespace robest {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// evaluation at a parameter outside the family's domain (e.g. sigma <= 0)
struct InvalidParameter : Error {
    using Error::Error;
};

// observation outside the support (or its continuous extension)
struct OutOfSupport : Error {
    using Error::Error;
};

// data ingestion / shape problems
struct InvalidData : Error {
    using Error::Error;
};

struct DegenerateScale : Error {
    using Error::Error;
};

struct RankDeficiency : Error {
    using Error::Error;
};

struct DegenerateParametrization : Error {
    using Error::Error;
};

struct UnsupportedDimension : Error {
    using Error::Error;
};

struct InvalidTangent : Error {
    using Error::Error;
};

struct InvalidStart : Error {
    using Error::Error;
};

// adaptive quadrature did not converge; carries the last two refinements
struct QuadratureFailure : Error {
    QuadratureFailure(const std::string& msg, double prev, double last)
        : Error(msg), previous_estimate(prev), last_estimate(last) {}
    double previous_estimate;
    double last_estimate;
};

// fixed-point / root-find non-convergence; carries the sweep residual history
struct SolverFailure : Error {
    SolverFailure(const std::string& msg, std::vector<double> history)
        : Error(msg), residual_history(std::move(history)) {}
    std::vector<double> residual_history;
};

// non-unique centering (lattice families); carries a suggested parameter
struct DegenerateCentering : Error {
    DegenerateCentering(const std::string& msg, Vector suggestion)
        : Error(msg), suggested_theta(std::move(suggestion)) {}
    Vector suggested_theta;
};

// simplex search non-convergence; carries the best point found
struct OptimizerFailure : Error {
    OptimizerFailure(const std::string& msg, Vector best_point)
        : Error(msg), best(std::move(best_point)) {}
    Vector best;
};

// the relMSE difference does not change sign on the radius interval
struct NoCrossing : Error {
    NoCrossing(const std::string& msg, double lo, double up)
        : Error(msg), g_lo(lo), g_up(up) {}
    double g_lo;
    double g_up;
};

}  // namespace robest
