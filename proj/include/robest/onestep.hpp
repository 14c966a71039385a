#pragma once

#include <optional>
#include <string>

#include "robest/estimators.hpp"
#include "robest/rmx.hpp"

namespace robest {

// influence-curve request: a fixed radius or a radius interval (rmx)
struct IcSpec {
    Neighborhood neighborhood = Neighborhood::contamination;
    std::optional<double> radius;
    std::optional<RadiusInterval> interval;
};

struct EstimationReport {
    Vector start;
    std::string start_method;
    Neighborhood neighborhood = Neighborhood::contamination;
    double r_lo = std::numeric_limits<double>::quiet_NaN();
    double r_up = std::numeric_limits<double>::quiet_NaN();
    double r0 = std::numeric_limits<double>::quiet_NaN();
    double radius = 0.0;  // radius the influence curve was solved at

    Vector estimate;  // S_n
    Vector shift;     // S_n - start

    Matrix A;
    Vector a;
    double b = 0.0;
    double c = std::numeric_limits<double>::quiet_NaN();
    RiskReport risk;
    SolverDiagnostics diagnostics;
    bool approximate_tv = false;

    std::optional<std::vector<Vector>> ic_values;  // per observation, on request
};

// S_n = theta_hat + (1/n) sum_i psi*_{theta_hat}(x_i); the shift norm never
// exceeds the clipping bound b
EstimationReport one_step(const ParametricFamily& family, const Vector& theta_hat,
                          const Dataset& data, const IcSpec& spec,
                          const SolverConfig& config = {}, bool keep_ic_values = false,
                          int steps = 1);

// full workflow: start estimator, rmx influence curve on
// [sqrt(n) eps_lo, sqrt(n) eps_up], one-step correction
EstimationReport roptest_pipeline(const ParametricFamily& family, const Dataset& data,
                                  double eps_lo, double eps_up, Neighborhood type,
                                  const std::string& start_method = "cvm",
                                  const SolverConfig& config = {});

// evaluate the influence-curve formula on the continuous extension of the
// support (for lattice families: [lower, inf)); clipping keeps |psi| <= b
Vector ic_extension_eval(const InfluenceCurve& ic, double x);

}  // namespace robest
