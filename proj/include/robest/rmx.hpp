#pragma once

#include "robest/influence.hpp"

namespace robest {

struct RadiusInterval {
    double lo = 0.0;
    double up = 0.0;
    void validate() const;  // 0 <= lo < up < inf
};

// dispatch on neighborhood type: contamination solver, the exact
// total-variation solver for k = 1, the 2r reduction otherwise
ICSolution solve_ic(const ParametricFamily& family, const Vector& theta, double radius,
                    Neighborhood type, const SolverConfig& config = {});

// relMSE(psi*_s, r) = MSE(psi*_s, r) / tr A_r  (denominator tr I^-1 at r = 0)
double rel_mse(const ParametricFamily& family, const Vector& theta, double s, double r,
               Neighborhood type, const SolverConfig& config = {});

// least favorable radius: equalizes relMSE at the interval endpoints
double least_favorable_radius(const ParametricFamily& family, const Vector& theta,
                              RadiusInterval interval, Neighborhood type, double tol = 1e-4,
                              const SolverConfig& config = {});

struct RmxResult {
    ICSolution solution;
    double r0 = 0.0;
    RadiusInterval interval;
};

RmxResult rmx_ic(const ParametricFamily& family, const Vector& theta, RadiusInterval interval,
                 Neighborhood type, const SolverConfig& config = {});

}  // namespace robest
