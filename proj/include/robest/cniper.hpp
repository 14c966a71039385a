#pragma once

#include <vector>

#include "robest/influence.hpp"

namespace robest {

// Boundary of the region where a Dirac contamination at a makes the classical
// estimator's asymptotic MSE exceed the minmax MSE:
//   r^2 |psi_h(a)|^2 > tr A - tr I^-1
struct CniperReport {
    Vector theta;
    double radius = 0.0;
    double lower_point = std::numeric_limits<double>::quiet_NaN();
    double upper_point = std::numeric_limits<double>::quiet_NaN();
    struct Ray {
        double lo, hi;
    };
    std::vector<Ray> region;  // clipped to the support, at most two pieces
    double prob_ideal = 0.0;  // P_theta of the region
    double tr_A = 0.0;
    double tr_I_inv = 0.0;
    bool whole_support = false;  // condition holds everywhere
    bool empty_region = false;   // condition holds nowhere
};

CniperReport cniper_points(const ParametricFamily& family, const Vector& theta, double radius,
                           Neighborhood type = Neighborhood::contamination,
                           const SolverConfig& config = {});

}  // namespace robest
