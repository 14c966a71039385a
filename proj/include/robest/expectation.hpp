#pragma once

#include <functional>
#include <vector>

#include "robest/family.hpp"
#include "robest/types.hpp"

namespace robest {

struct ExpectationConfig {
    double abs_tol = 1e-10;
    double rel_tol = 1e-9;
    double continuous_range = 1e-12;  // quantile truncation mass per tail
    double lattice_tail = 1e-14;      // omitted-mass bound for summation
    int max_nodes = 4'000'000;

    void validate() const;
};

// E_theta[f(X)] for a vector-valued integrand. Continuous families use
// adaptive composite Gauss-Legendre on the quantile-truncated range; lattice
// families sum from the lower support end until the omitted mass is below
// lattice_tail. Deterministic for fixed inputs.
Vector expect(const ParametricFamily& family, const Vector& theta,
              const std::function<Vector(double)>& f,
              const ExpectationConfig& config = {});

double expect_scalar(const ParametricFamily& family, const Vector& theta,
                     const std::function<double(double)>& f,
                     const ExpectationConfig& config = {});

// E_theta (g)_+ with subintervals split at the sign changes of g
double expect_pos_part(const ParametricFamily& family, const Vector& theta,
                       const std::function<double(double)>& g,
                       const ExpectationConfig& config = {});

// sup over the support of |f| (Euclidean norm); grid scan plus local
// golden-section refinement for continuous families
double sup_abs(const ParametricFamily& family, const Vector& theta,
               const std::function<Vector(double)>& f,
               const ExpectationConfig& config = {});

// signed extrema of a scalar function over the support
double sup_value(const ParametricFamily& family, const Vector& theta,
                 const std::function<double(double)>& f,
                 const ExpectationConfig& config = {});
double inf_value(const ParametricFamily& family, const Vector& theta,
                 const std::function<double(double)>& f,
                 const ExpectationConfig& config = {});

// locations where g changes sign (continuous families; empty for lattice)
std::vector<double> sign_changes(const ParametricFamily& family, const Vector& theta,
                                 const std::function<double(double)>& g,
                                 const ExpectationConfig& config = {});

// expectation with the integration range additionally split at given points
Vector expect_with_breaks(const ParametricFamily& family, const Vector& theta,
                          const std::function<Vector(double)>& f,
                          const std::vector<double>& breaks,
                          const ExpectationConfig& config = {});

// Deterministic probability-weighted node set for solver inner loops:
// Gauss-Legendre panels (weights include the density) or lattice points with
// their masses.
struct QuadratureRule {
    Eigen::ArrayXd x;
    Eigen::ArrayXd w;
    bool lattice = false;
};

QuadratureRule probability_rule(const ParametricFamily& family, const Vector& theta,
                                const ExpectationConfig& config = {});

// integration range actually used for the family at theta
std::pair<double, double> truncated_range(const ParametricFamily& family,
                                          const Vector& theta,
                                          const ExpectationConfig& config = {});

}  // namespace robest
