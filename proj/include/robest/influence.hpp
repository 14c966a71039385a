#pragma once

#include <optional>
#include <vector>

#include "robest/expectation.hpp"
#include "robest/family.hpp"
#include "robest/types.hpp"

namespace robest {

// Evaluable influence curve together with its Lagrange multipliers.
// contamination: psi(x) = A (Lambda(x) - z) w(x), w = min{1, b / |A(Lambda-z)|}
// total variation (k=1): psi(x) = c v A*Lambda(x) ^ (c+b)
struct InfluenceCurve {
    ParametricFamily family;
    Vector theta;
    Neighborhood neighborhood = Neighborhood::contamination;
    double radius = 0.0;

    Matrix A;
    Vector z;
    Vector a;  // A z
    double b = std::numeric_limits<double>::infinity();
    double c = std::numeric_limits<double>::quiet_NaN();  // total variation only

    bool classical = false;
    bool approximate_tv = false;      // produced by tv_by_reduction
    double theta_perturbation = 0.0;  // lattice degenerate-centering workaround

    int dim() const { return family.k; }
    Vector eval(double x) const;
    double weight(double x) const;  // clipping weight w(x) in [0, 1]
};

struct RiskReport {
    double variance = 0.0;    // E |psi|^2
    double bias_bound = 0.0;  // omega_* (b for contamination, sup-inf for tv)
    double radius = 0.0;
    double mse = 0.0;  // variance + radius^2 * bias_bound^2
    double tr_A = 0.0;
    bool approximate = false;
};

struct SolverDiagnostics {
    double clip_residual = 0.0;       // |r^2 b - E(.)_+| relative
    double centering_residual = 0.0;  // ||E (Lambda - z) w|| relative
    double fisher_residual = 0.0;     // ||A^-1 - E (Lambda-z)(Lambda-z)' w|| relative
    int sweeps = 0;
    bool damped = false;
    double theta_perturbation = 0.0;
    std::vector<double> residual_history;
};

struct SolverConfig {
    double tol = 1e-8;             // relative residual acceptance
    double fixed_point_tol = 1e-9;  // relative change of (A, z, b) per sweep
    int max_sweeps = 200;
    ExpectationConfig quadrature;
    bool use_cache = true;
};

struct ICSolution {
    InfluenceCurve ic;
    RiskReport risk;
    SolverDiagnostics diagnostics;
};

// classical scores psi_h = I^-1 Lambda
InfluenceCurve classical_ic(const ParametricFamily& family, const Vector& theta);

ICSolution solve_contamination_ic(const ParametricFamily& family, const Vector& theta,
                                  double radius, const SolverConfig& config = {});

// exact total-variation solution, k = 1 only
ICSolution solve_totalvariation_ic(const ParametricFamily& family, const Vector& theta,
                                   double radius, const SolverConfig& config = {});

// conservative approximation: contamination solution at radius 2r relabeled
ICSolution tv_by_reduction(const ParametricFamily& family, const Vector& theta,
                           double radius, const SolverConfig& config = {});

// standardized bias of an influence curve: sup |psi| (contamination) or
// sup psi - inf psi (total variation, k = 1); solver-built curves read their
// multipliers directly
double omega(const InfluenceCurve& ic, Neighborhood type);
double omega(const ParametricFamily& family, const Vector& theta,
             const std::function<Vector(double)>& psi, Neighborhood type,
             const ExpectationConfig& config = {});

// maximum asymptotic MSE of psi on a neighborhood of the given radius;
// the variance is integrated numerically
RiskReport mse_of(const InfluenceCurve& ic, double radius, Neighborhood type,
                  const ExpectationConfig& config = {});

}  // namespace robest
