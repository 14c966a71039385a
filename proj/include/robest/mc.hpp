#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>

#include "robest/estimators.hpp"
#include "robest/expectation.hpp"
#include "robest/family.hpp"

namespace robest {

// i.i.d. draws from (1-s) P_theta + s Q with Q a Dirac or a custom sampler
struct ContaminationScenario {
    ParametricFamily family;
    Vector theta;
    double fraction = 0.0;  // s in [0, 1]
    std::optional<double> dirac;
    std::function<double(std::mt19937_64&)> contaminant;  // used when dirac is absent
    int n = 0;
    std::uint64_t seed = 0;
};

Dataset sample_contaminated(const ContaminationScenario& scenario);

// draws from dQ_n = (1 + r n^{-1/2} q) dP_theta by acceptance-rejection;
// q must be bounded, centered, with inf q >= -1 and n^{1/2} >= -r inf q
Dataset sample_simple_perturbation(const ParametricFamily& family, const Vector& theta,
                                   const std::function<double(double)>& tangent, double r,
                                   int n, std::uint64_t seed,
                                   const ExpectationConfig& config = {});

struct McEstimator {
    std::string label;
    std::function<Vector(const Dataset&)> estimate;
};

struct McRow {
    std::string label;
    double n_mse = 0.0;      // mean of n |theta_hat - theta|^2 over replications
    double std_error = 0.0;  // Monte Carlo standard error of that mean
    int failures = 0;        // replications where the estimator threw
};

// deterministic given the seed: replication r uses a derived stream
// (seed, r); accumulation order is fixed
std::vector<McRow> mc_compare(const ContaminationScenario& scenario,
                              const std::vector<McEstimator>& estimators, int reps,
                              std::uint64_t seed);

}  // namespace robest
