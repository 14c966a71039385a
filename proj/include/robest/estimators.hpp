#pragma once

#include <string>
#include <utility>
#include <vector>

#include "robest/family.hpp"
#include "robest/types.hpp"

namespace robest {

// Observations, either raw or as a (value, count) frequency table. Frequency
// tables are never materialized; consumers take weighted sums.
struct Dataset {
    std::vector<double> values;  // raw observations, or distinct table values
    std::vector<double> counts;  // all 1 for raw data
    bool frequency = false;
    double n = 0.0;
    std::string label;

    static Dataset from_observations(std::vector<double> obs, std::string label = {});
    // values must be strictly increasing, counts >= 0, total count >= 2
    static Dataset from_frequency_table(std::vector<std::pair<double, double>> table,
                                        std::string label = {});

    template <typename F>
    void for_each(F&& f) const {
        for (std::size_t i = 0; i < values.size(); ++i) f(values[i], counts[i]);
    }
    std::vector<double> expanded() const;  // value-order-preserving
    double min_value() const;
    double max_value() const;
    // empirical CDF, right continuous: (#observations <= x) / n
    double ecdf(double x) const;
};

struct OptimizerConfig {
    int max_iter = 4000;
    double x_tol = 1e-11;
    double f_tol = 1e-15;
    double positive_lower_bound = 1e-8;  // floor for positive parameters
};

// Cramer-von Mises distance to the model, integrating measure dF_theta
double cvm_objective(const ParametricFamily& family, const Vector& theta,
                     const Dataset& data);

// restart candidates: scale-type coordinates log-spaced around the centre
// (several decades downward, since contamination inflates moment scales),
// location anchored at data quantiles; exposed so the optimality of the
// returned estimate can be checked against them
std::vector<Vector> cvm_restart_grid(const ParametricFamily& family, const Vector& center,
                                     const Dataset& data);

Vector cvm_estimate(const ParametricFamily& family, const Dataset& data,
                    const OptimizerConfig& config = {});

// sample median and MAD standardized to the normal model
std::pair<double, double> median_mad(const Dataset& data);

Vector mle(const ParametricFamily& family, const Dataset& data);

}  // namespace robest
