#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "robest/types.hpp"

namespace robest {

struct Support {
    enum class Kind { continuous, lattice };
    Kind kind = Kind::continuous;
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();

    bool is_lattice() const { return kind == Kind::lattice; }
    bool contains(double x) const {
        if (x < lower || x > upper) return false;
        return true;
    }
};

// Location-scale structure: theta maps onto a standard member via an affine
// change of the observation; lets solvers work at the standard parameter and
// transform multipliers back (exact for the normal model).
struct LocationScaleMap {
    Vector standard_theta;
    // theta -> (location, scale) of the observation transform x = mu + sigma*z
    std::function<std::pair<double, double>(const Vector&)> center_scale;
};

struct ParametricFamily {
    std::string name;
    int k = 1;  // parameter dimension
    std::vector<std::string> param_names;
    Support support;

    std::function<bool(const Vector&)> param_domain;
    std::function<double(const Vector&, double)> density;
    std::function<double(const Vector&, double)> log_density;
    std::function<Vector(const Vector&, double)> scores;
    std::function<Matrix(const Vector&)> fisher;
    std::function<double(const Vector&, double)> cdf;
    std::function<double(const Vector&, double)> quantile;  // p in (0,1)

    std::optional<LocationScaleMap> loc_scale;
    bool bounded_scores = false;
    std::uint64_t instance_id = 0;  // distinct per constructed family, kept by copies

    int dim() const { return k; }
    bool valid(const Vector& theta) const { return param_domain(theta); }
    void require_valid(const Vector& theta) const;  // throws InvalidParameter
};

ParametricFamily make_normal_loc_scale();
ParametricFamily make_gamma();
ParametricFamily make_poisson();

struct ExponentialFamilySpec {
    std::string name = "exponential-family";
    int k = 1;
    std::vector<std::string> param_names;
    Support support;
    std::function<bool(const Vector&)> param_domain;

    std::function<Vector(const Vector&)> zeta;              // natural parameter
    std::function<Matrix(const Vector&)> jacobian_zeta;     // d zeta / d theta
    std::function<Vector(double)> statistic;                // T(x)
    std::function<double(double)> carrier;                  // h(x) >= 0
    std::function<double(const Vector&)> log_normalizer;    // beta(theta)

    // optional closed forms; numeric fallbacks are used when absent
    std::function<double(const Vector&, double)> cdf;
    std::function<double(const Vector&, double)> quantile;
};

// scores(theta,x) = J'(T(x) - E T), fisher = J' Cov(T) J, with the moments of
// T computed numerically
ParametricFamily family_from_exponential(const ExponentialFamilySpec& spec);

struct SelfCheckReport {
    double score_mean_norm;     // ||E Lambda||
    double score_cov_residual;  // ||Cov Lambda - I_theta||  (max abs entry)
    double mass_residual;       // | integral of density - 1 |
};

SelfCheckReport self_check(const ParametricFamily& family, const Vector& theta);

}  // namespace robest
