#include "robest/onestep.hpp"

#include <algorithm>
#include <cmath>

#include "robest/errors.hpp"

namespace robest {

Vector ic_extension_eval(const InfluenceCurve& ic, double x) {
    if (x < ic.family.support.lower || x > ic.family.support.upper)
        throw OutOfSupport(ic.family.name +
                           ": point outside the continuous extension of the support");
    // the scores of the shipped lattice family evaluate at any real x >= 0,
    // and the clipping construction bounds the result by b
    return ic.eval(x);
}

namespace {

EstimationReport one_step_once(const ParametricFamily& fam, const Vector& theta_hat,
                               const Dataset& data, const IcSpec& spec,
                               const SolverConfig& cfg, bool keep_ic_values) {
    if (!fam.valid(theta_hat))
        throw InvalidStart(fam.name + ": starting estimate outside the parameter domain");
    if (!spec.radius && !spec.interval)
        throw InvalidParameter("one_step: ic_spec needs a radius or an interval");

    EstimationReport report;
    report.start = theta_hat;
    report.neighborhood = spec.neighborhood;

    ICSolution sol;
    if (spec.interval) {
        RmxResult rmx = rmx_ic(fam, theta_hat, *spec.interval, spec.neighborhood, cfg);
        sol = std::move(rmx.solution);
        report.r_lo = spec.interval->lo;
        report.r_up = spec.interval->up;
        report.r0 = rmx.r0;
        report.radius = rmx.r0;
    } else {
        sol = solve_ic(fam, theta_hat, *spec.radius, spec.neighborhood, cfg);
        report.radius = *spec.radius;
    }

    // accumulate in value order so the estimate is independent of the
    // observation order exactly, not just up to rounding
    std::vector<std::pair<double, double>> terms;
    terms.reserve(data.values.size());
    data.for_each([&](double x, double count) {
        if (count > 0.0) terms.emplace_back(x, count);
    });
    std::stable_sort(terms.begin(), terms.end());
    Vector correction = Vector::Zero(fam.k);
    for (const auto& [x, count] : terms) correction += count * ic_extension_eval(sol.ic, x);
    correction /= data.n;

    std::vector<Vector> values;
    if (keep_ic_values) {
        values.reserve(data.values.size());
        data.for_each([&](double x, double count) {
            if (count > 0.0) values.push_back(ic_extension_eval(sol.ic, x));
        });
    }

    report.estimate = theta_hat + correction;
    report.shift = correction;
    report.A = sol.ic.A;
    report.a = sol.ic.a;
    report.b = sol.ic.b;
    report.c = sol.ic.c;
    report.risk = sol.risk;
    report.diagnostics = sol.diagnostics;
    report.approximate_tv = sol.ic.approximate_tv;
    if (keep_ic_values) report.ic_values = std::move(values);

    // averaging clipped terms keeps the correction inside the clipping ball
    if (std::isfinite(report.b) && report.shift.norm() > report.b + 1e-9)
        throw Error("one_step: shift bound violated (numerical inconsistency)");
    return report;
}

}  // namespace

EstimationReport one_step(const ParametricFamily& fam, const Vector& theta_hat,
                          const Dataset& data, const IcSpec& spec, const SolverConfig& cfg,
                          bool keep_ic_values, int steps) {
    if (steps < 1) throw InvalidParameter("one_step: steps must be >= 1");
    EstimationReport report = one_step_once(fam, theta_hat, data, spec, cfg, keep_ic_values);
    for (int s = 1; s < steps; ++s) {
        const Vector start = report.start;
        report = one_step_once(fam, report.estimate, data, spec, cfg, keep_ic_values);
        report.start = start;
        report.shift = report.estimate - start;
    }
    return report;
}

EstimationReport roptest_pipeline(const ParametricFamily& fam, const Dataset& data,
                                  double eps_lo, double eps_up, Neighborhood type,
                                  const std::string& start_method, const SolverConfig& cfg) {
    if (!(eps_lo >= 0.0) || !(eps_lo < eps_up) || !(eps_up <= 0.5))
        throw InvalidParameter("roptest_pipeline: need 0 <= eps_lo < eps_up <= 0.5");

    Vector start;
    if (start_method == "cvm") {
        start = cvm_estimate(fam, data);
    } else if (start_method == "median-mad") {
        if (fam.name != "normal-loc-scale")
            throw InvalidParameter("median-mad start is only meaningful for normal-loc-scale");
        auto [mu, sigma] = median_mad(data);
        start = Vector(2);
        start << mu, sigma;
    } else if (start_method == "mle") {
        start = mle(fam, data);
    } else {
        throw InvalidParameter("unknown start method: " + start_method);
    }

    const double root_n = std::sqrt(data.n);
    IcSpec spec;
    spec.neighborhood = type;
    spec.interval = RadiusInterval{root_n * eps_lo, root_n * eps_up};
    EstimationReport report = one_step(fam, start, data, spec, cfg);
    report.start_method = start_method;
    return report;
}

}  // namespace robest
