#include "robest/rmx.hpp"

#include <cmath>

#include "robest/errors.hpp"

namespace robest {

void RadiusInterval::validate() const {
    if (!(lo >= 0.0) || !(up > lo) || !std::isfinite(up))
        throw InvalidParameter("RadiusInterval: need 0 <= r_lo < r_up < inf");
}

ICSolution solve_ic(const ParametricFamily& fam, const Vector& theta, double radius,
                    Neighborhood type, const SolverConfig& cfg) {
    if (type == Neighborhood::contamination)
        return solve_contamination_ic(fam, theta, radius, cfg);
    if (fam.k == 1) return solve_totalvariation_ic(fam, theta, radius, cfg);
    return tv_by_reduction(fam, theta, radius, cfg);
}

namespace {

double tr_a_at(const ParametricFamily& fam, const Vector& theta, double r, Neighborhood type,
               const SolverConfig& cfg) {
    if (r == 0.0) {
        Eigen::PartialPivLU<Matrix> lu(fam.fisher(theta));
        if (!(lu.rcond() > 1e-12)) throw RankDeficiency("rel_mse: singular Fisher information");
        return lu.solve(Matrix::Identity(fam.k, fam.k)).trace();
    }
    return solve_ic(fam, theta, r, type, cfg).risk.tr_A;
}

}  // namespace

double rel_mse(const ParametricFamily& fam, const Vector& theta, double s, double r,
               Neighborhood type, const SolverConfig& cfg) {
    if (s < 0.0 || r < 0.0) throw InvalidParameter("rel_mse: radii must be >= 0");
    const double denom = tr_a_at(fam, theta, r, type, cfg);
    InfluenceCurve psi = (s == 0.0) ? classical_ic(fam, theta)
                                    : solve_ic(fam, theta, s, type, cfg).ic;
    const RiskReport risk = mse_of(psi, r, type, cfg.quadrature);
    return risk.mse / denom;
}

double least_favorable_radius(const ParametricFamily& fam, const Vector& theta,
                              RadiusInterval interval, Neighborhood type, double tol,
                              const SolverConfig& cfg) {
    interval.validate();
    fam.require_valid(theta);
    if (interval.up - interval.lo <= tol) return 0.5 * (interval.lo + interval.up);

    auto g = [&](double s) {
        return rel_mse(fam, theta, s, interval.lo, type, cfg) -
               rel_mse(fam, theta, s, interval.up, type, cfg);
    };
    // endpoint signs are known in theory; allow solver-level noise before
    // declaring the interval numerically degenerate
    const double noise_floor = 1e-7;
    const double g_lo = g(interval.lo);  // 1 - relMSE(lo, up) <= 0
    const double g_up = g(interval.up);
    if (g_lo > noise_floor || g_up < -noise_floor)
        throw NoCrossing("least_favorable_radius: relMSE difference does not change sign",
                         g_lo, g_up);
    if (g_lo > 0.0 || g_up < 0.0)  // inside the noise floor: nearly flat
        return 0.5 * (interval.lo + interval.up);

    double a = interval.lo, b = interval.up;
    double mid = 0.5 * (a + b);
    for (int it = 0; it < 100; ++it) {
        mid = 0.5 * (a + b);
        const double gm = g(mid);
        if (std::fabs(gm) < tol) return mid;
        (gm < 0.0 ? a : b) = mid;
        if (b - a < 1e-4 * mid) break;
    }
    return mid;
}

RmxResult rmx_ic(const ParametricFamily& fam, const Vector& theta, RadiusInterval interval,
                 Neighborhood type, const SolverConfig& cfg) {
    const double r0 = least_favorable_radius(fam, theta, interval, type, 1e-4, cfg);
    RmxResult result;
    result.solution = solve_ic(fam, theta, r0, type, cfg);
    result.r0 = r0;
    result.interval = interval;
    return result;
}

}  // namespace robest
