#include "robest/cniper.hpp"

#include <algorithm>
#include <cmath>

#include "robest/errors.hpp"

namespace robest {

namespace {

double bisect_root(const std::function<double(double)>& g, double a, double b, double ga) {
    for (int it = 0; it < 200 && b - a > 1e-8 * (1.0 + std::fabs(a) + std::fabs(b)) / 1e4;
         ++it) {
        const double m = 0.5 * (a + b);
        const double gm = g(m);
        if ((ga < 0.0) == (gm < 0.0)) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
        if (b - a < 1e-12 * (1.0 + std::fabs(m))) break;
    }
    return 0.5 * (a + b);
}

double golden_min(const std::function<double(double)>& h, double a, double b) {
    const double invphi = 0.6180339887498949;
    double x1 = b - invphi * (b - a), x2 = a + invphi * (b - a);
    double f1 = h(x1), f2 = h(x2);
    for (int it = 0; it < 90; ++it) {
        if (f1 > f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = h(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = h(x1);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace

CniperReport cniper_points(const ParametricFamily& fam, const Vector& theta, double radius,
                           Neighborhood type, const SolverConfig& cfg) {
    if (type != Neighborhood::contamination)
        throw UnsupportedDimension("cniper_points: only the contamination case is computed");
    if (!(radius > 0.0)) throw InvalidParameter("cniper_points: radius must be positive");
    fam.require_valid(theta);

    ICSolution sol = solve_contamination_ic(fam, theta, radius, cfg);
    const Matrix I_inv = classical_ic(fam, theta).A;

    CniperReport report;
    report.theta = theta;
    report.radius = radius;
    report.tr_A = sol.risk.tr_A;
    report.tr_I_inv = I_inv.trace();
    const double gap = report.tr_A - report.tr_I_inv;

    auto psi_h_sq = [&](double a) {
        const Vector v = I_inv * fam.scores(theta, a);
        return v.squaredNorm();
    };
    auto g = [&](double a) { return radius * radius * psi_h_sq(a) - gap; };

    // search grid over the support (continuous extension for lattice models)
    double lo, hi;
    const bool lattice = fam.support.is_lattice();
    if (lattice) {
        lo = fam.support.lower;
        hi = fam.quantile(theta, 1.0 - 1e-13) + 10.0;
    } else {
        lo = fam.quantile(theta, 1e-12);
        hi = fam.quantile(theta, 1.0 - 1e-12);
    }
    const int n = 4096;
    double a_best = lo;
    double m_best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        const double a = lo + (hi - lo) * i / (n - 1.0);
        const double m = psi_h_sq(a);
        if (m < m_best) {
            m_best = m;
            a_best = a;
        }
    }
    const double step = (hi - lo) / (n - 1.0);
    const double a_min = golden_min(psi_h_sq, std::max(lo, a_best - step),
                                    std::min(hi, a_best + step));

    if (g(a_min) > 0.0) {
        report.whole_support = true;
        report.region.push_back({fam.support.lower, fam.support.upper});
        report.prob_ideal = 1.0;
        return report;
    }

    const double g_lo = g(lo), g_hi = g(hi);
    if (g_lo <= 0.0 && g_hi <= 0.0) {
        report.empty_region = true;
        report.prob_ideal = 0.0;
        return report;
    }

    double prob = 0.0;
    if (g_lo > 0.0) {
        report.lower_point = bisect_root(g, lo, a_min, g_lo);
        report.region.push_back({fam.support.lower, report.lower_point});
        prob += fam.cdf(theta, report.lower_point);
    }
    if (g_hi > 0.0) {
        report.upper_point = bisect_root(g, a_min, hi, g(a_min));
        report.region.push_back({report.upper_point, fam.support.upper});
        if (lattice)
            prob += 1.0 - fam.cdf(theta, std::ceil(report.upper_point) - 1.0);
        else
            prob += 1.0 - fam.cdf(theta, report.upper_point);
    }
    report.prob_ideal = prob;
    return report;
}

}  // namespace robest
