#include <doctest.h>

#include <cmath>
#include <thread>

#include "oracles.hpp"
#include "robest/errors.hpp"
#include "robest/influence.hpp"
#include "robest/special_functions.hpp"

using namespace robest;

namespace {

Vector th2(double a, double b) {
    Vector t(2);
    t << a, b;
    return t;
}

Vector th1(double a) {
    Vector t(1);
    t << a;
    return t;
}

// one-dimensional normal location submodel (sigma = 1 known); test-only family
ParametricFamily make_normal_location() {
    ParametricFamily fam;
    fam.name = "normal-location";
    fam.k = 1;
    fam.param_names = {"mu"};
    fam.support = Support{Support::Kind::continuous,
                          -std::numeric_limits<double>::infinity(),
                          std::numeric_limits<double>::infinity()};
    fam.instance_id = 900001;
    fam.param_domain = [](const Vector& t) { return t.size() == 1 && std::isfinite(t[0]); };
    fam.density = [](const Vector& t, double x) { return oracle::std_normal_pdf(x - t[0]); };
    fam.log_density = [](const Vector& t, double x) {
        const double z = x - t[0];
        return -0.5 * z * z - 0.91893853320467274178;
    };
    fam.scores = [](const Vector& t, double x) { return Vector::Constant(1, x - t[0]); };
    fam.fisher = [](const Vector&) { return Matrix::Identity(1, 1); };
    fam.cdf = [](const Vector& t, double x) { return oracle::std_normal_cdf(x - t[0]); };
    fam.quantile = [](const Vector& t, double p) {
        // bisection is plenty for a test helper
        double lo = t[0] - 10.0, hi = t[0] + 10.0;
        for (int i = 0; i < 100; ++i) {
            const double m = 0.5 * (lo + hi);
            (oracle::std_normal_cdf(m - t[0]) < p ? lo : hi) = m;
        }
        return 0.5 * (lo + hi);
    };
    return fam;
}

// honest verification of the contamination system with the expectation engine
void check_contamination_invariants(const ICSolution& sol, double tol_eq = 1e-8) {
    const auto& ic = sol.ic;
    const auto& fam = ic.family;
    const int k = fam.k;
    CHECK(sol.diagnostics.clip_residual < tol_eq);
    CHECK(sol.diagnostics.centering_residual < tol_eq);
    CHECK(sol.diagnostics.fisher_residual < tol_eq);

    Vector stacked = expect(fam, ic.theta, [&](double x) {
        const Vector psi = ic.eval(x);
        const Vector L = fam.scores(ic.theta, x);
        Vector out(k + k * k);
        out.head(k) = psi;
        Eigen::Map<Matrix>(out.data() + k, k, k) = psi * L.transpose();
        return out;
    });
    CHECK(stacked.head(k).cwiseAbs().maxCoeff() < 1e-6);
    const Matrix cross = Eigen::Map<Matrix>(stacked.data() + k, k, k);
    CHECK((cross - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-6);
}

}  // namespace

TEST_CASE("classical influence curve") {
    SUBCASE("poisson") {
        auto fam = make_poisson();
        auto ic = classical_ic(fam, th1(3.9));
        CHECK(ic.eval(5.0)[0] == doctest::Approx(5.0 - 3.9).epsilon(1e-12));
        const RiskReport risk = mse_of(ic, 0.0, Neighborhood::contamination);
        CHECK(risk.variance == doctest::Approx(3.9).epsilon(1e-9));
        const double direct = oracle::poisson_expect(
            3.9, [](double x) { return (x - 3.9) * (x - 3.9); }, 400);
        CHECK(risk.variance == doctest::Approx(direct).epsilon(1e-9));
    }
    SUBCASE("normal") {
        auto fam = make_normal_loc_scale();
        auto ic = classical_ic(fam, th2(0, 1));
        CHECK(ic.eval(1.3)[0] == doctest::Approx(1.3));
        CHECK(ic.eval(1.3)[1] == doctest::Approx((1.3 * 1.3 - 1.0) / 2.0));
        const RiskReport risk = mse_of(ic, 0.0, Neighborhood::contamination);
        CHECK(risk.variance == doctest::Approx(1.5).epsilon(1e-9));
    }
    SUBCASE("fisher consistency") {
        auto fam = make_gamma();
        auto ic = classical_ic(fam, th2(5.0, 1.9));
        Vector stacked = expect(fam, ic.theta, [&](double x) {
            const Vector psi = ic.eval(x);
            const Vector L = fam.scores(ic.theta, x);
            Vector out(4);
            Eigen::Map<Matrix>(out.data(), 2, 2) = psi * L.transpose();
            return out;
        });
        CHECK((Eigen::Map<Matrix>(stacked.data(), 2, 2) - Matrix::Identity(2, 2))
                  .cwiseAbs()
                  .maxCoeff() < 1e-6);
    }
}

TEST_CASE("contamination solver matches the Huber clipping oracle (k=1 location)") {
    auto fam = make_normal_location();
    const double r = 0.5;
    auto sol = solve_contamination_ic(fam, th1(0.0), r);
    // 1-D bisection oracle on the monotone residual r^2 c = E(|Z| - c)_+
    const double c_star = oracle::huber_clip(r);
    const double A_star = 1.0 / (2.0 * oracle::std_normal_cdf(c_star) - 1.0);
    CHECK(sol.ic.b / sol.ic.A(0, 0) == doctest::Approx(c_star).epsilon(1e-7));
    CHECK(sol.ic.A(0, 0) == doctest::Approx(A_star).epsilon(1e-7));
    CHECK(sol.ic.z.cwiseAbs().maxCoeff() < 1e-8);  // symmetric model
    check_contamination_invariants(sol);
}

TEST_CASE("contamination solver residuals and tr A identity") {
    struct Item {
        ParametricFamily fam;
        Vector theta;
        double r;
    };
    std::vector<Item> items;
    items.push_back({make_normal_loc_scale(), th2(0, 1), 0.5});
    items.push_back({make_normal_loc_scale(), th2(3.2, 0.7), std::sqrt(24.0) * 0.1});
    items.push_back({make_gamma(), th2(5.0, 1.9), std::sqrt(201.0) * 0.025});
    items.push_back({make_poisson(), th1(3.9), std::sqrt(2608.0) * 0.03});
    for (auto& item : items) {
        auto sol = solve_contamination_ic(item.fam, item.theta, item.r);
        check_contamination_invariants(sol);
        CHECK(std::fabs(sol.risk.mse - sol.risk.tr_A) / sol.risk.tr_A < 1e-6);
        // honest re-evaluation of the MSE agrees too
        const RiskReport honest = mse_of(sol.ic, item.r, Neighborhood::contamination);
        CHECK(std::fabs(honest.mse - sol.risk.tr_A) / sol.risk.tr_A < 1e-6);
        // multiplier bound |a| <= r^2 b
        CHECK(sol.ic.a.norm() <= item.r * item.r * sol.ic.b + 1e-9);
        // clipping is attained
        const double sup = sup_abs(item.fam, item.theta,
                                   [&](double x) { return sol.ic.eval(x); });
        CHECK(sup == doctest::Approx(sol.ic.b).epsilon(1e-8));
    }
}

TEST_CASE("r = 0 short-circuits to the classical influence curve") {
    auto fam = make_poisson();
    auto sol = solve_contamination_ic(fam, th1(3.9), 0.0);
    CHECK(sol.ic.classical);
    CHECK(sol.risk.tr_A == doctest::Approx(3.9).epsilon(1e-12));
    CHECK_THROWS_AS(solve_contamination_ic(fam, th1(3.9), -0.5), InvalidParameter);
}

TEST_CASE("classical limit as r -> 0") {
    struct Item {
        ParametricFamily fam;
        Vector theta;
    };
    std::vector<Item> items;
    items.push_back({make_normal_loc_scale(), th2(0, 1)});
    items.push_back({make_gamma(), th2(1, 1)});
    items.push_back({make_poisson(), th1(1)});
    for (auto& item : items) {
        const Matrix I_inv = classical_ic(item.fam, item.theta).A;
        double prev = std::numeric_limits<double>::infinity();
        for (double r : {0.1, 0.01, 0.001}) {
            auto sol = solve_contamination_ic(item.fam, item.theta, r);
            const double dist = (sol.ic.A - I_inv).cwiseAbs().maxCoeff();
            CHECK(dist < prev);
            prev = dist;
        }
        CHECK(prev < 1e-3);  // at r = 1e-3
    }
}

TEST_CASE("tr A is nondecreasing in the radius") {
    auto fam = make_poisson();
    double prev = 3.9;  // tr I^-1
    for (double r : {0.1, 0.25, 0.5, 1.0, 2.0}) {
        auto sol = solve_contamination_ic(fam, th1(3.9), r);
        CHECK(sol.risk.tr_A >= prev - 1e-9);
        prev = sol.risk.tr_A;
    }
}

TEST_CASE("continuity of tr A in theta (normal, r = 0.49)") {
    auto fam = make_normal_loc_scale();
    auto a = solve_contamination_ic(fam, th2(3.2, 0.7), 0.49);
    auto b = solve_contamination_ic(fam, th2(3.2 + 5e-4, 0.7 + 5e-4), 0.49);
    CHECK(std::fabs(a.risk.tr_A - b.risk.tr_A) < 0.01);
}

TEST_CASE("total-variation solver (k = 1)") {
    SUBCASE("poisson residuals and structure") {
        auto fam = make_poisson();
        const double r = 1.532;
        auto sol = solve_totalvariation_ic(fam, th1(3.9), r);
        CHECK(sol.diagnostics.clip_residual < 1e-8);
        CHECK(sol.diagnostics.centering_residual < 1e-8);
        CHECK(sol.diagnostics.fisher_residual < 1e-8);
        CHECK(sol.ic.c < 0.0);
        CHECK(sol.ic.c + sol.ic.b > 0.0);
        // both bounds attained on the lattice
        double lo = 1e300, hi = -1e300;
        for (double x = 0.0; x <= 30.0; x += 1.0) {
            const double v = sol.ic.eval(x)[0];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            CHECK(v >= sol.ic.c - 1e-12);
            CHECK(v <= sol.ic.c + sol.ic.b + 1e-12);
        }
        CHECK(lo == doctest::Approx(sol.ic.c).epsilon(1e-8));
        CHECK(hi == doctest::Approx(sol.ic.c + sol.ic.b).epsilon(1e-8));
        // minmax identity for the tv risk
        CHECK(std::fabs(sol.risk.mse - sol.risk.tr_A) / sol.risk.tr_A < 1e-6);
    }
    SUBCASE("continuous location model") {
        auto fam = make_normal_location();
        auto sol = solve_totalvariation_ic(fam, th1(0.0), 0.5);
        CHECK(sol.diagnostics.clip_residual < 1e-8);
        CHECK(sol.diagnostics.fisher_residual < 1e-8);
        // symmetry forces c = -b/2
        CHECK(sol.ic.c == doctest::Approx(-0.5 * sol.ic.b).epsilon(1e-6));
    }
    SUBCASE("dimension guard") {
        auto fam = make_normal_loc_scale();
        CHECK_THROWS_AS(solve_totalvariation_ic(fam, th2(0, 1), 0.5),
                        UnsupportedDimension);
    }
    SUBCASE("r = 0 is classical") {
        auto fam = make_poisson();
        auto sol = solve_totalvariation_ic(fam, th1(3.9), 0.0);
        CHECK(sol.ic.classical);
    }
}

TEST_CASE("tv_by_reduction is the contamination solution at twice the radius") {
    auto nm = make_normal_loc_scale();
    auto red = tv_by_reduction(nm, th2(0, 1), 0.3);
    auto contam = solve_contamination_ic(nm, th2(0, 1), 0.6);
    CHECK(red.ic.approximate_tv);
    CHECK(red.risk.approximate);
    CHECK(red.ic.radius == doctest::Approx(0.3));
    CHECK((red.ic.A - contam.ic.A).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(red.ic.b == doctest::Approx(contam.ic.b));
    CHECK(red.risk.mse == doctest::Approx(contam.risk.mse));

    // the reduction is conservative for poisson (k = 1, exact solver available)
    auto ps = make_poisson();
    auto exact = solve_totalvariation_ic(ps, th1(3.9), 0.5);
    auto approx = tv_by_reduction(ps, th1(3.9), 0.5);
    CHECK(approx.risk.mse >= exact.risk.mse - 1e-9);
}

TEST_CASE("omega") {
    auto ps = make_poisson();
    auto sol = solve_contamination_ic(ps, th1(3.9), 1.0);
    CHECK(omega(sol.ic, Neighborhood::contamination) == doctest::Approx(sol.ic.b));
    // zero function
    CHECK(omega(ps, th1(3.9), [](double) { return Vector::Zero(1); },
                Neighborhood::contamination) == 0.0);
    // sandwich for a raw bounded k=1 function
    auto f = [](double x) { return Vector::Constant(1, std::tanh(x - 3.0)); };
    const double oc = omega(ps, th1(3.9), f, Neighborhood::contamination);
    const double ov = omega(ps, th1(3.9), f, Neighborhood::total_variation);
    CHECK(oc <= ov + 1e-12);
    CHECK(ov <= 2.0 * oc + 1e-12);
    // sandwich for solver outputs (k = 1)
    const double oc_ic = omega(sol.ic, Neighborhood::contamination);
    const double ov_ic = omega(sol.ic, Neighborhood::total_variation);
    CHECK(oc_ic <= ov_ic + 1e-9);
    CHECK(ov_ic <= 2.0 * oc_ic + 1e-9);
}

TEST_CASE("mse_of") {
    auto nm = make_normal_loc_scale();
    SUBCASE("classical curve has infinite risk for r > 0") {
        auto ic = classical_ic(nm, th2(0, 1));
        const RiskReport risk = mse_of(ic, 0.25, Neighborhood::contamination);
        CHECK(std::isinf(risk.mse));
        CHECK(risk.variance == doctest::Approx(1.5).epsilon(1e-9));
    }
    SUBCASE("optimal curve evaluated off its radius is suboptimal") {
        auto at_05 = solve_contamination_ic(nm, th2(0, 1), 0.5);
        auto at_10 = solve_contamination_ic(nm, th2(0, 1), 1.0);
        const double cross = mse_of(at_05.ic, 1.0, Neighborhood::contamination).mse;
        CHECK(cross >= at_10.risk.tr_A - 1e-9);
        const double cross2 = mse_of(at_10.ic, 0.5, Neighborhood::contamination).mse;
        CHECK(cross2 >= at_05.risk.tr_A - 1e-9);
    }
}

TEST_CASE("lattice solve at a non-unique-median parameter stays well posed") {
    // P(X <= 3) = 1/2 exactly: the median of the scores is a whole interval,
    // so the centering constant is non-unique once the curve is fully clipped;
    // the returned curve itself is still unique (the sign pattern over the
    // lattice does not depend on where z sits inside the flat interval)
    double lo = 3.0, hi = 4.5;
    for (int i = 0; i < 200; ++i) {
        const double m = 0.5 * (lo + hi);
        (gamma_q(4.0, m) > 0.5 ? lo : hi) = m;
    }
    const double theta_star = 0.5 * (lo + hi);
    auto ps = make_poisson();
    Vector th = th1(theta_star);
    REQUIRE(std::fabs(ps.cdf(th, 3.0) - 0.5) < 1e-14);

    auto sol = solve_contamination_ic(ps, th, 4.0);
    CHECK(sol.diagnostics.clip_residual < 1e-8);
    CHECK(sol.diagnostics.centering_residual < 1e-8);
    CHECK(sol.diagnostics.fisher_residual < 1e-8);
    // fully clipped: pure sign pattern with the jump between the atoms 3 and 4
    CHECK(sol.ic.eval(3.0)[0] == -sol.ic.b);
    CHECK(sol.ic.eval(4.0)[0] == sol.ic.b);
    CHECK(sol.ic.a.norm() <= 16.0 * sol.ic.b + 1e-9);
}

TEST_CASE("solvers are safe to run concurrently") {
    auto fam = make_gamma();
    const Vector theta = th2(5.0, 1.9);
    const double radii[4] = {0.2, 0.4, 0.8, 1.6};
    double traces[4] = {0, 0, 0, 0};
    {
        std::vector<std::thread> workers;
        for (int t = 0; t < 4; ++t)
            workers.emplace_back([&, t] {
                traces[t] = solve_contamination_ic(fam, theta, radii[t]).risk.tr_A;
            });
        for (auto& w : workers) w.join();
    }
    for (int t = 0; t < 4; ++t) {
        auto direct = solve_contamination_ic(fam, theta, radii[t]);
        CHECK(traces[t] == direct.risk.tr_A);
    }
}

TEST_CASE("weights stay in [0, 1] and the curve stays inside the clipping ball") {
    auto gm = make_gamma();
    auto sol = solve_contamination_ic(gm, th2(5.0, 1.9), 0.5);
    for (double p = 0.001; p < 0.9995; p += 0.013) {
        const double x = gm.quantile(th2(5.0, 1.9), p);
        const double w = sol.ic.weight(x);
        CHECK(w >= 0.0);
        CHECK(w <= 1.0);
        CHECK(sol.ic.eval(x).norm() <= sol.ic.b * (1.0 + 1e-12));
    }
}
