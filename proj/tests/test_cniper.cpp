#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "robest/cniper.hpp"
#include "robest/errors.hpp"

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

}  // namespace

TEST_CASE("normal cniper points are symmetric about the location") {
    auto fam = make_normal_loc_scale();
    const double r = std::sqrt(24.0) * 0.10;
    auto report = cniper_points(fam, th2(3.2, 0.7), r);
    REQUIRE(report.region.size() == 2);

    // published points; the probability of the region is recomputed from the
    // closed-form normal CDF as a cross-check
    CHECK(report.lower_point == doctest::Approx(1.86).epsilon(0.01 / 1.86));
    CHECK(report.upper_point == doctest::Approx(4.54).epsilon(0.01 / 4.54));
    CHECK(report.lower_point + report.upper_point == doctest::Approx(6.4).epsilon(1e-6));

    const double direct = oracle::std_normal_cdf((report.lower_point - 3.2) / 0.7) +
                          1.0 - oracle::std_normal_cdf((report.upper_point - 3.2) / 0.7);
    CHECK(report.prob_ideal == doctest::Approx(direct).epsilon(1e-9));

    // the defining equality holds at both boundary points
    auto psi_h_sq = [&](double a) {
        const double d = a - 3.2;
        return d * d + std::pow((d * d - 0.49) / 1.4, 2);
    };
    const double gap = report.tr_A - report.tr_I_inv;
    CHECK(r * r * psi_h_sq(report.lower_point) == doctest::Approx(gap).epsilon(1e-6));
    CHECK(r * r * psi_h_sq(report.upper_point) == doctest::Approx(gap).epsilon(1e-6));
}

TEST_CASE("poisson cniper triple") {
    auto fam = make_poisson();
    const double r = std::sqrt(2608.0) * 0.03;
    auto report = cniper_points(fam, th1(3.9), r);
    CHECK(report.lower_point == doctest::Approx(1.26).epsilon(0.01 / 1.26));
    CHECK(report.upper_point == doctest::Approx(6.54).epsilon(0.01 / 6.54));
    CHECK(report.prob_ideal == doctest::Approx(0.200).epsilon(0.002 / 0.2));

    // lattice region mass: P(X <= 1) + P(X >= 7) by direct summation
    double mass = 0.0;
    for (long x = 0; x <= 1; ++x) mass += oracle::poisson_pmf(3.9, x);
    double upper = 0.0;
    for (long x = 0; x <= 6; ++x) upper += oracle::poisson_pmf(3.9, x);
    mass += 1.0 - upper;
    CHECK(report.prob_ideal == doctest::Approx(mass).epsilon(1e-9));
}

TEST_CASE("gamma cniper triple") {
    auto fam = make_gamma();
    const double r = std::sqrt(201.0) * 0.025;
    auto report = cniper_points(fam, th2(5.0, 1.9), r);
    CHECK(report.lower_point == doctest::Approx(0.62).epsilon(0.01 / 0.62));
    CHECK(report.upper_point == doctest::Approx(29.31).epsilon(0.05 / 29.31));
    CHECK(report.prob_ideal == doctest::Approx(0.0263).epsilon(0.001 / 0.0263));
    CHECK(report.region.front().lo == 0.0);  // clipped to the support
}

TEST_CASE("cniper validation and degenerate flags") {
    auto fam = make_poisson();
    CHECK_THROWS_AS(cniper_points(fam, th1(3.9), 0.0), InvalidParameter);
    CHECK_THROWS_AS(cniper_points(fam, th1(3.9), 1.0, Neighborhood::total_variation),
                    UnsupportedDimension);
    // a tiny radius leaves no cniper region inside the numeric search range:
    // tr A - tr I^-1 stays positive, so the condition holds only in the far
    // tails; the report carries points or flags, never throws
    auto report = cniper_points(fam, th1(3.9), 1e-3);
    CHECK((report.empty_region || report.region.size() >= 1));
}
