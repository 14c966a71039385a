#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "robest/errors.hpp"
#include "robest/expectation.hpp"
#include "robest/family.hpp"
#include "robest/special_functions.hpp"

using namespace robest;

namespace {

Vector theta2(double a, double b) {
    Vector t(2);
    t << a, b;
    return t;
}

Vector theta1(double a) {
    Vector t(1);
    t << a;
    return t;
}

}  // namespace

TEST_CASE("normal location-scale scores and fisher") {
    auto fam = make_normal_loc_scale();
    CHECK(fam.scores(theta2(0, 1), 0.0)[0] == doctest::Approx(0.0));
    CHECK(fam.scores(theta2(0, 1), 0.0)[1] == doctest::Approx(-1.0));
    CHECK(fam.scores(theta2(0, 1), 1.0)[0] == doctest::Approx(1.0));
    CHECK(fam.scores(theta2(0, 1), 1.0)[1] == doctest::Approx(0.0));

    // fisher against the expectation oracle E Lambda Lambda' (Simpson)
    auto entry = [&](int i, int j) {
        return oracle::simpson(
            [&](double x) {
                Vector L = fam.scores(theta2(0, 1), x);
                return L[i] * L[j] * oracle::std_normal_pdf(x);
            },
            -10.0, 10.0);
    };
    CHECK(fam.fisher(theta2(0, 1))(0, 0) == doctest::Approx(entry(0, 0)).epsilon(1e-8));
    CHECK(fam.fisher(theta2(0, 1))(1, 1) == doctest::Approx(entry(1, 1)).epsilon(1e-8));
    CHECK(fam.fisher(theta2(0, 1))(0, 0) == doctest::Approx(1.0));
    CHECK(fam.fisher(theta2(0, 1))(1, 1) == doctest::Approx(2.0));

    CHECK_THROWS_AS(fam.scores(theta2(0, -1), 0.0), InvalidParameter);
    CHECK_THROWS_AS(fam.fisher(theta2(0, 0)), InvalidParameter);
}

TEST_CASE("normal location-scale standardization identities") {
    auto fam = make_normal_loc_scale();
    const Vector th = theta2(3.2, 0.7);
    const Vector t0 = theta2(0, 1);
    for (double x : {-1.0, 0.3, 2.9, 3.2, 4.8, 30.0}) {
        const Vector lhs = fam.scores(th, x);
        const Vector rhs = fam.scores(t0, (x - 3.2) / 0.7) / 0.7;
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
    }
    const Matrix scale_law = fam.fisher(t0) / (0.7 * 0.7);
    CHECK((fam.fisher(th) - scale_law).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("gamma scores and fisher") {
    auto fam = make_gamma();
    const double gamma_const = oracle::euler_gamma();

    // digamma(1) = -gamma via the series oracle
    Vector s = fam.scores(theta2(1, 1), 1.0);
    CHECK(s[0] == doctest::Approx(0.0));
    CHECK(s[1] == doctest::Approx(gamma_const).epsilon(1e-10));
    CHECK(s[1] == doctest::Approx(0.57722).epsilon(1e-4));

    // digamma(3) via the recurrence oracle
    s = fam.scores(theta2(2, 3), 6.0);
    CHECK(s[0] == doctest::Approx(0.0));
    CHECK(s[1] == doctest::Approx(std::log(3.0) - oracle::digamma_int(3)).epsilon(1e-10));
    CHECK(s[1] == doctest::Approx(0.17583).epsilon(1e-4));

    // fisher((1,1)) = [[1,1],[1,zeta(2)]] against the numeric expectation
    // oracle; substitute x = e^v so the log singularity at the origin vanishes
    auto entry = [&](int i, int j) {
        return oracle::simpson(
            [&](double v) {
                const double x = std::exp(v);
                Vector L = fam.scores(theta2(1, 1), x);
                return L[i] * L[j] * std::exp(-x) * x;
            },
            -40.0, 8.0, 200000);
    };
    const Matrix I = fam.fisher(theta2(1, 1));
    CHECK(I(0, 0) == doctest::Approx(entry(0, 0)).epsilon(1e-6));
    CHECK(I(0, 1) == doctest::Approx(entry(0, 1)).epsilon(1e-6));
    CHECK(I(1, 1) == doctest::Approx(entry(1, 1)).epsilon(1e-6));
    CHECK(I(1, 1) == doctest::Approx(oracle::zeta2()).epsilon(1e-9));
    CHECK(I(1, 1) == doctest::Approx(1.64493).epsilon(1e-5));

    CHECK_THROWS_AS(fam.scores(theta2(-1, 1), 1.0), InvalidParameter);
    CHECK_THROWS_AS(fam.scores(theta2(1, 1), -2.0), OutOfSupport);
    CHECK(fam.density(theta2(1, 1), -2.0) == 0.0);
}

TEST_CASE("poisson scores, fisher, cdf") {
    auto fam = make_poisson();
    CHECK(fam.scores(theta1(1.0), 1.0)[0] == doctest::Approx(0.0));
    CHECK(fam.scores(theta1(3.9), 0.0)[0] == doctest::Approx(-1.0));
    // fisher(4) = 1/4 by tail-bounded summation
    const double direct = oracle::poisson_expect(
        4.0, [](double x) { return (x / 4.0 - 1.0) * (x / 4.0 - 1.0); });
    CHECK(fam.fisher(theta1(4.0))(0, 0) == doctest::Approx(direct).epsilon(1e-10));
    CHECK(fam.fisher(theta1(4.0))(0, 0) == doctest::Approx(0.25));

    CHECK_THROWS_AS(fam.scores(theta1(0.0), 1.0), InvalidParameter);
    // cdf agrees with direct pmf summation
    double cum = 0.0;
    for (long x = 0; x <= 6; ++x) cum += oracle::poisson_pmf(3.9, x);
    CHECK(fam.cdf(theta1(3.9), 6.0) == doctest::Approx(cum).epsilon(1e-12));
    CHECK(fam.quantile(theta1(3.9), fam.cdf(theta1(3.9), 6.0) - 1e-12) == 6.0);
}

TEST_CASE("self_check residuals for all shipped families") {
    SUBCASE("normal") {
        auto r = self_check(make_normal_loc_scale(), theta2(0, 1));
        CHECK(r.score_mean_norm < 1e-7);
        CHECK(r.score_cov_residual < 1e-7);
        CHECK(r.mass_residual < 1e-9);
    }
    SUBCASE("poisson") {
        auto r = self_check(make_poisson(), theta1(3.9));
        CHECK(r.score_mean_norm < 1e-9);
        CHECK(r.score_cov_residual < 1e-9);
        CHECK(r.mass_residual < 1e-9);
    }
    SUBCASE("gamma") {
        auto r = self_check(make_gamma(), theta2(5.0, 1.9));
        CHECK(r.score_mean_norm < 1e-6);
        CHECK(r.score_cov_residual < 1e-6);
        CHECK(r.mass_residual < 1e-9);
    }
}

TEST_CASE("score centering and covariance over a parameter grid") {
    struct Case {
        ParametricFamily fam;
        std::vector<Vector> thetas;
    };
    std::vector<Case> cases;
    cases.push_back({make_normal_loc_scale(),
                     {theta2(0, 1), theta2(3.2, 0.7), theta2(-2, 4), theta2(0.5, 0.1),
                      theta2(10, 2.5)}});
    cases.push_back({make_gamma(),
                     {theta2(1, 1), theta2(5, 1.9), theta2(0.5, 3), theta2(2, 0.8),
                      theta2(10, 5)}});
    cases.push_back({make_poisson(),
                     {theta1(0.5), theta1(1), theta1(3.9), theta1(10), theta1(25)}});
    for (const auto& c : cases) {
        for (const auto& th : c.thetas) {
            const int k = c.fam.k;
            Vector stacked = expect(c.fam, th, [&](double x) {
                Vector L = c.fam.scores(th, x);
                Vector out(k + k * k);
                out.head(k) = L;
                Eigen::Map<Matrix>(out.data() + k, k, k) = L * L.transpose();
                return out;
            });
            const Vector mean = stacked.head(k);
            const Matrix second = Eigen::Map<Matrix>(stacked.data() + k, k, k);
            const Matrix cov = second - mean * mean.transpose();
            const Matrix I = c.fam.fisher(th);
            CHECK(mean.cwiseAbs().maxCoeff() < 1e-7);
            CHECK((cov - I).cwiseAbs().maxCoeff() / I.cwiseAbs().maxCoeff() < 1e-5);
        }
    }
}

TEST_CASE("exponential-family construction agrees with the direct factories") {
    SUBCASE("poisson") {
        ExponentialFamilySpec spec;
        spec.name = "poisson-expfam";
        spec.k = 1;
        spec.support = Support{Support::Kind::lattice, 0.0,
                               std::numeric_limits<double>::infinity()};
        spec.param_domain = [](const Vector& t) { return t.size() == 1 && t[0] > 0.0; };
        spec.zeta = [](const Vector& t) { return Vector::Constant(1, std::log(t[0])); };
        spec.jacobian_zeta = [](const Vector& t) {
            return Matrix::Constant(1, 1, 1.0 / t[0]);
        };
        spec.statistic = [](double x) { return Vector::Constant(1, x); };
        spec.carrier = [](double x) { return 1.0 / std::tgamma(x + 1.0); };
        spec.log_normalizer = [](const Vector& t) { return t[0]; };
        auto base = make_poisson();
        spec.cdf = base.cdf;
        spec.quantile = base.quantile;

        auto fam = family_from_exponential(spec);
        const Vector th = theta1(3.9);
        for (double x = 0.0; x <= 50.0; x += 1.0) {
            CHECK(std::fabs(fam.scores(th, x)[0] - base.scores(th, x)[0]) < 1e-9);
        }
        CHECK(fam.fisher(th)(0, 0) == doctest::Approx(base.fisher(th)(0, 0)).epsilon(1e-9));
    }
    SUBCASE("normal location-scale") {
        ExponentialFamilySpec spec;
        spec.name = "normal-expfam";
        spec.k = 2;
        spec.support = Support{Support::Kind::continuous,
                               -std::numeric_limits<double>::infinity(),
                               std::numeric_limits<double>::infinity()};
        spec.param_domain = [](const Vector& t) { return t.size() == 2 && t[1] > 0.0; };
        spec.zeta = [](const Vector& t) {
            Vector z(2);
            z << t[0] / (t[1] * t[1]), -0.5 / (t[1] * t[1]);
            return z;
        };
        spec.jacobian_zeta = [](const Vector& t) {
            const double s = t[1];
            Matrix J(2, 2);
            J << 1.0 / (s * s), -2.0 * t[0] / (s * s * s), 0.0, 1.0 / (s * s * s);
            return J;
        };
        spec.statistic = [](double x) {
            Vector T(2);
            T << x, x * x;
            return T;
        };
        spec.carrier = [](double) { return 1.0; };
        spec.log_normalizer = [](const Vector& t) {
            return 0.5 * t[0] * t[0] / (t[1] * t[1]) + std::log(t[1]) +
                   0.91893853320467274178;
        };
        auto base = make_normal_loc_scale();
        spec.cdf = base.cdf;
        spec.quantile = base.quantile;

        auto fam = family_from_exponential(spec);
        const Vector th = theta2(3.2, 0.7);
        for (int i = 0; i <= 100; ++i) {
            const double x = 3.2 + 0.7 * (-5.0 + 0.1 * i);
            CHECK((fam.scores(th, x) - base.scores(th, x)).cwiseAbs().maxCoeff() < 1e-9);
        }
    }
    SUBCASE("gamma") {
        ExponentialFamilySpec spec;
        spec.name = "gamma-expfam";
        spec.k = 2;
        spec.support =
            Support{Support::Kind::continuous, 0.0, std::numeric_limits<double>::infinity()};
        spec.param_domain = [](const Vector& t) {
            return t.size() == 2 && t[0] > 0.0 && t[1] > 0.0;
        };
        spec.zeta = [](const Vector& t) {
            Vector z(2);
            z << -1.0 / t[0], t[1];
            return z;
        };
        spec.jacobian_zeta = [](const Vector& t) {
            Matrix J(2, 2);
            J << 1.0 / (t[0] * t[0]), 0.0, 0.0, 1.0;
            return J;
        };
        spec.statistic = [](double x) {
            Vector T(2);
            T << x, std::log(x);
            return T;
        };
        spec.carrier = [](double x) { return x > 0.0 ? 1.0 / x : 0.0; };
        spec.log_normalizer = [](const Vector& t) {
            return std::lgamma(t[1]) + t[1] * std::log(t[0]);
        };
        auto base = make_gamma();
        spec.cdf = base.cdf;
        spec.quantile = base.quantile;

        auto fam = family_from_exponential(spec);
        const Vector th = theta2(5.0, 1.9);
        CHECK((fam.fisher(th) - base.fisher(th)).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("exponential family rejects a singular Jacobian") {
    ExponentialFamilySpec spec;
    spec.name = "degenerate";
    spec.k = 1;
    spec.support = Support{Support::Kind::lattice, 0.0, 50.0};
    spec.param_domain = [](const Vector& t) { return t.size() == 1; };
    spec.zeta = [](const Vector&) { return Vector::Zero(1); };
    spec.jacobian_zeta = [](const Vector&) { return Matrix::Zero(1, 1); };
    spec.statistic = [](double x) { return Vector::Constant(1, x); };
    spec.carrier = [](double) { return 1.0; };
    spec.log_normalizer = [](const Vector&) { return 0.0; };
    auto fam = family_from_exponential(spec);
    CHECK_THROWS_AS(fam.scores(theta1(1.0), 1.0), DegenerateParametrization);
}
