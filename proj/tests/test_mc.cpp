#include <doctest.h>

#include <cmath>

#include "robest/errors.hpp"
#include "robest/mc.hpp"
#include "robest/onestep.hpp"

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

TEST_CASE("sample_contaminated") {
    ContaminationScenario sc;
    sc.family = make_normal_loc_scale();
    sc.theta = th2(3.2, 0.7);
    sc.n = 10000;
    sc.seed = 42;

    SUBCASE("s = 0 draws from the ideal model") {
        sc.fraction = 0.0;
        auto data = sample_contaminated(sc);
        double mean = 0.0;
        data.for_each([&](double v, double c) { mean += v * c; });
        mean /= data.n;
        CHECK(mean == doctest::Approx(3.2).epsilon(0.03 / 3.2));
    }
    SUBCASE("s = 1 gives the Dirac point everywhere") {
        sc.fraction = 1.0;
        sc.dirac = 28.95;
        auto data = sample_contaminated(sc);
        CHECK(data.min_value() == 28.95);
        CHECK(data.max_value() == 28.95);
    }
    SUBCASE("contaminated fraction matches the binomial oracle") {
        sc.fraction = 0.1;
        sc.dirac = 28.95;
        auto data = sample_contaminated(sc);
        double hits = 0.0;
        data.for_each([&](double v, double c) {
            if (v == 28.95) hits += c;
        });
        // 3 binomial standard deviations = 0.009 at n = 1e4
        CHECK(std::fabs(hits / data.n - 0.1) < 0.01);
    }
    SUBCASE("identical seeds give identical samples") {
        sc.fraction = 0.3;
        sc.dirac = 9.0;
        auto a = sample_contaminated(sc);
        auto b = sample_contaminated(sc);
        REQUIRE(a.values.size() == b.values.size());
        for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == b.values[i]);
    }
}

TEST_CASE("sample_simple_perturbation") {
    auto nm = make_normal_loc_scale();
    SUBCASE("q = 0 and r = 0 reduce to the ideal model") {
        auto q0 = [](double) { return 0.0; };
        auto a = sample_simple_perturbation(nm, th2(0, 1), q0, 1.0, 4000, 5);
        double mean = 0.0;
        a.for_each([&](double v, double c) { mean += v * c; });
        CHECK(std::fabs(mean / a.n) < 0.06);
        auto b = sample_simple_perturbation(nm, th2(0, 1), [](double x) { return std::tanh(x); },
                                            0.0, 4000, 5);
        CHECK(b.n == 4000.0);
    }
    SUBCASE("sign tangent shifts the q-mean by r n^{-1/2} E q^2") {
        // q = sign(x): E q = 0, E q^2 = 1, bounded, inf q = -1; draw many
        // datasets of size n = 100 from the same tilted law Q_100
        auto q = [](double x) { return x >= 0.0 ? 1.0 : -1.0; };
        const double r = 1.0;
        const int n = 100;
        double mean_q = 0.0;
        const int chunks = 1000;
        for (int chunk = 0; chunk < chunks; ++chunk) {
            auto d = sample_simple_perturbation(nm, th2(0, 1), q, r, n, 1000 + chunk);
            d.for_each([&](double v, double c) { mean_q += q(v) * c; });
        }
        const double draws = double(chunks) * n;
        mean_q /= draws;
        const double predicted = r / std::sqrt(static_cast<double>(n));  // E q^2 = 1
        CHECK(std::fabs(mean_q - predicted) < 3.0 / std::sqrt(draws));
    }
    SUBCASE("tangent preconditions") {
        CHECK_THROWS_AS(sample_simple_perturbation(nm, th2(0, 1),
                                                   [](double x) { return x; }, 1.0, 100, 1),
                        InvalidTangent);  // essential infimum far below -1
        CHECK_THROWS_AS(sample_simple_perturbation(
                            nm, th2(0, 1), [](double x) { return std::tanh(x) + 0.5; }, 1.0,
                            100, 1),
                        InvalidTangent);  // not centered
        CHECK_THROWS_AS(sample_simple_perturbation(
                            nm, th2(0, 1), [](double x) { return -2.0 * (x > 0) + 0.9; },
                            1.0, 100, 1),
                        InvalidTangent);  // inf q < -1
    }
}

TEST_CASE("mc_compare determinism and failure accounting") {
    ContaminationScenario sc;
    sc.family = make_poisson();
    sc.theta = th1(3.0);
    sc.fraction = 0.0;
    sc.n = 50;

    std::vector<McEstimator> est;
    est.push_back({"mle", [fam = sc.family](const Dataset& d) { return mle(fam, d); }});
    int fail_count = 0;
    est.push_back({"flaky", [&fail_count](const Dataset& d) -> Vector {
                       // deterministic failure on datasets whose first value is 0
                       if (d.values.front() == 0.0) throw InvalidData("flaky");
                       Vector v(1);
                       v << d.values.front();
                       (void)fail_count;
                       return v;
                   }});

    auto rows1 = mc_compare(sc, est, 200, 99);
    auto rows2 = mc_compare(sc, est, 200, 99);
    CHECK(rows1[0].n_mse == rows2[0].n_mse);  // bitwise reproducible
    CHECK(rows1[0].std_error == rows2[0].std_error);
    CHECK(rows1[1].failures == rows2[1].failures);
    CHECK(rows1[1].failures > 0);

    CHECK_THROWS_AS(mc_compare(sc, est, 50, 1), InvalidParameter);
}

TEST_CASE("mc sanity: MLE attains the Cramer-Rao bound at the model") {
    ContaminationScenario sc;
    sc.family = make_poisson();
    sc.theta = th1(3.9);
    sc.fraction = 0.0;
    sc.n = 200;
    std::vector<McEstimator> est;
    est.push_back({"mle", [fam = sc.family](const Dataset& d) { return mle(fam, d); }});
    auto rows = mc_compare(sc, est, 600, 2024);
    // asymptotic variance = tr I^-1 = theta
    CHECK(std::fabs(rows[0].n_mse - 3.9) < 5.0 * rows[0].std_error);
}

TEST_CASE("one-step bias containment across replications") {
    auto nm = make_normal_loc_scale();
    ContaminationScenario sc;
    sc.family = nm;
    sc.theta = th2(3.2, 0.7);
    sc.fraction = 0.1;
    sc.dirac = 28.95;
    sc.n = 24;
    IcSpec spec;
    spec.interval = RadiusInterval{std::sqrt(24.0) * 0.05, std::sqrt(24.0) * 0.20};
    std::vector<McEstimator> est;
    est.push_back({"rmx-check", [nm, spec](const Dataset& d) {
                       auto [mu, sigma] = median_mad(d);
                       Vector start(2);
                       start << mu, sigma;
                       auto rep = one_step(nm, start, d, spec);
                       // hard assertion: reported shift within the clipping bound
                       if (rep.shift.norm() > rep.b + 1e-9)
                           throw Error("shift bound violated");
                       return rep.estimate;
                   }});
    auto rows = mc_compare(sc, est, 150, 7);
    CHECK(rows[0].failures == 0);
}
