#include "robest/mc.hpp"

#include <cmath>

#include "robest/errors.hpp"
#include "robest/expectation.hpp"

namespace robest {

namespace {

// uniform in (0,1), independent of library distribution internals
double next_uniform(std::mt19937_64& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double draw_ideal(const ParametricFamily& fam, const Vector& theta, std::mt19937_64& rng) {
    return fam.quantile(theta, next_uniform(rng));
}

}  // namespace

Dataset sample_contaminated(const ContaminationScenario& sc) {
    sc.family.require_valid(sc.theta);
    if (!(sc.fraction >= 0.0 && sc.fraction <= 1.0))
        throw InvalidParameter("sample_contaminated: fraction must lie in [0,1]");
    if (sc.n < 2) throw InvalidParameter("sample_contaminated: need n >= 2");
    std::mt19937_64 rng(sc.seed);
    std::vector<double> obs;
    obs.reserve(sc.n);
    for (int i = 0; i < sc.n; ++i) {
        const double u = next_uniform(rng);
        if (u < sc.fraction) {
            if (sc.dirac)
                obs.push_back(*sc.dirac);
            else if (sc.contaminant)
                obs.push_back(sc.contaminant(rng));
            else
                throw InvalidParameter("sample_contaminated: no contaminant given");
        } else {
            obs.push_back(draw_ideal(sc.family, sc.theta, rng));
        }
    }
    return Dataset::from_observations(std::move(obs), "simulated");
}

Dataset sample_simple_perturbation(const ParametricFamily& fam, const Vector& theta,
                                   const std::function<double(double)>& q, double r, int n,
                                   std::uint64_t seed, const ExpectationConfig& cfg) {
    fam.require_valid(theta);
    if (r < 0.0) throw InvalidParameter("sample_simple_perturbation: r must be >= 0");
    if (n < 2) throw InvalidParameter("sample_simple_perturbation: need n >= 2");

    const double sup_q = sup_value(fam, theta, q, cfg);
    const double inf_q = inf_value(fam, theta, q, cfg);
    if (!std::isfinite(sup_q) || !std::isfinite(inf_q))
        throw InvalidTangent("tangent must be bounded");
    if (inf_q < -1.0 - 1e-9)
        throw InvalidTangent("tangent must satisfy inf q >= -1");
    // split at sign changes; tangents are allowed to jump there
    const double mean_q =
        expect_with_breaks(fam, theta,
                           [&q](double x) { return Vector::Constant(1, q(x)); },
                           sign_changes(fam, theta, q, cfg), cfg)[0];
    if (std::fabs(mean_q) > 1e-8)
        throw InvalidTangent("tangent must be centered: E q = 0");
    const double root_n = std::sqrt(static_cast<double>(n));
    if (root_n < -r * inf_q)
        throw InvalidTangent("need n^{1/2} >= -r inf q for a nonnegative density");

    const double scale = r / root_n;
    const double envelope = 1.0 + scale * std::max(sup_q, 0.0);
    std::mt19937_64 rng(seed);
    std::vector<double> obs;
    obs.reserve(n);
    while (static_cast<int>(obs.size()) < n) {
        const double x = draw_ideal(fam, theta, rng);
        const double u = next_uniform(rng);
        if (u * envelope <= 1.0 + scale * q(x)) obs.push_back(x);
    }
    return Dataset::from_observations(std::move(obs), "perturbed");
}

std::vector<McRow> mc_compare(const ContaminationScenario& scenario,
                              const std::vector<McEstimator>& estimators, int reps,
                              std::uint64_t seed) {
    if (reps < 100) throw InvalidParameter("mc_compare: need reps >= 100");
    const std::size_t m = estimators.size();
    std::vector<double> sum(m, 0.0), sumsq(m, 0.0);
    std::vector<int> failures(m, 0);

    for (int rep = 0; rep < reps; ++rep) {
        ContaminationScenario sc = scenario;
        sc.seed = splitmix64(seed ^ (0x517cc1b727220a95ULL * (rep + 1)));
        const Dataset data = sample_contaminated(sc);
        for (std::size_t j = 0; j < m; ++j) {
            try {
                const Vector est = estimators[j].estimate(data);
                const double loss =
                    scenario.n * (est - scenario.theta).squaredNorm();
                sum[j] += loss;
                sumsq[j] += loss * loss;
            } catch (const Error&) {
                ++failures[j];
            }
        }
    }

    std::vector<McRow> rows;
    rows.reserve(m);
    for (std::size_t j = 0; j < m; ++j) {
        McRow row;
        row.label = estimators[j].label;
        const int used = reps - failures[j];
        row.failures = failures[j];
        if (used > 0) {
            row.n_mse = sum[j] / used;
            const double var = std::max(sumsq[j] / used - row.n_mse * row.n_mse, 0.0);
            row.std_error = std::sqrt(var / used);
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace robest
