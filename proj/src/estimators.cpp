#include "robest/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "robest/detail/optim.hpp"
#include "robest/errors.hpp"
#include "robest/special_functions.hpp"

namespace robest {

namespace {

constexpr double kMadConstant = 1.482602218505602;  // 1 / qnorm(0.75)

std::vector<std::pair<double, double>> sorted_pairs(const Dataset& d) {
    std::vector<std::pair<double, double>> out;
    out.reserve(d.values.size());
    for (std::size_t i = 0; i < d.values.size(); ++i)
        if (d.counts[i] > 0.0) out.emplace_back(d.values[i], d.counts[i]);
    std::sort(out.begin(), out.end());
    return out;
}

// 1-based weighted order statistic
double order_statistic(const std::vector<std::pair<double, double>>& pairs, double k) {
    double cum = 0.0;
    for (const auto& [v, c] : pairs) {
        cum += c;
        if (cum >= k) return v;
    }
    return pairs.back().first;
}

double weighted_median(const std::vector<std::pair<double, double>>& pairs, double n) {
    const double half = n / 2.0;
    if (std::fabs(half - std::round(half)) < 1e-12) {
        const double lo = order_statistic(pairs, half);
        const double hi = order_statistic(pairs, half + 1.0);
        return 0.5 * (lo + hi);
    }
    return order_statistic(pairs, std::ceil(half));
}

}  // namespace

Dataset Dataset::from_observations(std::vector<double> obs, std::string label) {
    if (obs.size() < 2) throw InvalidData("Dataset: need at least 2 observations");
    Dataset d;
    d.n = static_cast<double>(obs.size());
    d.values = std::move(obs);
    d.counts.assign(d.values.size(), 1.0);
    d.label = std::move(label);
    return d;
}

Dataset Dataset::from_frequency_table(std::vector<std::pair<double, double>> table,
                                      std::string label) {
    Dataset d;
    d.frequency = true;
    d.label = std::move(label);
    double prev = -std::numeric_limits<double>::infinity();
    for (const auto& [v, c] : table) {
        if (!(v > prev))
            throw InvalidData("Dataset: frequency values must be strictly increasing");
        if (c < 0.0) throw InvalidData("Dataset: negative count");
        prev = v;
        d.values.push_back(v);
        d.counts.push_back(c);
        d.n += c;
    }
    if (d.n < 2.0) throw InvalidData("Dataset: need total count >= 2");
    return d;
}

std::vector<double> Dataset::expanded() const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < values.size(); ++i) {
        const long c = std::llround(counts[i]);
        for (long j = 0; j < c; ++j) out.push_back(values[i]);
    }
    return out;
}

double Dataset::min_value() const {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < values.size(); ++i)
        if (counts[i] > 0.0) m = std::min(m, values[i]);
    return m;
}

double Dataset::max_value() const {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < values.size(); ++i)
        if (counts[i] > 0.0) m = std::max(m, values[i]);
    return m;
}

double Dataset::ecdf(double x) const {
    double cum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i)
        if (values[i] <= x) cum += counts[i];
    return cum / n;
}

// ---------------------------------------------------------------------------
// Cramer-von Mises distance, integrating measure dF_theta
// ---------------------------------------------------------------------------

double cvm_objective(const ParametricFamily& fam, const Vector& theta, const Dataset& data) {
    if (!fam.valid(theta)) return std::numeric_limits<double>::infinity();
    const double n = data.n;
    if (fam.support.is_lattice()) {
        // sum over the lattice of (F_n - F_theta)^2 p_theta
        double total = 0.0, cum_mass = 0.0;
        double x = fam.support.lower;
        const double xmax = data.max_value();
        for (long guard = 0; guard < 2000000; ++guard) {
            const double p = fam.density(theta, x);
            const double F = cum_mass + p;
            total += (data.ecdf(x) - F) * (data.ecdf(x) - F) * p;
            cum_mass = F;
            if (1.0 - cum_mass < 1e-13 && x >= xmax) break;
            x += 1.0;
        }
        return total;
    }
    // continuous: exact sum over the order statistics
    const auto pairs = sorted_pairs(data);
    double sum = 0.0;
    double idx = 0.0;
    for (const auto& [v, c] : pairs) {
        const double u = fam.cdf(theta, v);
        const long m = std::llround(c);
        for (long j = 1; j <= m; ++j) {
            const double q = (2.0 * (idx + j) - 1.0) / (2.0 * n);
            sum += (u - q) * (u - q);
        }
        idx += c;
    }
    return (1.0 / (12.0 * n) + sum) / n;
}

// ---------------------------------------------------------------------------
// parameter transforms for the simplex search
// ---------------------------------------------------------------------------

namespace {

struct Transform {
    std::function<Vector(const Vector&)> to_opt;
    std::function<Vector(const Vector&)> from_opt;
};

Transform family_transform(const ParametricFamily& fam, double lower_bound) {
    if (fam.name == "normal-loc-scale") {
        return {[](const Vector& th) {
                    Vector t(2);
                    t << th[0], std::log(th[1]);
                    return t;
                },
                [lower_bound](const Vector& t) {
                    Vector th(2);
                    th << t[0], std::max(std::exp(t[1]), lower_bound);
                    return th;
                }};
    }
    if (fam.name == "gamma") {
        return {[](const Vector& th) {
                    Vector t(2);
                    t << std::log(th[0]), std::log(th[1]);
                    return t;
                },
                [lower_bound](const Vector& t) {
                    Vector th(2);
                    th << std::max(std::exp(t[0]), lower_bound),
                        std::max(std::exp(t[1]), lower_bound);
                    return th;
                }};
    }
    if (fam.name == "poisson") {
        return {[](const Vector& th) {
                    Vector t(1);
                    t << std::log(th[0]);
                    return t;
                },
                [lower_bound](const Vector& t) {
                    Vector th(1);
                    th << std::max(std::exp(t[0]), lower_bound);
                    return th;
                }};
    }
    return {[](const Vector& th) { return th; }, [](const Vector& t) { return t; }};
}

Vector moment_start(const ParametricFamily& fam, const Dataset& data) {
    double mean = 0.0;
    data.for_each([&](double v, double c) { mean += v * c; });
    mean /= data.n;
    double var = 0.0;
    data.for_each([&](double v, double c) { var += c * (v - mean) * (v - mean); });
    var /= std::max(data.n - 1.0, 1.0);
    if (fam.name == "normal-loc-scale") {
        Vector th(2);
        th << mean, std::sqrt(std::max(var, 1e-16));
        return th;
    }
    if (fam.name == "gamma") {
        Vector th(2);
        const double v = std::max(var, 1e-16);
        th << v / std::max(mean, 1e-16), mean * mean / v;
        return th;
    }
    if (fam.name == "poisson") {
        Vector th(1);
        th << std::max(mean, 1e-8);
        return th;
    }
    throw InvalidData("cvm_estimate: no moment start available for " + fam.name);
}

}  // namespace

std::vector<Vector> cvm_restart_grid(const ParametricFamily& fam, const Vector& center,
                                     const Dataset& data) {
    // moment scales blow up under contamination, so the scale rows reach well
    // below the centre; the location row follows the sample quantiles
    static const double down_factors[5] = {1.0 / 64.0, 1.0 / 16.0, 0.25, 1.0, 4.0};
    static const double sym_factors[5] = {1.0 / 16.0, 0.25, 1.0, 4.0, 16.0};
    std::vector<Vector> grid;
    if (fam.name == "normal-loc-scale") {
        const auto pairs = sorted_pairs(data);
        for (int i = 0; i < 5; ++i) {
            const double q = 0.1 + 0.2 * i;
            const double mu = order_statistic(pairs, std::max(1.0, q * data.n));
            for (int j = 0; j < 5; ++j) {
                Vector th(2);
                th << mu, center[1] * down_factors[j];
                grid.push_back(th);
            }
        }
    } else if (fam.name == "gamma") {
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) {
                Vector th(2);
                th << center[0] * sym_factors[i], center[1] * sym_factors[j];
                grid.push_back(th);
            }
    } else if (fam.name == "poisson") {
        for (int i = 0; i < 5; ++i) {
            Vector th(1);
            th << center[0] * sym_factors[i];
            grid.push_back(th);
        }
    } else {
        grid.push_back(center);
    }
    return grid;
}

Vector cvm_estimate(const ParametricFamily& fam, const Dataset& data,
                    const OptimizerConfig& cfg) {
    if (data.n < 2.0) throw InvalidData("cvm_estimate: need n >= 2");

    // degenerate sample: location pinned to the common value, scale at the
    // optimizer lower bound (the objective is flat in sigma along mu = v)
    if (fam.name == "normal-loc-scale" && data.min_value() == data.max_value()) {
        Vector th(2);
        th << data.min_value(), cfg.positive_lower_bound;
        return th;
    }

    Vector start;
    try {
        start = mle(fam, data);
    } catch (const Error&) {
        start = moment_start(fam, data);
    }
    if (!fam.valid(start)) start = moment_start(fam, data);

    const Transform tr = family_transform(fam, cfg.positive_lower_bound);
    auto objective = [&](const Vector& t) {
        return cvm_objective(fam, tr.from_opt(t), data);
    };

    detail::NelderMeadConfig nm;
    nm.max_iter = cfg.max_iter;
    nm.x_tol = cfg.x_tol;
    nm.f_tol = cfg.f_tol;
    auto run = detail::nelder_mead(objective, tr.to_opt(start), nm);

    // restart from the best grid point when the first run got stuck above it
    const auto grid = cvm_restart_grid(fam, start, data);
    Vector best_grid = grid.front();
    double best_grid_f = std::numeric_limits<double>::infinity();
    for (const Vector& th : grid) {
        const double f = cvm_objective(fam, th, data);
        if (f < best_grid_f) {
            best_grid_f = f;
            best_grid = th;
        }
    }
    if (run.value > best_grid_f) {
        auto rerun = detail::nelder_mead(objective, tr.to_opt(best_grid), nm);
        if (rerun.value < run.value) run = rerun;
    }
    if (!run.converged)
        throw OptimizerFailure("cvm_estimate: simplex search did not converge",
                               tr.from_opt(run.x));
    return tr.from_opt(run.x);
}

std::pair<double, double> median_mad(const Dataset& data) {
    if (data.n < 2.0) throw InvalidData("median_mad: need n >= 2");
    const auto pairs = sorted_pairs(data);
    const double med = weighted_median(pairs, data.n);
    std::vector<std::pair<double, double>> dev;
    dev.reserve(pairs.size());
    for (const auto& [v, c] : pairs) dev.emplace_back(std::fabs(v - med), c);
    std::sort(dev.begin(), dev.end());
    const double mad = weighted_median(dev, data.n);
    if (mad == 0.0)
        throw DegenerateScale("median_mad: more than half the sample is tied");
    return {med, mad * kMadConstant};
}

Vector mle(const ParametricFamily& fam, const Dataset& data) {
    if (data.n < 2.0) throw InvalidData("mle: need n >= 2");
    data.for_each([&](double v, double c) {
        if (c > 0.0 && !fam.support.contains(v))
            throw InvalidData(fam.name + ": observation outside the support");
        if (c > 0.0 && fam.name == "gamma" && v <= 0.0)
            throw InvalidData("gamma: observations must be positive");
    });

    double mean = 0.0;
    data.for_each([&](double v, double c) { mean += v * c; });
    mean /= data.n;

    if (fam.name == "poisson") {
        Vector th(1);
        th << mean;
        return th;
    }
    if (fam.name == "normal-loc-scale") {
        double ss = 0.0;
        data.for_each([&](double v, double c) { ss += c * (v - mean) * (v - mean); });
        const double sd = std::sqrt(ss / (data.n - 1.0));
        if (sd == 0.0) throw DegenerateScale("mle: zero sample standard deviation");
        Vector th(2);
        th << mean, sd;
        return th;
    }
    if (fam.name == "gamma") {
        const Vector start = moment_start(fam, data);
        auto negloglik = [&](const Vector& t) {
            const double s = std::exp(t[0]), a = std::exp(t[1]);
            if (!(s > 0.0) || !(a > 0.0)) return std::numeric_limits<double>::infinity();
            double ll = 0.0;
            Vector th(2);
            th << s, a;
            data.for_each([&](double v, double c) {
                if (c > 0.0) ll += c * fam.log_density(th, v);
            });
            return -ll;
        };
        Vector t0(2);
        t0 << std::log(start[0]), std::log(start[1]);
        auto run = detail::nelder_mead(negloglik, t0, {});
        Vector th(2);
        th << std::exp(run.x[0]), std::exp(run.x[1]);
        return th;
    }
    throw Error("mle: no estimator for family " + fam.name);
}

}  // namespace robest
