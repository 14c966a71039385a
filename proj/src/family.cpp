#include "robest/family.hpp"

#include <atomic>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include "robest/errors.hpp"
#include "robest/expectation.hpp"
#include "robest/special_functions.hpp"

namespace robest {

namespace {

std::uint64_t next_instance_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
}

void check_theta_size(const ParametricFamily& fam, const Vector& theta) {
    if (theta.size() != fam.k)
        throw InvalidParameter(fam.name + ": expected " + std::to_string(fam.k) +
                               " parameters, got " + std::to_string(theta.size()));
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

void ParametricFamily::require_valid(const Vector& theta) const {
    check_theta_size(*this, theta);
    if (!param_domain(theta))
        throw InvalidParameter(name + ": parameter outside domain");
}

// ---------------------------------------------------------------------------
// normal location and scale, theta = (mu, sigma)
// ---------------------------------------------------------------------------

ParametricFamily make_normal_loc_scale() {
    ParametricFamily fam;
    fam.name = "normal-loc-scale";
    fam.k = 2;
    fam.param_names = {"mu", "sigma"};
    fam.support = Support{Support::Kind::continuous, -kInf, kInf};
    fam.instance_id = next_instance_id();
    fam.param_domain = [](const Vector& th) {
        return th.size() == 2 && std::isfinite(th[0]) && th[1] > 0.0 && std::isfinite(th[1]);
    };
    auto require = [fam_name = fam.name](const Vector& th) {
        if (th.size() != 2 || !(th[1] > 0.0))
            throw InvalidParameter(fam_name + ": sigma must be positive");
    };
    fam.log_density = [require](const Vector& th, double x) {
        require(th);
        const double z = (x - th[0]) / th[1];
        return -0.5 * z * z - std::log(th[1]) - 0.91893853320467274178;  // log sqrt(2 pi)
    };
    fam.density = [require](const Vector& th, double x) {
        require(th);
        return norm_pdf((x - th[0]) / th[1]) / th[1];
    };
    fam.scores = [require](const Vector& th, double x) {
        require(th);
        const double mu = th[0], s = th[1];
        Vector v(2);
        v[0] = (x - mu) / (s * s);
        v[1] = ((x - mu) * (x - mu) - s * s) / (s * s * s);
        return v;
    };
    fam.fisher = [require](const Vector& th) {
        require(th);
        const double s2 = th[1] * th[1];
        Matrix m = Matrix::Zero(2, 2);
        m(0, 0) = 1.0 / s2;
        m(1, 1) = 2.0 / s2;
        return m;
    };
    fam.cdf = [require](const Vector& th, double x) {
        require(th);
        return norm_cdf((x - th[0]) / th[1]);
    };
    fam.quantile = [require](const Vector& th, double p) {
        require(th);
        return th[0] + th[1] * norm_quantile(p);
    };
    LocationScaleMap ls;
    ls.standard_theta = Vector::Zero(2);
    ls.standard_theta[1] = 1.0;
    ls.center_scale = [](const Vector& th) { return std::make_pair(th[0], th[1]); };
    fam.loc_scale = ls;
    return fam;
}

// ---------------------------------------------------------------------------
// Gamma, theta = (sigma, alpha) = (scale, shape)
// ---------------------------------------------------------------------------

ParametricFamily make_gamma() {
    ParametricFamily fam;
    fam.name = "gamma";
    fam.k = 2;
    fam.param_names = {"sigma", "alpha"};
    fam.support = Support{Support::Kind::continuous, 0.0, kInf};
    fam.instance_id = next_instance_id();
    fam.param_domain = [](const Vector& th) {
        return th.size() == 2 && th[0] > 0.0 && th[1] > 0.0 &&
               std::isfinite(th[0]) && std::isfinite(th[1]);
    };
    auto require = [fam_name = fam.name](const Vector& th) {
        if (th.size() != 2 || !(th[0] > 0.0) || !(th[1] > 0.0))
            throw InvalidParameter(fam_name + ": scale and shape must be positive");
    };
    fam.log_density = [require](const Vector& th, double x) {
        require(th);
        if (x <= 0.0) return -kInf;
        const double s = th[0], a = th[1];
        return -std::lgamma(a) - a * std::log(s) + (a - 1.0) * std::log(x) - x / s;
    };
    fam.density = [require](const Vector& th, double x) {
        require(th);
        if (x <= 0.0) return 0.0;
        const double s = th[0], a = th[1];
        return std::exp(-std::lgamma(a) - a * std::log(s) + (a - 1.0) * std::log(x) - x / s);
    };
    fam.scores = [require](const Vector& th, double x) {
        require(th);
        if (x <= 0.0) throw OutOfSupport("gamma: scores need x > 0");
        const double s = th[0], a = th[1];
        Vector v(2);
        v[0] = x / (s * s) - a / s;
        v[1] = std::log(x / s) - digamma(a);
        return v;
    };
    fam.fisher = [require](const Vector& th) {
        require(th);
        const double s = th[0], a = th[1];
        Matrix m(2, 2);
        m(0, 0) = a / (s * s);
        m(0, 1) = m(1, 0) = 1.0 / s;
        m(1, 1) = trigamma(a);
        return m;
    };
    fam.cdf = [require](const Vector& th, double x) {
        require(th);
        if (x <= 0.0) return 0.0;
        return gamma_p(th[1], x / th[0]);
    };
    fam.quantile = [require, cdf = fam.cdf](const Vector& th, double p) {
        require(th);
        if (!(p > 0.0 && p < 1.0))
            throw std::domain_error("gamma quantile: p must lie in (0,1)");
        // monotone bisection on the CDF, 1e-12 in probability
        double hi = th[0] * (th[1] + 10.0);
        while (cdf(th, hi) < p) hi *= 2.0;
        double lo = 0.0;
        for (int i = 0; i < 200; ++i) {
            double mid = 0.5 * (lo + hi);
            double F = cdf(th, mid);
            if (std::fabs(F - p) < 1e-12 && i > 20) return mid;
            (F < p ? lo : hi) = mid;
            if (hi - lo < 1e-15 * (1.0 + hi)) break;
        }
        return 0.5 * (lo + hi);
    };
    return fam;
}

// ---------------------------------------------------------------------------
// Poisson, scalar theta > 0, support N0
// ---------------------------------------------------------------------------

ParametricFamily make_poisson() {
    ParametricFamily fam;
    fam.name = "poisson";
    fam.k = 1;
    fam.param_names = {"lambda"};
    fam.support = Support{Support::Kind::lattice, 0.0, kInf};
    fam.instance_id = next_instance_id();
    fam.param_domain = [](const Vector& th) {
        return th.size() == 1 && th[0] > 0.0 && std::isfinite(th[0]);
    };
    auto require = [fam_name = fam.name](const Vector& th) {
        if (th.size() != 1 || !(th[0] > 0.0))
            throw InvalidParameter(fam_name + ": mean must be positive");
    };
    fam.log_density = [require](const Vector& th, double x) {
        require(th);
        if (x < 0.0) return -kInf;
        // continuous extension of the pmf; evaluated on the lattice by the engine
        return x * std::log(th[0]) - th[0] - std::lgamma(x + 1.0);
    };
    fam.density = [log_density = fam.log_density](const Vector& th, double x) {
        if (x < 0.0) return 0.0;
        return std::exp(log_density(th, x));
    };
    fam.scores = [require](const Vector& th, double x) {
        require(th);
        if (x < 0.0) throw OutOfSupport("poisson: scores need x >= 0");
        Vector v(1);
        v[0] = x / th[0] - 1.0;
        return v;
    };
    fam.fisher = [require](const Vector& th) {
        require(th);
        Matrix m(1, 1);
        m(0, 0) = 1.0 / th[0];
        return m;
    };
    fam.cdf = [require](const Vector& th, double x) {
        require(th);
        if (x < 0.0) return 0.0;
        return gamma_q(std::floor(x) + 1.0, th[0]);
    };
    fam.quantile = [require](const Vector& th, double p) {
        require(th);
        if (!(p > 0.0 && p < 1.0))
            throw std::domain_error("poisson quantile: p must lie in (0,1)");
        const double lambda = th[0];
        double pmf = std::exp(-lambda);
        double cum = pmf;
        double x = 0.0;
        const double cap = 10.0 * lambda + 40.0 * std::sqrt(lambda) + 200.0;
        while (cum < p && x < cap) {
            x += 1.0;
            pmf *= lambda / x;
            cum += pmf;
        }
        return x;
    };
    return fam;
}

// ---------------------------------------------------------------------------
// Exponential family construction
// ---------------------------------------------------------------------------

namespace {

struct MomentCache {
    std::mutex mutex;
    std::map<std::string, std::pair<Vector, Matrix>> entries;
};

std::string theta_key(const Vector& theta) {
    return std::string(reinterpret_cast<const char*>(theta.data()),
                       static_cast<std::size_t>(theta.size()) * sizeof(double));
}

}  // namespace

ParametricFamily family_from_exponential(const ExponentialFamilySpec& spec) {
    ParametricFamily fam;
    fam.name = spec.name;
    fam.k = spec.k;
    fam.param_names = spec.param_names;
    fam.support = spec.support;
    fam.instance_id = next_instance_id();
    fam.param_domain = spec.param_domain;

    auto require = [spec, fam_name = fam.name](const Vector& th) {
        if (th.size() != spec.k || !spec.param_domain(th))
            throw InvalidParameter(fam_name + ": parameter outside domain");
    };

    fam.log_density = [spec, require](const Vector& th, double x) {
        require(th);
        if (!spec.support.contains(x)) return -kInf;
        const double h = spec.carrier(x);
        if (h <= 0.0) return -kInf;
        return spec.zeta(th).dot(spec.statistic(x)) - spec.log_normalizer(th) + std::log(h);
    };
    fam.density = [log_density = fam.log_density](const Vector& th, double x) {
        const double l = log_density(th, x);
        return std::isfinite(l) ? std::exp(l) : 0.0;
    };

    if (spec.cdf) {
        fam.cdf = spec.cdf;
    } else if (fam.support.is_lattice()) {
        fam.cdf = [density = fam.density, require](const Vector& th, double x) {
            require(th);
            double cum = 0.0;
            for (double t = 0.0; t <= std::floor(x); t += 1.0) cum += density(th, t);
            return std::min(cum, 1.0);
        };
    } else {
        if (!std::isfinite(spec.support.lower))
            throw Error("family_from_exponential: numeric cdf needs a finite lower support bound");
        // self-contained composite-Simpson fallback; shipped specs pass closed forms
        fam.cdf = [density = fam.density, lower = fam.support.lower,
                   require](const Vector& th, double x) {
            require(th);
            if (x <= lower) return 0.0;
            const int n = 4096;
            const double h = (x - lower) / n;
            double sum = density(th, lower) + density(th, x);
            for (int i = 1; i < n; ++i)
                sum += density(th, lower + i * h) * (i % 2 ? 4.0 : 2.0);
            return std::min(sum * h / 3.0, 1.0);
        };
    }

    if (spec.quantile) {
        fam.quantile = spec.quantile;
    } else if (fam.support.is_lattice()) {
        fam.quantile = [cdf = fam.cdf](const Vector& th, double p) {
            double x = 0.0;
            while (cdf(th, x) < p && x < 1e7) x += 1.0;
            return x;
        };
    } else {
        fam.quantile = [cdf = fam.cdf, lower = fam.support.lower](const Vector& th, double p) {
            double lo = lower, hi = std::max(lower + 1.0, 2.0 * std::fabs(lower) + 1.0);
            while (cdf(th, hi) < p) hi = lower + 2.0 * (hi - lower);
            for (int i = 0; i < 200; ++i) {
                double mid = 0.5 * (lo + hi);
                (cdf(th, mid) < p ? lo : hi) = mid;
            }
            return 0.5 * (lo + hi);
        };
    }

    auto cache = std::make_shared<MomentCache>();
    auto moments = [spec, cache, fam_copy = fam, require](const Vector& th) {
        require(th);
        const std::string key = theta_key(th);
        {
            std::lock_guard<std::mutex> lock(cache->mutex);
            auto it = cache->entries.find(key);
            if (it != cache->entries.end()) return it->second;
        }
        ExpectationConfig cfg;
        const int k = spec.k;
        // stacked integrand: T and the upper triangle of T T'
        Vector stacked = expect(
            fam_copy, th,
            [&spec, k](double x) {
                Vector T = spec.statistic(x);
                Vector out(k + k * k);
                out.head(k) = T;
                Eigen::Map<Matrix>(out.data() + k, k, k) = T * T.transpose();
                return out;
            },
            cfg);
        Vector mean = stacked.head(k);
        Matrix second = Eigen::Map<Matrix>(stacked.data() + k, k, k);
        Matrix cov = second - mean * mean.transpose();
        auto value = std::make_pair(mean, cov);
        std::lock_guard<std::mutex> lock(cache->mutex);
        cache->entries.emplace(key, value);
        return value;
    };

    auto jacobian_checked = [spec, fam_name = fam.name](const Vector& th) {
        Matrix J = spec.jacobian_zeta(th);
        Eigen::FullPivLU<Matrix> lu(J);
        if (!lu.isInvertible())
            throw DegenerateParametrization(fam_name + ": singular natural-parameter Jacobian");
        return J;
    };

    fam.scores = [spec, moments, jacobian_checked](const Vector& th, double x) {
        if (!spec.support.contains(x))
            throw OutOfSupport(spec.name + ": scores need x in the support");
        Matrix J = jacobian_checked(th);
        Vector mean = moments(th).first;
        return Vector(J.transpose() * (spec.statistic(x) - mean));
    };
    fam.fisher = [moments, jacobian_checked](const Vector& th) {
        Matrix J = jacobian_checked(th);
        Matrix cov = moments(th).second;
        return Matrix(J.transpose() * cov * J);
    };
    return fam;
}

SelfCheckReport self_check(const ParametricFamily& family, const Vector& theta) {
    family.require_valid(theta);
    ExpectationConfig cfg;
    const int k = family.k;
    Vector stacked = expect(
        family, theta,
        [&family, &theta, k](double x) {
            Vector L = family.scores(theta, x);
            Vector out(1 + k + k * k);
            out[0] = 1.0;
            out.segment(1, k) = L;
            Eigen::Map<Matrix>(out.data() + 1 + k, k, k) = L * L.transpose();
            return out;
        },
        cfg);
    const double mass = stacked[0];
    Vector mean = stacked.segment(1, k);
    Matrix second = Eigen::Map<Matrix>(stacked.data() + 1 + k, k, k);
    Matrix cov = second - mean * mean.transpose();
    SelfCheckReport report;
    report.mass_residual = std::fabs(mass - 1.0);
    report.score_mean_norm = mean.norm();
    report.score_cov_residual = (cov - family.fisher(theta)).cwiseAbs().maxCoeff();
    return report;
}

}  // namespace robest
