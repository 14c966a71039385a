#include "robest/influence.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <mutex>

#include "robest/errors.hpp"

namespace robest {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Matrix invert_with_pivoting(const Matrix& M, const char* what) {
    Eigen::PartialPivLU<Matrix> lu(M);
    const double rc = lu.rcond();
    if (!(rc > 1e-12))
        throw RankDeficiency(std::string(what) + ": condition number above 1e12");
    return lu.solve(Matrix::Identity(M.rows(), M.cols()));
}

// ---------------------------------------------------------------------------
// solved-IC cache, exact-bit keys
// ---------------------------------------------------------------------------

std::string make_cache_key(const ParametricFamily& fam, const Vector& theta, double radius,
                           Neighborhood nb, const SolverConfig& cfg) {
    std::string key;
    auto push = [&key](const void* p, std::size_t n) {
        key.append(reinterpret_cast<const char*>(p), n);
    };
    push(&fam.instance_id, sizeof fam.instance_id);
    const int k = fam.k;
    push(&k, sizeof k);
    push(theta.data(), sizeof(double) * theta.size());
    push(&radius, sizeof radius);
    const char tag = nb == Neighborhood::contamination ? 'c' : 'v';
    push(&tag, 1);
    push(&cfg.tol, sizeof cfg.tol);
    push(&cfg.fixed_point_tol, sizeof cfg.fixed_point_tol);
    push(&cfg.max_sweeps, sizeof cfg.max_sweeps);
    push(&cfg.quadrature.abs_tol, sizeof(double));
    push(&cfg.quadrature.rel_tol, sizeof(double));
    push(&cfg.quadrature.continuous_range, sizeof(double));
    push(&cfg.quadrature.lattice_tail, sizeof(double));
    return key;
}

std::mutex g_cache_mutex;
std::map<std::string, ICSolution>& solution_cache() {
    static std::map<std::string, ICSolution> cache;
    return cache;
}

std::optional<ICSolution> cache_lookup(const std::string& key) {
    std::lock_guard<std::mutex> lock(g_cache_mutex);
    auto& cache = solution_cache();
    auto it = cache.find(key);
    if (it == cache.end()) return std::nullopt;
    return it->second;
}

void cache_store(const std::string& key, const ICSolution& value) {
    std::lock_guard<std::mutex> lock(g_cache_mutex);
    auto& cache = solution_cache();
    if (cache.size() < 200000) cache.emplace(key, value);
}

// ---------------------------------------------------------------------------
// node context for the fixed-point sweeps
// ---------------------------------------------------------------------------

struct NodeContext {
    QuadratureRule rule;
    Matrix scores;  // k x N
};

NodeContext build_context(const ParametricFamily& fam, const Vector& theta,
                          const ExpectationConfig& cfg) {
    NodeContext ctx;
    ctx.rule = probability_rule(fam, theta, cfg);
    const long n = ctx.rule.x.size();
    ctx.scores.resize(fam.k, n);
    for (long i = 0; i < n; ++i) ctx.scores.col(i) = fam.scores(theta, ctx.rule.x[i]);
    return ctx;
}

struct SweepState {
    Matrix A;
    Vector z;
    double b = 0.0;
};

double relative_change(const SweepState& cur, const SweepState& nxt) {
    const double da = (nxt.A - cur.A).cwiseAbs().maxCoeff() /
                      std::max(cur.A.cwiseAbs().maxCoeff(), 1e-300);
    const double db = std::fabs(nxt.b - cur.b) / std::max(cur.b, 1e-300);
    const double dz = (nxt.z - cur.z).cwiseAbs().maxCoeff() / (1.0 + cur.z.cwiseAbs().maxCoeff());
    return std::max({da, db, dz});
}

// one Gauss-Seidel sweep on the node rule: b by bisection, then z, then A
SweepState node_sweep(const NodeContext& ctx, const SweepState& s, double radius) {
    const long n = ctx.rule.x.size();
    const int k = static_cast<int>(s.z.size());
    Eigen::ArrayXd normY(n);
    Matrix centered = ctx.scores.colwise() - s.z;
    Matrix Y = s.A * centered;
    normY = Y.colwise().norm().transpose().array();

    double lo = 0.0, hi = normY.maxCoeff();
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double h = radius * radius * mid -
                         (ctx.rule.w * (normY - mid).max(0.0)).sum();
        (h < 0.0 ? lo : hi) = mid;
    }
    SweepState nxt;
    nxt.b = 0.5 * (lo + hi);

    Eigen::ArrayXd w = (nxt.b / normY.max(1e-300)).min(1.0);
    Eigen::ArrayXd ww = ctx.rule.w * w;
    const double Ew = ww.sum();
    nxt.z = (ctx.scores * ww.matrix()) / Ew;

    Matrix centered2 = ctx.scores.colwise() - nxt.z;
    Matrix M = centered2 * ww.matrix().asDiagonal() * centered2.transpose();
    nxt.A = invert_with_pivoting(M, "contamination solver");
    (void)k;
    return nxt;
}

// ---------------------------------------------------------------------------
// honest (engine-backed) evaluations for the contamination system
// ---------------------------------------------------------------------------

struct HonestSystem {
    const ParametricFamily& fam;
    const Vector& theta;
    const ExpectationConfig& cfg;

    Vector lambda(double x) const { return fam.scores(theta, x); }

    std::vector<double> clip_breaks(const SweepState& s) const {
        auto g = [&](double x) { return (s.A * (lambda(x) - s.z)).norm() - s.b; };
        return sign_changes(fam, theta, g, cfg);
    }

    // E(|Y| - b)_+ and P(|Y| > b) for Y = A(Lambda - z)
    std::pair<double, double> clip_stats(const SweepState& s,
                                         const std::vector<double>& breaks) const {
        auto pos = [&](double x) {
            const double v = (s.A * (lambda(x) - s.z)).norm() - s.b;
            return Vector::Constant(1, std::max(v, 0.0));
        };
        const double epos = expect_with_breaks(fam, theta, pos, breaks, cfg)[0];
        double pgt = 0.0;
        if (fam.support.is_lattice()) {
            // exact lattice tail handled inside the summation
            auto ind = [&](double x) {
                const double v = (s.A * (lambda(x) - s.z)).norm();
                return Vector::Constant(1, v > s.b ? 1.0 : 0.0);
            };
            pgt = expect_with_breaks(fam, theta, ind, breaks, cfg)[0];
        } else {
            auto [lo, hi] = truncated_range(fam, theta, cfg);
            std::vector<double> edges{lo};
            for (double t : breaks)
                if (t > lo && t < hi) edges.push_back(t);
            edges.push_back(hi);
            std::sort(edges.begin(), edges.end());
            for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
                const double mid = 0.5 * (edges[i] + edges[i + 1]);
                if ((s.A * (lambda(mid) - s.z)).norm() > s.b)
                    pgt += fam.cdf(theta, edges[i + 1]) - fam.cdf(theta, edges[i]);
            }
        }
        return {epos, pgt};
    }

    // centering/fisher integrals at the current state; returns
    // (E w, E Lambda w (k), E ||Lambda - z|| w, M = E (Lambda-z)(Lambda-z)' w)
    struct Moments {
        double Ew;
        Vector ELw;
        double scale;
        Matrix M;
    };
    Moments moments(const SweepState& s, const Vector& z_for_M,
                    const std::vector<double>& breaks) const {
        const int k = static_cast<int>(s.z.size());
        auto f = [&](double x) {
            const Vector L = lambda(x);
            const Vector d = L - s.z;
            const double w = std::min(1.0, s.b / std::max((s.A * d).norm(), 1e-300));
            Vector out(1 + k + 1 + k * k);
            out[0] = w;
            out.segment(1, k) = L * w;
            out[1 + k] = d.norm() * w;
            const Vector dm = L - z_for_M;
            Eigen::Map<Matrix>(out.data() + 2 + k, k, k) = dm * dm.transpose() * w;
            return out;
        };
        Vector r = expect_with_breaks(fam, theta, f, breaks, cfg);
        Moments m;
        m.Ew = r[0];
        m.ELw = r.segment(1, k);
        m.scale = r[1 + k];
        m.M = Eigen::Map<Matrix>(r.data() + 2 + k, k, k);
        return m;
    }
};

struct Residuals {
    double clip, center, fisher;
    double worst() const { return std::max({clip, center, fisher}); }
};

Residuals honest_residuals(const HonestSystem& sys, const SweepState& s, double radius) {
    const auto breaks = sys.clip_breaks(s);
    const auto [epos, pgt] = sys.clip_stats(s, breaks);
    (void)pgt;
    const auto m = sys.moments(s, s.z, breaks);
    Residuals res;
    res.clip = std::fabs(radius * radius * s.b - epos) /
               std::max(radius * radius * s.b, 1e-300);
    res.center = (m.ELw - s.z * m.Ew).norm() / std::max(m.scale, 1e-300);
    Matrix Ainv = invert_with_pivoting(s.A, "residual check");
    res.fisher = (Ainv - m.M).cwiseAbs().maxCoeff() /
                 std::max(Ainv.cwiseAbs().maxCoeff(), 1e-300);
    return res;
}

// one honest sweep: safeguarded Newton on b, then z, then A
SweepState honest_sweep(const HonestSystem& sys, const SweepState& s, double radius) {
    SweepState nxt = s;
    // b step
    for (int it = 0; it < 6; ++it) {
        const auto breaks = sys.clip_breaks(nxt);
        const auto [epos, pgt] = sys.clip_stats(nxt, breaks);
        const double h = radius * radius * nxt.b - epos;
        const double dh = radius * radius + pgt;
        const double step = h / dh;
        nxt.b -= step;
        if (!(nxt.b > 0.0)) {
            nxt.b = 0.5 * (nxt.b + step);  // fall back to halving toward zero
            continue;
        }
        if (std::fabs(step) < 1e-14 * nxt.b) break;
    }
    const auto breaks = sys.clip_breaks(nxt);
    auto m1 = sys.moments(nxt, nxt.z, breaks);
    nxt.z = m1.ELw / m1.Ew;
    auto m2 = sys.moments(nxt, nxt.z, breaks);
    nxt.A = invert_with_pivoting(m2.M, "contamination solver");
    return nxt;
}

struct IterationOutcome {
    SweepState state;
    int sweeps = 0;
    bool damped = false;
    bool converged = false;
    std::vector<double> history;
};

template <typename SweepFn>
IterationOutcome iterate_fixed_point(SweepState state, SweepFn&& sweep, int max_sweeps,
                                     double fp_tol) {
    IterationOutcome out;
    double prev_delta = kInf;
    int non_contracting = 0;
    for (int it = 0; it < max_sweeps; ++it) {
        SweepState nxt = sweep(state);
        const double delta = relative_change(state, nxt);
        out.history.push_back(delta);
        if (delta >= prev_delta) ++non_contracting;
        if (non_contracting > 20) out.damped = true;
        const double f = out.damped ? 0.5 : 1.0;
        state.A += f * (nxt.A - state.A);
        state.z += f * (nxt.z - state.z);
        state.b += f * (nxt.b - state.b);
        prev_delta = delta;
        ++out.sweeps;
        if (delta < fp_tol) {
            out.converged = true;
            break;
        }
    }
    out.state = state;
    return out;
}

InfluenceCurve make_contamination_curve(const ParametricFamily& fam, const Vector& theta,
                                        double radius, const SweepState& s) {
    InfluenceCurve ic;
    ic.family = fam;
    ic.theta = theta;
    ic.neighborhood = Neighborhood::contamination;
    ic.radius = radius;
    ic.A = s.A;
    ic.z = s.z;
    ic.a = s.A * s.z;
    ic.b = s.b;
    return ic;
}

double node_variance(const NodeContext& ctx, const SweepState& s) {
    Matrix Y = s.A * (ctx.scores.colwise() - s.z);
    Eigen::ArrayXd normY = Y.colwise().norm().transpose().array();
    return (ctx.rule.w * normY.min(s.b).square()).sum();
}

// flat-centering probe for lattice families: the z-component of the system
// loses local sensitivity when the weight saturates between atoms
bool centering_flat(const NodeContext& ctx, const SweepState& s, double width) {
    auto zeta = [&](double t) {
        Vector zt = s.z;
        zt[0] = t;
        Matrix Y = s.A * (ctx.scores.colwise() - zt);
        Eigen::ArrayXd normY = Y.colwise().norm().transpose().array();
        Eigen::ArrayXd w = (s.b / normY.max(1e-300)).min(1.0);
        return ((ctx.scores.row(0).transpose().array() - t) * ctx.rule.w * w).sum();
    };
    const double d = 0.5 * width;
    const double lo = zeta(s.z[0] - d), hi = zeta(s.z[0] + d);
    const double scale = std::max(std::fabs(lo) + std::fabs(hi), 1e-300);
    return std::fabs(lo - hi) < 1e-6 * scale || std::fabs(lo - hi) < 1e-14;
}

ICSolution solve_contamination_at(const ParametricFamily& fam, const Vector& theta,
                                  double radius, const SolverConfig& cfg);

// exact multiplier transport along the location-scale structure
ICSolution transport_loc_scale(const ParametricFamily& fam, const Vector& theta,
                               const ICSolution& standard, double sigma) {
    ICSolution out = standard;
    out.ic.family = fam;
    out.ic.theta = theta;
    out.ic.A = sigma * sigma * standard.ic.A;
    out.ic.z = standard.ic.z / sigma;
    out.ic.a = sigma * (standard.ic.A * standard.ic.z);
    out.ic.b = sigma * standard.ic.b;
    out.risk.variance = sigma * sigma * standard.risk.variance;
    out.risk.bias_bound = sigma * standard.risk.bias_bound;
    out.risk.mse = sigma * sigma * standard.risk.mse;
    out.risk.tr_A = sigma * sigma * standard.risk.tr_A;
    return out;
}

ICSolution classical_solution(const ParametricFamily& fam, const Vector& theta,
                              Neighborhood nb) {
    ICSolution sol;
    sol.ic = classical_ic(fam, theta);
    sol.ic.neighborhood = nb;
    sol.risk.variance = sol.ic.A.trace();
    sol.risk.tr_A = sol.ic.A.trace();
    sol.risk.radius = 0.0;
    sol.risk.mse = sol.risk.variance;
    sol.risk.bias_bound = sol.ic.b;  // typically +inf
    return sol;
}

ICSolution solve_contamination_impl(const ParametricFamily& fam, const Vector& theta,
                                    double radius, const SolverConfig& cfg,
                                    double perturbation_applied) {
    NodeContext ctx = build_context(fam, theta, cfg.quadrature);
    SweepState state;
    state.A = invert_with_pivoting(fam.fisher(theta), "classical limit");
    state.z = Vector::Zero(fam.k);
    {
        // initial b from one bisection at the classical (A, z)
        SweepState first = node_sweep(ctx, state, radius);
        state.b = first.b;
    }
    auto fast = iterate_fixed_point(
        state, [&](const SweepState& s) { return node_sweep(ctx, s, radius); },
        cfg.max_sweeps, cfg.fixed_point_tol);

    HonestSystem sys{fam, theta, cfg.quadrature};
    IterationOutcome final_out = fast;
    if (!fam.support.is_lattice()) {
        // polish against the adaptive engine; node rules are blind to the
        // kinks of the clipped integrands
        auto polish = iterate_fixed_point(
            fast.state, [&](const SweepState& s) { return honest_sweep(sys, s, radius); },
            60, cfg.fixed_point_tol);
        polish.sweeps += fast.sweeps;
        polish.damped = polish.damped || fast.damped;
        polish.history.insert(polish.history.begin(), fast.history.begin(),
                              fast.history.end());
        final_out = polish;
    }

    Residuals res = honest_residuals(sys, final_out.state, radius);
    const bool ok = final_out.converged && res.worst() < cfg.tol;
    if (!ok) {
        if (fam.support.is_lattice() && fam.k == 1 &&
            centering_flat(ctx, final_out.state, 1e-6)) {
            if (perturbation_applied == 0.0) {
                Vector perturbed = theta;
                perturbed[0] += 1e-8;
                SolverConfig sub = cfg;
                sub.use_cache = false;
                ICSolution sol = solve_contamination_impl(fam, perturbed, radius, sub, 1e-8);
                sol.ic.theta_perturbation = 1e-8;
                sol.diagnostics.theta_perturbation = 1e-8;
                return sol;
            }
            Vector suggestion = theta;
            suggestion[0] += 1e-8;
            throw DegenerateCentering(
                fam.name + ": centering equation flat (non-unique median of the scores)",
                suggestion);
        }
        throw SolverFailure(fam.name + ": contamination solver did not reach tolerance (worst residual " +
                                std::to_string(res.worst()) + ")",
                            final_out.history);
    }

    ICSolution sol;
    sol.ic = make_contamination_curve(fam, theta, radius, final_out.state);
    sol.ic.theta_perturbation = perturbation_applied;
    sol.diagnostics.clip_residual = res.clip;
    sol.diagnostics.centering_residual = res.center;
    sol.diagnostics.fisher_residual = res.fisher;
    sol.diagnostics.sweeps = final_out.sweeps;
    sol.diagnostics.damped = final_out.damped;
    sol.diagnostics.theta_perturbation = perturbation_applied;
    sol.diagnostics.residual_history = final_out.history;

    sol.risk.radius = radius;
    sol.risk.tr_A = final_out.state.A.trace();
    sol.risk.bias_bound = final_out.state.b;
    if (fam.support.is_lattice()) {
        sol.risk.variance = node_variance(ctx, final_out.state);
    } else {
        const auto breaks = sys.clip_breaks(final_out.state);
        auto f = [&](double x) {
            return Vector::Constant(1, sol.ic.eval(x).squaredNorm());
        };
        sol.risk.variance = expect_with_breaks(fam, theta, f, breaks, cfg.quadrature)[0];
    }
    sol.risk.mse = sol.risk.variance + radius * radius * final_out.state.b * final_out.state.b;
    return sol;
}

ICSolution solve_contamination_at(const ParametricFamily& fam, const Vector& theta,
                                  double radius, const SolverConfig& cfg) {
    fam.require_valid(theta);
    if (radius < 0.0) throw InvalidParameter("solve_contamination_ic: radius must be >= 0");
    if (radius == 0.0) return classical_solution(fam, theta, Neighborhood::contamination);

    const std::string key = make_cache_key(fam, theta, radius, Neighborhood::contamination, cfg);
    if (cfg.use_cache)
        if (auto hit = cache_lookup(key)) return *hit;

    ICSolution sol;
    if (fam.loc_scale && (theta - fam.loc_scale->standard_theta).cwiseAbs().maxCoeff() > 0.0) {
        const double sigma = fam.loc_scale->center_scale(theta).second;
        ICSolution standard =
            solve_contamination_at(fam, fam.loc_scale->standard_theta, radius, cfg);
        sol = transport_loc_scale(fam, theta, standard, sigma);
    } else {
        sol = solve_contamination_impl(fam, theta, radius, cfg, 0.0);
    }
    if (cfg.use_cache) cache_store(key, sol);
    return sol;
}

}  // namespace

// ---------------------------------------------------------------------------
// public surface
// ---------------------------------------------------------------------------

Vector InfluenceCurve::eval(double x) const {
    if (x < family.support.lower || x > family.support.upper)
        throw OutOfSupport(family.name + ": influence curve evaluated outside the support");
    const Vector L = family.scores(theta, x);
    if (neighborhood == Neighborhood::total_variation && !approximate_tv && !classical) {
        const double y = A(0, 0) * L[0];
        return Vector::Constant(1, std::clamp(y, c, c + b));
    }
    Vector y = A * (L - z);
    if (classical || !std::isfinite(b)) return y;
    const double n = y.norm();
    if (n <= b) return y;
    // scalar case: the clipping plateau is exactly +-b
    if (y.size() == 1) return Vector::Constant(1, y[0] > 0.0 ? b : -b);
    return Vector(y * (b / n));
}

double InfluenceCurve::weight(double x) const {
    const Vector L = family.scores(theta, x);
    if (neighborhood == Neighborhood::total_variation && !approximate_tv && !classical) {
        const double y = A(0, 0) * L[0];
        if (y == 0.0) return 1.0;
        return std::clamp(y, c, c + b) / y;
    }
    if (classical || !std::isfinite(b)) return 1.0;
    const double n = (A * (L - z)).norm();
    return std::min(1.0, b / std::max(n, 1e-300));
}

InfluenceCurve classical_ic(const ParametricFamily& fam, const Vector& theta) {
    fam.require_valid(theta);
    InfluenceCurve ic;
    ic.family = fam;
    ic.theta = theta;
    ic.neighborhood = Neighborhood::contamination;
    ic.radius = 0.0;
    ic.A = invert_with_pivoting(fam.fisher(theta), "classical_ic");
    ic.z = Vector::Zero(fam.k);
    ic.a = Vector::Zero(fam.k);
    ic.classical = true;
    if (fam.bounded_scores) {
        InfluenceCurve tmp = ic;
        tmp.b = kInf;
        ic.b = sup_abs(fam, theta, [&tmp](double x) { return tmp.eval(x); });
    } else {
        ic.b = kInf;
    }
    return ic;
}

ICSolution solve_contamination_ic(const ParametricFamily& fam, const Vector& theta,
                                  double radius, const SolverConfig& cfg) {
    return solve_contamination_at(fam, theta, radius, cfg);
}

// ---------------------------------------------------------------------------
// total variation, k = 1
// ---------------------------------------------------------------------------

namespace {

struct TvContext {
    const ParametricFamily& fam;
    const Vector& theta;
    const ExpectationConfig& cfg;
    // node set; exact for lattice families and a warm start for continuous
    Eigen::ArrayXd x, w, lambda;
    bool lattice = false;

    double pos_part_nodes(const Eigen::ArrayXd& g) const { return (w * g.max(0.0)).sum(); }
};

TvContext make_tv_context(const ParametricFamily& fam, const Vector& theta,
                          const ExpectationConfig& cfg) {
    QuadratureRule rule = probability_rule(fam, theta, cfg);
    TvContext ctx{fam, theta, cfg, {}, {}, {}, false};
    ctx.x = rule.x;
    ctx.w = rule.w;
    ctx.lattice = rule.lattice;
    ctx.lambda.resize(rule.x.size());
    for (long i = 0; i < rule.x.size(); ++i)
        ctx.lambda[i] = fam.scores(theta, rule.x[i])[0];
    return ctx;
}

struct TvInner {
    double c, b;
};

// node-based inner solve: given A, find (c, b) with both positive-part masses
// equal to r^2 b; rho(c) is decreasing in c
TvInner tv_inner_nodes(const TvContext& ctx, double A, double r) {
    Eigen::ArrayXd Y = A * ctx.lambda;
    auto b_of = [&](double c) { return ctx.pos_part_nodes(c - Y) / (r * r); };
    auto rho = [&](double c) {
        const double b = b_of(c);
        return ctx.pos_part_nodes(Y - (c + b)) - r * r * b;
    };
    double chi = 0.0;
    double clo = -std::max(1.0, ctx.lambda.abs().maxCoeff() * A);
    int guard = 0;
    while (rho(clo) < 0.0 && guard++ < 80) clo *= 2.0;
    for (int it = 0; it < 200 && chi - clo > 1e-15 * (1.0 + std::fabs(clo)); ++it) {
        const double mid = 0.5 * (clo + chi);
        (rho(mid) > 0.0 ? clo : chi) = mid;
    }
    const double c = 0.5 * (clo + chi);
    return {c, b_of(c)};
}

double tv_fisher_residual_nodes(const TvContext& ctx, double A, const TvInner& in) {
    Eigen::ArrayXd psi = (A * ctx.lambda).max(in.c).min(in.c + in.b);
    return (ctx.w * psi * ctx.lambda).sum() - 1.0;
}

// honest counterparts for continuous families
double tv_pos_honest(const TvContext& ctx, const std::function<double(double)>& g) {
    return expect_pos_part(ctx.fam, ctx.theta, g, ctx.cfg);
}

TvInner tv_inner_honest(const TvContext& ctx, double A, double r, TvInner start) {
    auto lam = [&](double x) { return ctx.fam.scores(ctx.theta, x)[0]; };
    auto b_of = [&](double c) {
        return tv_pos_honest(ctx, [&](double x) { return c - A * lam(x); }) / (r * r);
    };
    auto rho = [&](double c) {
        const double b = b_of(c);
        return tv_pos_honest(ctx, [&](double x) { return A * lam(x) - (c + b); }) - r * r * b;
    };
    double width = std::max(1e-4 * (1.0 + std::fabs(start.c)), 1e-8);
    double clo = start.c - width;
    double chi = std::min(start.c + width, 0.0);
    int guard = 0;
    while (rho(clo) < 0.0 && guard++ < 60) {
        clo -= width;
        width *= 2.0;
    }
    guard = 0;
    width = std::max(1e-4 * (1.0 + std::fabs(start.c)), 1e-8);
    while (chi < 0.0 && rho(chi) > 0.0 && guard++ < 60) {
        chi = std::min(chi + width, 0.0);
        width *= 2.0;
    }
    for (int it = 0; it < 120 && chi - clo > 1e-14 * (1.0 + std::fabs(clo)); ++it) {
        const double mid = 0.5 * (clo + chi);
        (rho(mid) > 0.0 ? clo : chi) = mid;
    }
    const double c = 0.5 * (clo + chi);
    return {c, b_of(c)};
}

double tv_fisher_residual_honest(const TvContext& ctx, double A, const TvInner& in) {
    auto lam = [&](double x) { return ctx.fam.scores(ctx.theta, x)[0]; };
    auto crossings_lo = sign_changes(
        ctx.fam, ctx.theta, [&](double x) { return A * lam(x) - in.c; }, ctx.cfg);
    auto crossings_hi = sign_changes(
        ctx.fam, ctx.theta, [&](double x) { return A * lam(x) - (in.c + in.b); }, ctx.cfg);
    crossings_lo.insert(crossings_lo.end(), crossings_hi.begin(), crossings_hi.end());
    auto f = [&](double x) {
        const double psi = std::clamp(A * lam(x), in.c, in.c + in.b);
        return Vector::Constant(1, psi * lam(x));
    };
    return expect_with_breaks(ctx.fam, ctx.theta, f, crossings_lo, ctx.cfg)[0] - 1.0;
}

}  // namespace

ICSolution solve_totalvariation_ic(const ParametricFamily& fam, const Vector& theta,
                                   double radius, const SolverConfig& cfg) {
    fam.require_valid(theta);
    if (fam.k != 1)
        throw UnsupportedDimension(
            "solve_totalvariation_ic: exact solution needs k = 1; use tv_by_reduction");
    if (radius < 0.0) throw InvalidParameter("solve_totalvariation_ic: radius must be >= 0");
    if (radius == 0.0) return classical_solution(fam, theta, Neighborhood::total_variation);

    const std::string key = make_cache_key(fam, theta, radius, Neighborhood::total_variation, cfg);
    if (cfg.use_cache)
        if (auto hit = cache_lookup(key)) return *hit;

    TvContext ctx = make_tv_context(fam, theta, cfg.quadrature);
    const double fisher = fam.fisher(theta)(0, 0);

    const bool honest_needed = !ctx.lattice;
    auto residual_at = [&](double A, TvInner& inner_out) {
        TvInner in = tv_inner_nodes(ctx, A, radius);
        double R = tv_fisher_residual_nodes(ctx, A, in);
        if (honest_needed) {
            in = tv_inner_honest(ctx, A, radius, in);
            R = tv_fisher_residual_honest(ctx, A, in);
        }
        inner_out = in;
        return R;
    };

    // bracketed secant (Illinois) on A; R is increasing with R(I^-1) <= 0
    double Alo = 1.0 / fisher;
    TvInner inner{};
    double Rlo = residual_at(Alo, inner);
    double Ahi = Alo, Rhi = Rlo;
    int guard = 0;
    while (Rhi < 0.0 && guard++ < 200) {
        Ahi *= 1.6;
        Rhi = residual_at(Ahi, inner);
    }
    if (Rhi < 0.0)
        throw SolverFailure("total-variation solver: failed to bracket the multiplier",
                            {Rlo, Rhi});
    double A = Ahi;
    std::vector<double> history;
    double flo = Rlo, fhi = Rhi, alo = Alo, ahi = Ahi;
    for (int it = 0; it < 200; ++it) {
        A = (std::fabs(fhi - flo) > 1e-300) ? ahi - fhi * (ahi - alo) / (fhi - flo)
                                            : 0.5 * (alo + ahi);
        if (!(A > alo && A < ahi)) A = 0.5 * (alo + ahi);
        const double R = residual_at(A, inner);
        history.push_back(std::fabs(R));
        if (R < 0.0) {
            alo = A;
            flo = R;
            fhi *= 0.5;  // Illinois scaling keeps the secant moving
        } else {
            ahi = A;
            fhi = R;
            flo *= 0.5;
        }
        if (std::fabs(R) < 1e-12 || ahi - alo < 1e-14 * A) break;
    }
    const double Rfinal = residual_at(A, inner);

    // honest residuals of the three defining equations
    double e_lo, e_hi;
    if (ctx.lattice) {
        Eigen::ArrayXd Y = A * ctx.lambda;
        e_lo = ctx.pos_part_nodes(inner.c - Y);
        e_hi = ctx.pos_part_nodes(Y - (inner.c + inner.b));
    } else {
        auto lam = [&](double x) { return fam.scores(theta, x)[0]; };
        e_lo = tv_pos_honest(ctx, [&](double x) { return inner.c - A * lam(x); });
        e_hi = tv_pos_honest(ctx, [&](double x) { return A * lam(x) - (inner.c + inner.b); });
    }
    const double r2b = radius * radius * inner.b;
    Residuals res;
    res.clip = std::max(std::fabs(e_lo - r2b), std::fabs(e_hi - r2b)) / std::max(r2b, 1e-300);
    res.fisher = std::fabs(Rfinal);
    if (res.clip > cfg.tol || res.fisher > cfg.tol)
        throw SolverFailure("total-variation solver did not reach tolerance", history);

    ICSolution sol;
    sol.ic.family = fam;
    sol.ic.theta = theta;
    sol.ic.neighborhood = Neighborhood::total_variation;
    sol.ic.radius = radius;
    sol.ic.A = Matrix::Constant(1, 1, A);
    sol.ic.z = Vector::Zero(1);
    sol.ic.a = Vector::Zero(1);
    sol.ic.b = inner.b;
    sol.ic.c = inner.c;

    // centering E psi = 0 is implied, not imposed; report it
    double e_psi, variance;
    if (ctx.lattice) {
        Eigen::ArrayXd psi = (A * ctx.lambda).max(inner.c).min(inner.c + inner.b);
        e_psi = (ctx.w * psi).sum();
        variance = (ctx.w * psi.square()).sum();
    } else {
        auto f = [&](double x) {
            const double psi = sol.ic.eval(x)[0];
            Vector out(2);
            out[0] = psi;
            out[1] = psi * psi;
            return out;
        };
        Vector r = expect(fam, theta, f, cfg.quadrature);
        e_psi = r[0];
        variance = r[1];
    }
    res.center = std::fabs(e_psi) / std::max(inner.b, 1e-300);

    sol.diagnostics.clip_residual = res.clip;
    sol.diagnostics.centering_residual = res.center;
    sol.diagnostics.fisher_residual = res.fisher;
    sol.diagnostics.sweeps = static_cast<int>(history.size());
    sol.diagnostics.residual_history = history;

    sol.risk.radius = radius;
    sol.risk.tr_A = A;
    sol.risk.bias_bound = inner.b;  // omega_v = (c+b) - c
    sol.risk.variance = variance;
    sol.risk.mse = variance + radius * radius * inner.b * inner.b;

    if (cfg.use_cache) cache_store(key, sol);
    return sol;
}

ICSolution tv_by_reduction(const ParametricFamily& fam, const Vector& theta, double radius,
                           const SolverConfig& cfg) {
    if (radius == 0.0) return classical_solution(fam, theta, Neighborhood::total_variation);
    ICSolution sol = solve_contamination_ic(fam, theta, 2.0 * radius, cfg);
    sol.ic.neighborhood = Neighborhood::total_variation;
    sol.ic.radius = radius;
    sol.ic.approximate_tv = true;
    sol.risk.radius = radius;
    sol.risk.bias_bound = 2.0 * sol.ic.b;  // omega_v <= 2 omega_c
    sol.risk.approximate = true;
    // variance + r^2 (2b)^2 coincides with the contamination report at 2r
    return sol;
}

double omega(const InfluenceCurve& ic, Neighborhood type) {
    if (type == Neighborhood::contamination) {
        if (!ic.classical && std::isfinite(ic.b) &&
            (ic.neighborhood == Neighborhood::contamination || ic.approximate_tv))
            return ic.b;  // clipped construction: the sup is the bound
        if (ic.neighborhood == Neighborhood::total_variation && !ic.classical)
            return std::max(std::fabs(ic.c), std::fabs(ic.c + ic.b));
        if (ic.classical && !ic.family.bounded_scores) return kInf;
        return sup_abs(ic.family, ic.theta, [&ic](double x) { return ic.eval(x); });
    }
    // total variation
    if (ic.approximate_tv) return 2.0 * ic.b;  // omega_v <= 2 omega_c, the reported bound
    if (ic.dim() != 1)
        throw UnsupportedDimension("omega: total-variation bias needs k = 1");
    if (ic.neighborhood == Neighborhood::total_variation && !ic.classical) return ic.b;
    if (ic.classical && !ic.family.bounded_scores) return kInf;
    auto f = [&ic](double x) { return ic.eval(x)[0]; };
    return sup_value(ic.family, ic.theta, f) - inf_value(ic.family, ic.theta, f);
}

double omega(const ParametricFamily& fam, const Vector& theta,
             const std::function<Vector(double)>& psi, Neighborhood type,
             const ExpectationConfig& cfg) {
    if (type == Neighborhood::contamination) return sup_abs(fam, theta, psi, cfg);
    auto probe = psi(fam.support.is_lattice() ? fam.support.lower
                                              : fam.quantile(theta, 0.5));
    if (probe.size() != 1)
        throw UnsupportedDimension("omega: total-variation bias needs k = 1");
    auto f = [&psi](double x) { return psi(x)[0]; };
    return sup_value(fam, theta, f, cfg) - inf_value(fam, theta, f, cfg);
}

RiskReport mse_of(const InfluenceCurve& ic, double radius, Neighborhood type,
                  const ExpectationConfig& cfg) {
    RiskReport report;
    report.radius = radius;
    report.tr_A = ic.A.trace();
    report.approximate = ic.approximate_tv;

    std::vector<double> breaks;
    if (!ic.classical && !ic.family.support.is_lattice()) {
        if (ic.neighborhood == Neighborhood::total_variation && !ic.approximate_tv) {
            auto lo = sign_changes(ic.family, ic.theta,
                                   [&ic](double x) {
                                       return ic.A(0, 0) * ic.family.scores(ic.theta, x)[0] - ic.c;
                                   },
                                   cfg);
            auto hi = sign_changes(ic.family, ic.theta,
                                   [&ic](double x) {
                                       return ic.A(0, 0) * ic.family.scores(ic.theta, x)[0] -
                                              (ic.c + ic.b);
                                   },
                                   cfg);
            breaks = lo;
            breaks.insert(breaks.end(), hi.begin(), hi.end());
        } else if (std::isfinite(ic.b)) {
            breaks = sign_changes(ic.family, ic.theta,
                                  [&ic](double x) {
                                      return (ic.A * (ic.family.scores(ic.theta, x) - ic.z)).norm() -
                                             ic.b;
                                  },
                                  cfg);
        }
    }
    auto f = [&ic](double x) { return Vector::Constant(1, ic.eval(x).squaredNorm()); };
    report.variance = expect_with_breaks(ic.family, ic.theta, f, breaks, cfg)[0];
    report.bias_bound = omega(ic, type);
    if (radius == 0.0)
        report.mse = report.variance;
    else if (!std::isfinite(report.bias_bound))
        report.mse = kInf;
    else
        report.mse = report.variance + radius * radius * report.bias_bound * report.bias_bound;
    return report;
}

}  // namespace robest
