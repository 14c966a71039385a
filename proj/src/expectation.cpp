#include "robest/expectation.hpp"

#include <algorithm>
#include <cmath>

#include "robest/errors.hpp"

namespace robest {

namespace {

struct GaussLegendre {
    std::array<double, 20> x;  // nodes on (-1, 1)
    std::array<double, 20> w;
};

// order-20 rule computed once by Newton iteration on the Legendre polynomial
const GaussLegendre& gl20() {
    static const GaussLegendre rule = [] {
        GaussLegendre r{};
        const int n = 20;
        for (int i = 0; i < n; ++i) {
            double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = x;
                for (int j = 2; j <= n; ++j) {
                    double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                double dx = p1 / dp;
                x -= dx;
                if (std::fabs(dx) < 1e-16) break;
            }
            r.x[i] = x;
            r.w[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        return r;
    }();
    return rule;
}

using WeightedIntegrand = std::function<Vector(double)>;  // integrand times density

struct AdaptiveState {
    long nodes = 0;
    long max_nodes = 0;
};

Vector panel_gl20(const WeightedIntegrand& g, double a, double b, AdaptiveState& st) {
    const auto& rule = gl20();
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    Vector acc = half * rule.w[0] * g(mid + half * rule.x[0]);
    for (int i = 1; i < 20; ++i) acc += half * rule.w[i] * g(mid + half * rule.x[i]);
    st.nodes += 20;
    return acc;
}

Vector refine(const WeightedIntegrand& g, double a, double b, const Vector& whole,
              double tol, double width_floor, AdaptiveState& st) {
    const double m = 0.5 * (a + b);
    Vector left = panel_gl20(g, a, m, st);
    Vector right = panel_gl20(g, m, b, st);
    const double err = (whole - left - right).cwiseAbs().maxCoeff();
    if (err <= tol || (b - a) <= width_floor) return left + right;
    if (st.nodes > st.max_nodes)
        throw QuadratureFailure("expect: node budget exhausted before convergence",
                                whole.cwiseAbs().maxCoeff(),
                                (left + right).cwiseAbs().maxCoeff());
    return refine(g, a, m, left, 0.5 * tol, width_floor, st) +
           refine(g, m, b, right, 0.5 * tol, width_floor, st);
}

Vector integrate_segments(const WeightedIntegrand& g, const std::vector<double>& edges,
                          const ExpectationConfig& cfg) {
    AdaptiveState st;
    st.max_nodes = cfg.max_nodes;
    const double total = edges.back() - edges.front();
    std::vector<Vector> first_pass;
    first_pass.reserve(edges.size() - 1);
    Vector rough;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        Vector est = panel_gl20(g, edges[i], edges[i + 1], st);
        if (i == 0)
            rough = est;
        else
            rough += est;
        first_pass.push_back(std::move(est));
    }
    const double tol_total =
        std::max(cfg.abs_tol, cfg.rel_tol * rough.cwiseAbs().maxCoeff());
    const double n_segments = static_cast<double>(edges.size() - 1);
    Vector result = Vector::Zero(rough.size());
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        const double a = edges[i], b = edges[i + 1];
        // width-proportional budget with a floor so that narrow seed panels
        // near a support endpoint are not driven to unreachable precision
        const double tol_seg =
            tol_total * std::max((b - a) / total, 0.25 / n_segments);
        const double width_floor = (b - a) * std::ldexp(1.0, -46);
        result += refine(g, a, b, first_pass[i], tol_seg, width_floor, st);
    }
    return result;
}

// lattice summation from the lower support end, omitted mass below lattice_tail
Vector lattice_sum(const ParametricFamily& fam, const Vector& theta,
                   const std::function<Vector(double)>& f, const ExpectationConfig& cfg) {
    double x = fam.support.lower;
    double mass = 0.0;
    Vector acc;
    long terms = 0;
    while (true) {
        const double p = fam.density(theta, x);
        Vector term = f(x) * p;
        if (terms == 0)
            acc = term;
        else
            acc += term;
        mass += p;
        ++terms;
        if (1.0 - mass < cfg.lattice_tail) break;
        if (terms > cfg.max_nodes)
            throw QuadratureFailure("expect: lattice summation exceeded node cap",
                                    mass, mass);
        x += 1.0;
    }
    return acc;
}

double lattice_cutoff(const ParametricFamily& fam, const Vector& theta,
                      const ExpectationConfig& cfg) {
    double x = fam.support.lower;
    double mass = 0.0;
    long terms = 0;
    while (true) {
        mass += fam.density(theta, x);
        ++terms;
        if (1.0 - mass < cfg.lattice_tail) return x;
        if (terms > cfg.max_nodes)
            throw QuadratureFailure("lattice cutoff: exceeded node cap", mass, mass);
        x += 1.0;
    }
}

// geometric edges toward a finite lower support endpoint; a truncated range
// can span many decades when the density is singular there (gamma with shape
// below one), and uniform panels cannot resolve that
std::vector<double> lower_endpoint_edges(const Support& support, double lo, double hi) {
    std::vector<double> edges;
    if (!std::isfinite(support.lower)) return edges;
    const double offset = lo - support.lower;
    if (!(offset > 0.0) || offset > (hi - lo) / 64.0) return edges;
    for (double step = 2.0 * offset; step < (hi - lo) / 8.0; step *= 2.0)
        edges.push_back(support.lower + step);
    return edges;
}

std::vector<double> scan_grid(double lo, double hi, int n_uniform) {
    std::vector<double> grid;
    grid.reserve(n_uniform + 2 * 48);
    for (int i = 0; i <= n_uniform; ++i)
        grid.push_back(lo + (hi - lo) * i / n_uniform);
    // extra geometric points toward both endpoints; catches structure that a
    // uniform grid misses near a finite support boundary
    for (int i = 1; i <= 48; ++i) {
        const double frac = std::pow(0.5, 1.0 + 0.5 * i);
        grid.push_back(lo + (hi - lo) * frac / n_uniform);
        grid.push_back(hi - (hi - lo) * frac / n_uniform);
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return grid;
}

}  // namespace

void ExpectationConfig::validate() const {
    if (!(abs_tol > 0.0) || !(rel_tol > 0.0) || !(continuous_range > 0.0) ||
        !(lattice_tail > 0.0))
        throw Error("ExpectationConfig: tolerances must be positive");
    if (max_nodes < 64) throw Error("ExpectationConfig: max_nodes must be >= 64");
}

std::pair<double, double> truncated_range(const ParametricFamily& fam, const Vector& theta,
                                          const ExpectationConfig& cfg) {
    fam.require_valid(theta);
    if (fam.support.is_lattice())
        return {fam.support.lower, lattice_cutoff(fam, theta, cfg)};
    const double lo = fam.quantile(theta, cfg.continuous_range);
    const double hi = fam.quantile(theta, 1.0 - cfg.continuous_range);
    return {lo, hi};
}

Vector expect_with_breaks(const ParametricFamily& fam, const Vector& theta,
                          const std::function<Vector(double)>& f,
                          const std::vector<double>& breaks,
                          const ExpectationConfig& cfg) {
    cfg.validate();
    fam.require_valid(theta);
    if (fam.support.is_lattice()) return lattice_sum(fam, theta, f, cfg);
    auto [lo, hi] = truncated_range(fam, theta, cfg);
    std::vector<double> edges;
    edges.push_back(lo);
    for (double b : breaks)
        if (b > lo && b < hi) edges.push_back(b);
    for (double e : lower_endpoint_edges(fam.support, lo, hi)) edges.push_back(e);
    edges.push_back(hi);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    WeightedIntegrand g = [&](double x) -> Vector { return f(x) * fam.density(theta, x); };
    return integrate_segments(g, edges, cfg);
}

Vector expect(const ParametricFamily& fam, const Vector& theta,
              const std::function<Vector(double)>& f, const ExpectationConfig& cfg) {
    return expect_with_breaks(fam, theta, f, {}, cfg);
}

double expect_scalar(const ParametricFamily& fam, const Vector& theta,
                     const std::function<double(double)>& f, const ExpectationConfig& cfg) {
    Vector r = expect(fam, theta, [&f](double x) { return Vector::Constant(1, f(x)); }, cfg);
    return r[0];
}

std::vector<double> sign_changes(const ParametricFamily& fam, const Vector& theta,
                                 const std::function<double(double)>& g,
                                 const ExpectationConfig& cfg) {
    fam.require_valid(theta);
    if (fam.support.is_lattice()) return {};
    auto [lo, hi] = truncated_range(fam, theta, cfg);
    const auto grid = scan_grid(lo, hi, 1024);
    std::vector<double> roots;
    double prev_x = grid.front();
    double prev_g = g(prev_x);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double x = grid[i];
        const double gx = g(x);
        if ((prev_g < 0.0 && gx >= 0.0) || (prev_g >= 0.0 && gx < 0.0)) {
            double a = prev_x, b = x, ga = prev_g;
            for (int it = 0; it < 80; ++it) {
                const double m = 0.5 * (a + b);
                const double gm = g(m);
                if ((ga < 0.0) == (gm < 0.0)) {
                    a = m;
                    ga = gm;
                } else {
                    b = m;
                }
            }
            roots.push_back(0.5 * (a + b));
        }
        prev_x = x;
        prev_g = gx;
    }
    return roots;
}

double expect_pos_part(const ParametricFamily& fam, const Vector& theta,
                       const std::function<double(double)>& g, const ExpectationConfig& cfg) {
    fam.require_valid(theta);
    auto clamped = [&g](double x) {
        return Vector::Constant(1, std::max(g(x), 0.0));
    };
    if (fam.support.is_lattice()) {
        cfg.validate();
        return lattice_sum(fam, theta, clamped, cfg)[0];
    }
    const auto breaks = sign_changes(fam, theta, g, cfg);
    return expect_with_breaks(fam, theta, clamped, breaks, cfg)[0];
}

namespace {

// golden-section maximization of a scalar function on [a, b]
double golden_max(const std::function<double(double)>& h, double a, double b) {
    const double invphi = 0.6180339887498949;
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = h(x1), f2 = h(x2);
    for (int it = 0; it < 90 && (b - a) > 1e-13 * (1.0 + std::fabs(a) + std::fabs(b)); ++it) {
        if (f1 < f2) {
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
    return std::max(f1, f2);
}

double extremum_scan(const ParametricFamily& fam, const Vector& theta,
                     const std::function<double(double)>& h, const ExpectationConfig& cfg) {
    fam.require_valid(theta);
    if (fam.support.is_lattice()) {
        const double cut = lattice_cutoff(fam, theta, cfg);
        double best = h(fam.support.lower);
        for (double x = fam.support.lower + 1.0; x <= cut; x += 1.0)
            best = std::max(best, h(x));
        return best;
    }
    const double eps = cfg.continuous_range;
    const int n = 4096;
    std::vector<double> xs(n), vals(n);
    for (int i = 0; i < n; ++i) {
        const double p = eps + (1.0 - 2.0 * eps) * i / (n - 1.0);
        xs[i] = fam.quantile(theta, p);
        vals[i] = h(xs[i]);
    }
    // indices of local grid maxima, best first
    std::vector<int> peaks;
    for (int i = 0; i < n; ++i) {
        const bool up = (i == 0) || vals[i] >= vals[i - 1];
        const bool down = (i == n - 1) || vals[i] >= vals[i + 1];
        if (up && down) peaks.push_back(i);
    }
    std::sort(peaks.begin(), peaks.end(),
              [&vals](int a, int b) { return vals[a] > vals[b]; });
    if (peaks.size() > 8) peaks.resize(8);
    double best = *std::max_element(vals.begin(), vals.end());
    for (int i : peaks) {
        const double a = xs[std::max(0, i - 1)];
        const double b = xs[std::min(n - 1, i + 1)];
        best = std::max(best, golden_max(h, a, b));
    }
    return best;
}

}  // namespace

double sup_abs(const ParametricFamily& fam, const Vector& theta,
               const std::function<Vector(double)>& f, const ExpectationConfig& cfg) {
    return extremum_scan(fam, theta, [&f](double x) { return f(x).norm(); }, cfg);
}

double sup_value(const ParametricFamily& fam, const Vector& theta,
                 const std::function<double(double)>& f, const ExpectationConfig& cfg) {
    return extremum_scan(fam, theta, f, cfg);
}

double inf_value(const ParametricFamily& fam, const Vector& theta,
                 const std::function<double(double)>& f, const ExpectationConfig& cfg) {
    return -extremum_scan(fam, theta, [&f](double x) { return -f(x); }, cfg);
}

QuadratureRule probability_rule(const ParametricFamily& fam, const Vector& theta,
                                const ExpectationConfig& cfg) {
    cfg.validate();
    fam.require_valid(theta);
    QuadratureRule rule;
    if (fam.support.is_lattice()) {
        rule.lattice = true;
        const double cut = lattice_cutoff(fam, theta, cfg);
        const long n = static_cast<long>(cut - fam.support.lower) + 1;
        rule.x.resize(n);
        rule.w.resize(n);
        for (long i = 0; i < n; ++i) {
            rule.x[i] = fam.support.lower + i;
            rule.w[i] = fam.density(theta, rule.x[i]);
        }
        return rule;
    }
    auto [lo, hi] = truncated_range(fam, theta, cfg);
    // base panels, then adaptive refinement on the probability mass so panels
    // concentrate where the density does
    struct Panel {
        double a, b, mass;
    };
    const auto& g = gl20();
    auto panel_mass = [&](double a, double b) {
        const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
        double m = 0.0;
        for (int i = 0; i < 20; ++i) m += half * g.w[i] * fam.density(theta, mid + half * g.x[i]);
        return m;
    };
    std::vector<Panel> stack, done;
    std::vector<double> seeds;
    const int base = 128;
    for (int i = 0; i <= base; ++i) seeds.push_back(lo + (hi - lo) * i / base);
    for (double e : lower_endpoint_edges(fam.support, lo, hi)) seeds.push_back(e);
    std::sort(seeds.begin(), seeds.end());
    seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
    for (std::size_t i = 0; i + 1 < seeds.size(); ++i)
        stack.push_back({seeds[i], seeds[i + 1], panel_mass(seeds[i], seeds[i + 1])});
    while (!stack.empty()) {
        Panel p = stack.back();
        stack.pop_back();
        const double m = 0.5 * (p.a + p.b);
        const double ml = panel_mass(p.a, m), mr = panel_mass(m, p.b);
        if (std::fabs(p.mass - ml - mr) <= 1e-12 * std::max(1.0, std::fabs(p.mass)) ||
            (p.b - p.a) < (hi - lo) * 1e-9) {
            done.push_back({p.a, m, ml});
            done.push_back({m, p.b, mr});
        } else {
            stack.push_back({p.a, m, ml});
            stack.push_back({m, p.b, mr});
        }
        if (done.size() + stack.size() > 20000)
            throw QuadratureFailure("probability_rule: refinement exploded", 0.0, 0.0);
    }
    std::sort(done.begin(), done.end(), [](const Panel& p, const Panel& q) { return p.a < q.a; });
    rule.x.resize(static_cast<long>(done.size()) * 20);
    rule.w.resize(rule.x.size());
    long idx = 0;
    for (const Panel& p : done) {
        const double mid = 0.5 * (p.a + p.b), half = 0.5 * (p.b - p.a);
        for (int i = 0; i < 20; ++i, ++idx) {
            rule.x[idx] = mid + half * g.x[i];
            rule.w[idx] = half * g.w[i] * fam.density(theta, rule.x[idx]);
        }
    }
    return rule;
}

}  // namespace robest
