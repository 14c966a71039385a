#include "robest/detail/optim.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace robest::detail {

NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0,
                             const NelderMeadConfig& cfg) {
    const int n = static_cast<int>(x0.size());
    const double alpha = 1.0, gamma = 2.0, rho = 0.5, shrink = 0.5;

    std::vector<Vector> xs(n + 1, x0);
    std::vector<double> fs(n + 1);
    for (int i = 0; i < n; ++i) {
        double step = 0.05 * std::fabs(x0[i]) + 0.05;
        xs[i + 1][i] += step;
    }
    for (int i = 0; i <= n; ++i) fs[i] = f(xs[i]);

    NelderMeadResult result;
    std::vector<int> order(n + 1);
    for (int it = 0; it < cfg.max_iter; ++it) {
        for (int i = 0; i <= n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&fs](int a, int b) { return fs[a] < fs[b]; });
        const int best = order[0], worst = order[n], second = order[n - 1];

        double spread = 0.0;
        for (int i = 1; i <= n; ++i)
            spread = std::max(spread, (xs[order[i]] - xs[best]).cwiseAbs().maxCoeff());
        if (spread < cfg.x_tol && std::fabs(fs[worst] - fs[best]) < cfg.f_tol) {
            result.converged = true;
            result.iterations = it;
            break;
        }

        Vector centroid = Vector::Zero(n);
        for (int i = 0; i <= n; ++i)
            if (i != worst) centroid += xs[i];
        centroid /= n;

        Vector xr = centroid + alpha * (centroid - xs[worst]);
        double fr = f(xr);
        if (fr < fs[best]) {
            Vector xe = centroid + gamma * (centroid - xs[worst]);
            double fe = f(xe);
            if (fe < fr) {
                xs[worst] = xe;
                fs[worst] = fe;
            } else {
                xs[worst] = xr;
                fs[worst] = fr;
            }
        } else if (fr < fs[second]) {
            xs[worst] = xr;
            fs[worst] = fr;
        } else {
            Vector xc = centroid + rho * (xs[worst] - centroid);
            double fc = f(xc);
            if (fc < fs[worst]) {
                xs[worst] = xc;
                fs[worst] = fc;
            } else {
                for (int i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    xs[i] = xs[best] + shrink * (xs[i] - xs[best]);
                    fs[i] = f(xs[i]);
                }
            }
        }
        result.iterations = it + 1;
    }

    int best = 0;
    for (int i = 1; i <= n; ++i)
        if (fs[i] < fs[best]) best = i;
    result.x = xs[best];
    result.value = fs[best];
    return result;
}

}  // namespace robest::detail
