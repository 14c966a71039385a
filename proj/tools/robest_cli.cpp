#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "robest/cli_io.hpp"
#include "robest/cniper.hpp"
#include "robest/datasets.hpp"
#include "robest/errors.hpp"
#include "robest/mc.hpp"
#include "robest/onestep.hpp"

namespace {

using namespace robest;

ParametricFamily make_family(const std::string& model) {
    if (model == "normal-loc-scale") return make_normal_loc_scale();
    if (model == "gamma") return make_gamma();
    if (model == "poisson") return make_poisson();
    throw CLI::ValidationError("--model", "unknown model: " + model);
}

Vector parse_theta(const std::string& text, int k) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) values.push_back(std::stod(tok));
    if (static_cast<int>(values.size()) != k)
        throw CLI::ValidationError("--theta", "expected " + std::to_string(k) + " components");
    Vector th(k);
    for (int i = 0; i < k; ++i) th[i] = values[i];
    return th;
}

int estimate_decimals(const std::string& model) { return model == "poisson" ? 4 : 2; }

std::string format_estimate(const Vector& v, int decimals) {
    std::ostringstream out;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) out << "  ";
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.*f", decimals, v[i]);
        out << buf;
    }
    return out.str();
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
    } else {
        std::ofstream out(out_path);
        if (!out) throw InvalidData("cannot write output file: " + out_path);
        out << text;
    }
}

struct FitOptions {
    std::string model = "normal-loc-scale";
    std::string neighbor = "c";
    double eps_lower = 0.0;
    double eps_upper = 0.0;
    std::string start = "cvm";
    std::string data;
    std::string output = "human";
    std::string out_path;
    int steps = 1;
};

void validate_eps(double lo, double up) {
    if (!(lo >= 0.0) || !(lo < up) || !(up <= 0.5))
        throw CLI::ValidationError("--eps-lower/--eps-upper",
                                   "need 0 <= eps-lower < eps-upper <= 0.5");
}

int run_fit(const FitOptions& opt) {
    validate_eps(opt.eps_lower, opt.eps_upper);
    if (opt.start == "median-mad" && opt.model != "normal-loc-scale")
        throw CLI::ValidationError("--start", "median-mad requires --model normal-loc-scale");
    ParametricFamily fam = make_family(opt.model);
    const Neighborhood nb = neighborhood_from_string(opt.neighbor);
    const Dataset data = ingest(opt.data);

    EstimationReport report;
    if (opt.steps == 1) {
        report = roptest_pipeline(fam, data, opt.eps_lower, opt.eps_upper, nb, opt.start);
    } else {
        // optional iterated correction; the default workflow takes one step
        EstimationReport base =
            roptest_pipeline(fam, data, opt.eps_lower, opt.eps_upper, nb, opt.start);
        IcSpec spec;
        spec.neighborhood = nb;
        spec.interval = RadiusInterval{std::sqrt(data.n) * opt.eps_lower,
                                       std::sqrt(data.n) * opt.eps_upper};
        report = one_step(fam, base.start, data, spec, {}, false, opt.steps);
        report.start_method = base.start_method;
    }

    if (opt.output == "json") {
        emit(format_json(report_to_json(report, opt.model, opt.eps_lower, opt.eps_upper)),
             opt.out_path);
        return 0;
    }
    if (opt.output == "csv") {
        std::ostringstream out;
        out << "key,value\n";
        out << "model," << opt.model << "\n";
        out << "neighbor," << opt.neighbor << "\n";
        for (Eigen::Index i = 0; i < report.estimate.size(); ++i)
            out << "estimate." << fam.param_names[i] << "," << std::setprecision(17)
                << report.estimate[i] << "\n";
        for (Eigen::Index i = 0; i < report.start.size(); ++i)
            out << "start." << fam.param_names[i] << "," << std::setprecision(17)
                << report.start[i] << "\n";
        out << "r0," << std::setprecision(17) << report.r0 << "\n";
        out << "b," << std::setprecision(17) << report.b << "\n";
        emit(out.str(), opt.out_path);
        return 0;
    }

    const int dec = estimate_decimals(opt.model);
    std::ostringstream out;
    out << "model: " << opt.model << "   neighborhood: " << opt.neighbor
        << "   n: " << static_cast<long>(data.n) << "\n";
    char radii[160];
    std::snprintf(radii, sizeof radii,
                  "eps: [%.3f, %.3f]   radii: r_lo = %.4f, r_up = %.4f, r0 = %.4f\n",
                  opt.eps_lower, opt.eps_upper, report.r_lo, report.r_up, report.r0);
    out << radii;
    out << "start (" << report.start_method << "): " << format_estimate(report.start, dec)
        << "\n";
    out << "rmx one-step:  " << format_estimate(report.estimate, dec) << "\n";
    char tail[160];
    std::snprintf(tail, sizeof tail, "clip b = %.4f   tr A = %.4f   shift = %.4f\n", report.b,
                  report.risk.tr_A, report.shift.norm());
    out << tail;
    if (report.approximate_tv)
        out << "note: total-variation solution approximated by the contamination solver at 2r\n";
    emit(out.str(), opt.out_path);
    return 0;
}

struct IcOptions {
    std::string model = "normal-loc-scale";
    std::string neighbor = "c";
    std::string theta;
    std::string data;
    std::string start = "cvm";
    double eps_lower = -1.0;
    double eps_upper = -1.0;
    double radius = -1.0;
    int grid = 512;
    std::string out_path;
};

int run_ic(const IcOptions& opt) {
    ParametricFamily fam = make_family(opt.model);
    const Neighborhood nb = neighborhood_from_string(opt.neighbor);

    Vector theta;
    double n_data = 0.0;
    if (!opt.theta.empty()) {
        theta = parse_theta(opt.theta, fam.k);
    } else if (!opt.data.empty()) {
        const Dataset data = ingest(opt.data);
        n_data = data.n;
        if (opt.start == "median-mad") {
            auto [mu, sigma] = median_mad(data);
            theta = Vector(2);
            theta << mu, sigma;
        } else if (opt.start == "mle") {
            theta = mle(fam, data);
        } else {
            theta = cvm_estimate(fam, data);
        }
    } else {
        throw CLI::ValidationError("--theta/--data", "need a parameter or data to fit one");
    }

    ICSolution sol;
    double r0 = std::numeric_limits<double>::quiet_NaN();
    if (opt.radius > 0.0) {
        sol = solve_ic(fam, theta, opt.radius, nb);
        r0 = opt.radius;
    } else {
        validate_eps(opt.eps_lower, opt.eps_upper);
        if (n_data <= 0.0)
            throw CLI::ValidationError("--data", "an eps interval needs data for sqrt(n)");
        RadiusInterval interval{std::sqrt(n_data) * opt.eps_lower,
                                std::sqrt(n_data) * opt.eps_upper};
        RmxResult rmx = rmx_ic(fam, theta, interval, nb);
        sol = std::move(rmx.solution);
        r0 = rmx.r0;
    }

    std::ostringstream out;
    out << std::setprecision(17);
    out << "# model = " << opt.model << ", neighbor = " << opt.neighbor << ", radius = " << r0
        << "\n";
    out << "# theta =";
    for (Eigen::Index i = 0; i < theta.size(); ++i) out << " " << theta[i];
    out << "\n# A =";
    for (Eigen::Index i = 0; i < sol.ic.A.rows(); ++i)
        for (Eigen::Index j = 0; j < sol.ic.A.cols(); ++j) out << " " << sol.ic.A(i, j);
    out << "\n# a =";
    for (Eigen::Index i = 0; i < sol.ic.a.size(); ++i) out << " " << sol.ic.a[i];
    out << "\n# b = " << sol.ic.b;
    if (std::isfinite(sol.ic.c)) out << ", c = " << sol.ic.c;
    out << "\n";
    out << "x";
    for (int j = 0; j < fam.k; ++j) out << ",psi" << (j + 1);
    out << ",weight\n";

    std::vector<double> xs;
    if (fam.support.is_lattice()) {
        auto [lo, hi] = truncated_range(fam, theta);
        for (double x = lo; x <= hi; x += 1.0) xs.push_back(x);
    } else if (opt.grid == 1) {
        xs.push_back(fam.quantile(theta, 0.5));
    } else {
        for (int i = 0; i < opt.grid; ++i)
            xs.push_back(fam.quantile(theta, 0.001 + 0.998 * i / (opt.grid - 1.0)));
    }
    for (double x : xs) {
        const Vector psi = sol.ic.eval(x);
        out << x;
        for (int j = 0; j < fam.k; ++j) out << "," << psi[j];
        out << "," << sol.ic.weight(x) << "\n";
    }
    emit(out.str(), opt.out_path);
    return 0;
}

struct CniperOptions {
    std::string model = "normal-loc-scale";
    std::string theta;
    double size = 0.0;
    double n = 0.0;
    std::string output = "human";
    std::string out_path;
};

int run_cniper(const CniperOptions& opt) {
    if (!(opt.size > 0.0) || !(opt.n >= 1.0))
        throw CLI::ValidationError("--size/--n", "need size > 0 and n >= 1");
    ParametricFamily fam = make_family(opt.model);
    Vector theta = parse_theta(opt.theta, fam.k);
    const double radius = std::sqrt(opt.n) * opt.size;
    CniperReport report = cniper_points(fam, theta, radius);

    if (opt.output == "json") {
        nlohmann::json j;
        j["model"] = opt.model;
        j["radius"] = radius;
        j["lower_point"] = report.lower_point;
        j["upper_point"] = report.upper_point;
        j["prob_ideal"] = report.prob_ideal;
        j["tr_A"] = report.tr_A;
        j["tr_I_inv"] = report.tr_I_inv;
        emit(format_json(j), opt.out_path);
        return 0;
    }
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "radius r = %.4f (size %.4g at n = %g)\n", radius,
                  opt.size, opt.n);
    out << line;
    if (report.whole_support) {
        out << "the whole support is cniper (classical MSE exceeded everywhere)\n";
    } else if (report.empty_region) {
        out << "no cniper points: the classical estimator is never beaten by a Dirac\n";
    } else {
        std::snprintf(line, sizeof line, "cniper points: %.2f and %.2f\n", report.lower_point,
                      report.upper_point);
        out << line;
        out << "region:";
        for (const auto& ray : report.region) {
            std::snprintf(line, sizeof line, " [%.2f, %.2f]", ray.lo, ray.hi);
            out << line;
        }
        out << "\n";
    }
    std::snprintf(line, sizeof line, "ideal-model probability of the region: %.2f%%\n",
                  100.0 * report.prob_ideal);
    out << line;
    std::snprintf(line, sizeof line, "tr A = %.4f, tr I^-1 = %.4f\n", report.tr_A,
                  report.tr_I_inv);
    out << line;
    emit(out.str(), opt.out_path);
    return 0;
}

struct SimulateOptions {
    std::string model = "normal-loc-scale";
    std::string theta;
    std::string neighbor = "c";
    double contamination = 0.0;
    double dirac = 0.0;
    bool has_dirac = false;
    int n = 0;
    int reps = 1000;
    std::uint64_t seed = 1;
    std::string estimators = "mle,rmx";
    double eps_lower = 0.01;
    double eps_upper = 0.05;
    std::string start = "cvm";
    std::string out_path;
};

int run_simulate(const SimulateOptions& opt) {
    ParametricFamily fam = make_family(opt.model);
    Vector theta = parse_theta(opt.theta, fam.k);
    validate_eps(opt.eps_lower, opt.eps_upper);
    const Neighborhood nb = neighborhood_from_string(opt.neighbor);

    ContaminationScenario scenario;
    scenario.family = fam;
    scenario.theta = theta;
    scenario.fraction = opt.contamination;
    if (opt.has_dirac) scenario.dirac = opt.dirac;
    scenario.n = opt.n;
    scenario.seed = opt.seed;

    std::vector<McEstimator> estimators;
    std::stringstream ss(opt.estimators);
    std::string label;
    while (std::getline(ss, label, ',')) {
        if (label == "mle" || label == "mean-sd") {
            estimators.push_back({label, [fam](const Dataset& d) { return mle(fam, d); }});
        } else if (label == "cvm") {
            estimators.push_back(
                {label, [fam](const Dataset& d) { return cvm_estimate(fam, d); }});
        } else if (label == "median-mad") {
            estimators.push_back({label, [](const Dataset& d) {
                                      auto [mu, sigma] = median_mad(d);
                                      Vector th(2);
                                      th << mu, sigma;
                                      return th;
                                  }});
        } else if (label == "rmx") {
            estimators.push_back({label, [fam, opt, nb](const Dataset& d) {
                                      return roptest_pipeline(fam, d, opt.eps_lower,
                                                              opt.eps_upper, nb, opt.start)
                                          .estimate;
                                  }});
        } else {
            throw CLI::ValidationError("--estimators", "unknown estimator: " + label);
        }
    }

    const auto rows = mc_compare(scenario, estimators, opt.reps, opt.seed);
    std::ostringstream out;
    out << "scenario: " << opt.model << " theta = " << opt.theta << ", s = " << opt.contamination;
    if (opt.has_dirac) out << ", Dirac(" << opt.dirac << ")";
    out << ", n = " << opt.n << ", reps = " << opt.reps << ", seed = " << opt.seed << "\n";
    char line[160];
    std::snprintf(line, sizeof line, "%-12s %14s %12s %10s\n", "estimator", "n*MSE",
                  "MC-stderr", "failures");
    out << line;
    for (const auto& row : rows) {
        std::snprintf(line, sizeof line, "%-12s %14.4f %12.4f %10d\n", row.label.c_str(),
                      row.n_mse, row.std_error, row.failures);
        out << line;
    }
    emit(out.str(), opt.out_path);
    return 0;
}

int dispatch_error_code(const Error& e) {
    if (dynamic_cast<const InvalidData*>(&e) || dynamic_cast<const OutOfSupport*>(&e) ||
        dynamic_cast<const DegenerateScale*>(&e))
        return 3;
    if (dynamic_cast<const InvalidParameter*>(&e) || dynamic_cast<const InvalidStart*>(&e))
        return 2;
    return 4;  // solver-side failures
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"minmax-MSE robust estimation on shrinking neighborhoods"};
    app.require_subcommand(1);

    FitOptions fit;
    auto* cmd_fit = app.add_subcommand("fit", "rmx one-step fit on a dataset");
    cmd_fit->add_option("--model", fit.model, "normal-loc-scale | gamma | poisson");
    cmd_fit->add_option("--neighbor", fit.neighbor, "c | v");
    cmd_fit->add_option("--eps-lower", fit.eps_lower)->required();
    cmd_fit->add_option("--eps-upper", fit.eps_upper)->required();
    cmd_fit->add_option("--start", fit.start, "cvm | median-mad | mle");
    cmd_fit->add_option("--data", fit.data, "CSV path or embedded:<name>")->required();
    cmd_fit->add_option("--output", fit.output, "human | json | csv");
    cmd_fit->add_option("--out", fit.out_path, "write output to a file");
    cmd_fit->add_option("--steps", fit.steps, "number of correction steps (default 1)");

    IcOptions ic;
    auto* cmd_ic = app.add_subcommand("ic", "solved influence curve on a grid (CSV)");
    cmd_ic->add_option("--model", ic.model);
    cmd_ic->add_option("--neighbor", ic.neighbor);
    cmd_ic->add_option("--theta", ic.theta, "comma-separated parameter");
    cmd_ic->add_option("--data", ic.data, "fit the parameter from data");
    cmd_ic->add_option("--start", ic.start);
    cmd_ic->add_option("--eps-lower", ic.eps_lower);
    cmd_ic->add_option("--eps-upper", ic.eps_upper);
    cmd_ic->add_option("--radius", ic.radius, "fixed radius instead of an interval");
    cmd_ic->add_option("--grid", ic.grid, "grid size (continuous families)");
    cmd_ic->add_option("--out", ic.out_path);

    CniperOptions cniper;
    auto* cmd_cniper = app.add_subcommand("cniper", "cniper points and region probability");
    cmd_cniper->add_option("--model", cniper.model);
    cmd_cniper->add_option("--theta", cniper.theta)->required();
    cmd_cniper->add_option("--size", cniper.size, "contamination size s")->required();
    cmd_cniper->add_option("--n", cniper.n, "sample size")->required();
    cmd_cniper->add_option("--output", cniper.output);
    cmd_cniper->add_option("--out", cniper.out_path);

    SimulateOptions sim;
    auto* cmd_sim = app.add_subcommand("simulate", "Monte Carlo estimator comparison");
    cmd_sim->add_option("--model", sim.model);
    cmd_sim->add_option("--theta", sim.theta)->required();
    cmd_sim->add_option("--neighbor", sim.neighbor);
    cmd_sim->add_option("--contamination", sim.contamination, "fraction s");
    auto* dirac_opt = cmd_sim->add_option("--dirac", sim.dirac, "Dirac contaminant point");
    cmd_sim->add_option("--n", sim.n)->required();
    cmd_sim->add_option("--reps", sim.reps);
    cmd_sim->add_option("--seed", sim.seed);
    cmd_sim->add_option("--estimators", sim.estimators, "comma list: mle,cvm,median-mad,rmx");
    cmd_sim->add_option("--eps-lower", sim.eps_lower, "rmx radius interval");
    cmd_sim->add_option("--eps-upper", sim.eps_upper);
    cmd_sim->add_option("--start", sim.start, "start estimator used inside rmx");
    cmd_sim->add_option("--out", sim.out_path);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(cmd_fit)) return run_fit(fit);
        if (app.got_subcommand(cmd_ic)) return run_ic(ic);
        if (app.got_subcommand(cmd_cniper)) return run_cniper(cniper);
        if (app.got_subcommand(cmd_sim)) {
            sim.has_dirac = dirac_opt->count() > 0;
            return run_simulate(sim);
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return dispatch_error_code(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
