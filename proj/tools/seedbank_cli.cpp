// Command-line front end: figure data as CSV, single results as JSON.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "seedbank/branching_phase.hpp"
#include "seedbank/core_model.hpp"
#include "seedbank/diffusion_limits.hpp"
#include "seedbank/manifold_reduction.hpp"
#include "seedbank/seedbank_flows.hpp"
#include "seedbank/wf_simulators.hpp"

namespace {

using namespace seedbank;
using Params = std::vector<std::pair<std::string, std::string>>;

constexpr const char* kVersion = "0.1.0";
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

std::string num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

std::string join(const std::vector<double>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + num(xs[i]);
    return s;
}

struct Common {
    std::string out;
    std::uint64_t seed = 1;
    int threads = 1;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--out", c.out, "output file (default stdout)");
    sub->add_option("--seed", c.seed, "master seed");
    sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
}

/// Buffers a command's output so that a failure part-way leaves nothing behind.
class Sink {
public:
    explicit Sink(std::string path) : path_(std::move(path)) {}
    std::ostream& os() { return buf_; }

    void commit() {
        if (path_.empty()) {
            std::cout << buf_.str();
            return;
        }
        std::ofstream file(path_);
        if (!file) throw Error(ErrorCode::InvalidArgument, "cannot open " + path_);
        file << buf_.str();
    }

private:
    std::string path_;
    std::ostringstream buf_;
};

/// "# seedbank_cli <version> | <subcommand> --k v ..." followed by the column names.
void csv_header(std::ostream& os, const std::string& cmd, const Params& p, const Common& c,
                const std::string& columns) {
    os << "# seedbank_cli " << kVersion << " | " << cmd;
    for (const auto& [k, v] : p) os << " --" << k << ' ' << v;
    os << " --seed " << c.seed << '\n' << columns << '\n';
}

/// Two-point law b_0 = 1 - B/K, b_K = B/K with the smallest K keeping b_0 >= 0.05.
GerminationDistribution with_mean_time(double mean_time) {
    if (!(mean_time >= 0.0)) throw Error(ErrorCode::InvalidArgument, "B must be non-negative");
    const int k = std::max(1, static_cast<int>(std::ceil(mean_time / 0.95)));
    std::vector<double> b(static_cast<std::size_t>(k) + 1, 0.0);
    b[0] = 1.0 - mean_time / k;
    b[static_cast<std::size_t>(k)] = mean_time / k;
    return GerminationDistribution::from(b);
}

double constant_fixation(const GerminationDistribution& d, double start) {
    const SdeSpec s = sde_constant(d);
    return scale_fixation([&](double x) { return s.drift(Vec::Constant(1, x), 0.0)[0]; },
                          [&](double x) { return s.diffusion(Vec::Constant(1, x), 0.0)(0, 0); }, start);
}

void cmd_psi_curve(const std::vector<double>& bs, double ymax, int steps, const Common& c) {
    if (!(ymax > 0.0 && ymax <= 1.0)) throw Error(ErrorCode::InvalidArgument, "ymax must lie in (0, 1]");
    Sink sink(c.out);
    auto& os = sink.os();
    csv_header(os, "psi-curve", {{"B", join(bs)}, {"ymax", num(ymax)}, {"steps", std::to_string(steps)}}, c,
               "B,y,psi");
    for (double bm : bs)
        for (int i = 0; i <= steps; ++i) {
            const double y = ymax * i / steps;
            os << num(bm) << ',' << num(y) << ',' << num(psi(bm, y)) << '\n';
        }
    sink.commit();
}

void cmd_drift_surface(const std::string& b, int grid, const Common& c) {
    Sink sink(c.out);
    auto& os = sink.os();
    if (!b.empty()) {
        const GerminationDistribution d = parse_distribution(b);
        const ScalarFn phi2 = drift_function(d);
        csv_header(os, "drift-surface", {{"b", b}, {"grid", std::to_string(grid)}}, c, "x0,drift,bound");
        for (int i = 0; i <= grid; ++i) {
            const double x = static_cast<double>(i) / grid;
            os << num(x) << ',' << num(phi2(x)) << ',' << num(drift_bound(d.mean_time(), x)) << '\n';
        }
        sink.commit();
        return;
    }
    csv_header(os, "drift-surface", {{"grid", std::to_string(grid)}}, c, "b0,x0,B,drift,bound");
    for (int i = 1; i <= grid; ++i) {
        const double b0 = static_cast<double>(i) / grid;
        for (int j = 0; j <= grid; ++j) {
            const double x = static_cast<double>(j) / grid;
            os << num(b0) << ',' << num(x) << ',' << num(1.0 - b0) << ',' << num(drift_k1_closed(b0, x)) << ','
               << num(drift_bound(1.0 - b0, x)) << '\n';
        }
    }
    sink.commit();
}

void cmd_fixation_heatmap(int k, int grid, double y, const Common& c) {
    if (k != 2) throw Error(ErrorCode::UnsupportedK, "fixation-heatmap covers K = 2");
    if (grid < 2) throw Error(ErrorCode::InvalidArgument, "grid must be at least 2");
    Sink sink(c.out);
    auto& os = sink.os();
    csv_header(os, "fixation-heatmap", {{"k", "2"}, {"grid", std::to_string(grid)}, {"y", num(y)}}, c,
               "b0,b1_share,B,start,fixation,psi_cap,difference");
    for (int i = 1; i <= grid; ++i) {
        const double b0 = static_cast<double>(i) / grid;
        for (int j = 0; j <= grid; ++j) {
            const double share = static_cast<double>(j) / grid;
            const GerminationDistribution d =
                GerminationDistribution::from({b0, share * (1.0 - b0), (1.0 - share) * (1.0 - b0)});
            const double bm = d.mean_time();
            const double start = psi(bm, y);
            const double fix = constant_fixation(d, start);
            const double cap = psi_cap(bm, y);
            os << num(b0) << ',' << num(share) << ',' << num(bm) << ',' << num(start) << ',' << num(fix) << ','
               << num(cap) << ',' << num(cap - fix) << '\n';
        }
    }
    sink.commit();
}

void cmd_fixation_vs_b0(const std::vector<double>& xi_inf, double r, int points, double y, const Common& c) {
    if (points < 2) throw Error(ErrorCode::InvalidArgument, "points must be at least 2");
    Sink sink(c.out);
    auto& os = sink.os();
    csv_header(os, "fixation-vs-b0",
               {{"xi-inf", join(xi_inf)}, {"r", num(r)}, {"points", std::to_string(points)}, {"y", num(y)}}, c,
               "xi_inf,b0,B,start,fixation");
    for (double xi : xi_inf)
        for (int i = 1; i <= points; ++i) {
            const double b0 = static_cast<double>(i) / points;
            const GerminationDistribution d = GerminationDistribution::from({b0, 1.0 - b0});
            const double start = psi(d.mean_time(), y);
            const double fix = kolmogorov_fixation(d, Logistic{r, xi, 1.0}, start);
            os << num(xi) << ',' << num(b0) << ',' << num(d.mean_time()) << ',' << num(start) << ',' << num(fix)
               << '\n';
        }
    sink.commit();
}

void cmd_g_plot(const std::vector<double>& xis, const std::vector<double>& bs, int points, const Common& c) {
    if (points < 2) throw Error(ErrorCode::InvalidArgument, "points must be at least 2");
    Sink sink(c.out);
    auto& os = sink.os();
    csv_header(os, "g-plot", {{"xi", join(xis)}, {"B", join(bs)}, {"points", std::to_string(points)}}, c,
               "xi,B,K,rho,g,g_bound");
    for (double bm : bs) {
        const GerminationDistribution d = with_mean_time(bm);
        for (double xi : xis)
            for (int i = 0; i < points; ++i) {
                const double rho = static_cast<double>(i) / (points - 1);
                os << num(xi) << ',' << num(bm) << ',' << d.k() << ',' << num(rho) << ','
                   << num(g_function(d, rho, xi)) << ',' << num(g_upper_bound(bm, rho, xi)) << '\n';
            }
    }
    sink.commit();
}

void cmd_h_contour(int grid, const Common& c) {
    if (grid < 2) throw Error(ErrorCode::InvalidArgument, "grid must be at least 2");
    Sink sink(c.out);
    auto& os = sink.os();
    csv_header(os, "h-contour", {{"grid", std::to_string(grid)}}, c, "x0,b0,h,h_as_printed");
    for (int i = 0; i < grid; ++i) {
        const double x = static_cast<double>(i) / (grid - 1);
        for (int j = 0; j < grid; ++j) {
            const double b0 = static_cast<double>(j) / (grid - 1);
            os << num(x) << ',' << num(b0) << ',' << num(h_function(x, b0)) << ','
               << num(h_function_as_printed(x, b0)) << '\n';
        }
    }
    sink.commit();
}

struct McArgs {
    std::string regime = "constant";
    std::string b = "0.5,0.5";
    long n = 300;
    double start = 0.2;
    long replicates = 20000;
    long max_generations = 1000000;
    double xi_inf = 1.0;
    double r = 20.0;
    double p = 0.0;
    double s = 1.0;
};

void cmd_mc_compare(const McArgs& a, const Common& c) {
    const GerminationDistribution d = parse_distribution(a.b);
    RegimeConfig cfg;
    std::optional<double> prediction;
    std::string method;
    if (a.regime == "constant") {
        prediction = constant_fixation(d, a.start);
        method = "scale_function";
    } else if (a.regime == "slow") {
        cfg.regime = Regime::Slow;
        const double lo = 0.5 * std::min(1.0, a.xi_inf), hi = 2.0 * std::max(1.0, a.xi_inf);
        cfg.env = make_logistic_env(a.r, a.xi_inf, lo, hi, a.n);
        prediction = kolmogorov_fixation(d, Logistic{a.r, a.xi_inf, 1.0}, a.start);
        method = "backward_kolmogorov";
    } else if (a.regime == "fast") {
        cfg.regime = Regime::Fast;
        cfg.fast = FastEnvSpec{a.p, a.s};
        if (d.k() == 1) {
            const SdeSpec s = sde_fast_env(d, cfg.fast);
            prediction = scale_fixation([&](double x) { return s.drift(Vec::Constant(1, x), 0.0)[0]; },
                                        [&](double x) { return s.diffusion(Vec::Constant(1, x), 0.0)(0, 0); }, a.start);
            method = "scale_function";
        }
    } else {
        throw Error(ErrorCode::InvalidArgument, "regime must be constant, slow or fast");
    }

    RunOptions opt;
    opt.replicates = a.replicates;
    opt.max_generations = a.max_generations;
    opt.seed = c.seed;
    opt.threads = c.threads;
    const FixationEstimate e = run_fixation(cfg, d, a.n, a.start, opt);

    nlohmann::json j;
    j["tool"] = std::string("seedbank_cli ") + kVersion;
    j["params"] = {{"regime", a.regime},   {"b", a.b},         {"N", a.n},
                   {"start", a.start},     {"replicates", a.replicates},
                   {"max_generations", a.max_generations}, {"xi_inf", a.xi_inf},
                   {"r", a.r},             {"p", a.p},         {"s", a.s}};
    j["estimate"] = {{"p_hat", e.p_hat()}, {"std_err", e.std_err()},   {"replicates", e.replicates()},
                     {"fixed", e.fixed},   {"lost", e.lost},           {"censored", e.censored},
                     {"master_seed", e.master_seed}};
    if (prediction) {
        j["prediction"] = {{"value", *prediction}, {"method", method}};
        j["z_score"] = e.std_err() > 0.0 ? (e.p_hat() - *prediction) / e.std_err() : 0.0;
    } else {
        j["prediction"] = nullptr;
    }
    Sink sink(c.out);
    sink.os() << j.dump(2) << '\n';
    sink.commit();
}

std::vector<double> to_vector(const Vec& v) { return {v.data(), v.data() + v.size()}; }

nlohmann::json to_json(const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_vector(m.row(i).transpose()));
    return rows;
}

void cmd_reduce(const std::string& flow, const std::string& b, double x0, const Common& c) {
    const GerminationDistribution d = parse_distribution(b);
    FlowTag tag;
    if (flow == "constant") tag = FlowTag::Constant;
    else if (flow == "linearized") tag = FlowTag::Linearized;
    else if (flow == "fast") tag = FlowTag::FastEnv;
    else throw Error(ErrorCode::InvalidArgument, "flow must be constant, linearized or fast");
    const FlowKind kind{tag, d, std::nullopt};
    const ReductionResult r = reduce(build_flow(kind), diagonal_chart(kind.dim(), d.k() + 1), x0,
                                     [kind](double x) { return eigvecs_on_gamma(kind, x).v; });
    nlohmann::json j;
    j["tool"] = std::string("seedbank_cli ") + kVersion;
    j["params"] = {{"flow", flow}, {"b", b}, {"x0", x0}};
    j["point"] = to_vector(r.point);
    j["u"] = to_vector(r.u);
    j["v"] = to_vector(r.v);
    j["theta"] = to_json(r.theta);
    j["phi0_grad"] = to_vector(r.phi0_grad);
    j["phi0_hess"] = to_json(r.phi0_hess);
    j["drift_second_derivative"] = r.phi0_hess(0, 0);
    nlohmann::json spec = nlohmann::json::array();
    for (Eigen::Index i = 0; i < r.spectrum.size(); ++i) spec.push_back({r.spectrum[i].real(), r.spectrum[i].imag()});
    j["spectrum"] = spec;
    Sink sink(c.out);
    sink.os() << j.dump(2) << '\n';
    sink.commit();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Seed-bank fixation and diffusion-limit toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));
    Common common;

    std::vector<double> psi_b{0.0, 0.1, 0.5, 1.0, 2.0};
    double psi_ymax = 1.0;
    int psi_steps = 200;
    auto* psi_cmd = app.add_subcommand("psi-curve", "psi_B(y) on [0, 1] for several B");
    psi_cmd->add_option("--B", psi_b, "mean germination times")->delimiter(',');
    psi_cmd->add_option("--ymax", psi_ymax, "upper end of the y range");
    psi_cmd->add_option("--steps", psi_steps, "intervals on [0, ymax]")->check(CLI::Range(1, 100000));
    add_common(psi_cmd, common);

    std::string drift_b;
    int drift_grid = 50;
    auto* drift_cmd = app.add_subcommand("drift-surface", "d2 Phi_0 / dx0^2 over x0 (and b0 for K = 1)");
    drift_cmd->add_option("--b", drift_b, "distribution b0,...,bK; omit for the K = 1 surface");
    drift_cmd->add_option("--grid", drift_grid)->check(CLI::Range(2, 10000));
    add_common(drift_cmd, common);

    int heat_k = 2, heat_grid = 50;
    double heat_y = 0.01;
    auto* heat_cmd = app.add_subcommand("fixation-heatmap", "K = 2 fixation, Psi bound and difference");
    heat_cmd->add_option("--k", heat_k);
    heat_cmd->add_option("--grid", heat_grid)->check(CLI::Range(2, 1000));
    heat_cmd->add_option("--y", heat_y, "branching-phase level");
    add_common(heat_cmd, common);

    std::vector<double> fvb_xi{0.7, 0.8, 0.9, 1.0, 1.1, 1.2};
    double fvb_r = 20.0, fvb_y = 0.01;
    int fvb_points = 50;
    auto* fvb_cmd = app.add_subcommand("fixation-vs-b0", "logistic environment, K = 1");
    fvb_cmd->add_option("--xi-inf", fvb_xi)->delimiter(',');
    fvb_cmd->add_option("--r", fvb_r);
    fvb_cmd->add_option("--points", fvb_points)->check(CLI::Range(2, 10000));
    fvb_cmd->add_option("--y", fvb_y);
    add_common(fvb_cmd, common);

    std::vector<double> g_xi{0.8, 1.2}, g_b{0.1, 0.5, 1.0};
    int g_points = 101;
    auto* g_cmd = app.add_subcommand("g-plot", "noise-induced drift factor g");
    g_cmd->add_option("--xi", g_xi)->delimiter(',');
    g_cmd->add_option("--B", g_b)->delimiter(',');
    g_cmd->add_option("--points", g_points)->check(CLI::Range(2, 100000));
    add_common(g_cmd, common);

    int h_grid = 101;
    auto* h_cmd = app.add_subcommand("h-contour", "fast-environment factor h(x0, b0)");
    h_cmd->add_option("--grid", h_grid)->check(CLI::Range(2, 10000));
    add_common(h_cmd, common);

    McArgs mc;
    auto* mc_cmd = app.add_subcommand("mc-compare", "discrete Monte Carlo against the diffusion prediction");
    mc_cmd->add_option("--regime", mc.regime)->check(CLI::IsMember({"constant", "slow", "fast"}));
    mc_cmd->add_option("--b", mc.b);
    mc_cmd->add_option("--N", mc.n)->check(CLI::PositiveNumber);
    mc_cmd->add_option("--start", mc.start)->check(CLI::Range(0.0, 1.0));
    mc_cmd->add_option("--replicates", mc.replicates)->check(CLI::PositiveNumber);
    mc_cmd->add_option("--max-generations", mc.max_generations)->check(CLI::PositiveNumber);
    mc_cmd->add_option("--xi-inf", mc.xi_inf);
    mc_cmd->add_option("--r", mc.r);
    mc_cmd->add_option("--p", mc.p);
    mc_cmd->add_option("--s", mc.s);
    add_common(mc_cmd, common);

    std::string red_flow = "constant", red_b = "0.5,0.5";
    double red_x0 = 0.5;
    auto* red_cmd = app.add_subcommand("reduce", "manifold reduction at a point of the diagonal");
    red_cmd->add_option("--flow", red_flow)->check(CLI::IsMember({"constant", "linearized", "fast"}));
    red_cmd->add_option("--b", red_b);
    red_cmd->add_option("--x0", red_x0)->check(CLI::Range(0.0, 1.0));
    add_common(red_cmd, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitValidation;
    }

    try {
        if (*psi_cmd) cmd_psi_curve(psi_b, psi_ymax, psi_steps, common);
        else if (*drift_cmd) cmd_drift_surface(drift_b, drift_grid, common);
        else if (*heat_cmd) cmd_fixation_heatmap(heat_k, heat_grid, heat_y, common);
        else if (*fvb_cmd) cmd_fixation_vs_b0(fvb_xi, fvb_r, fvb_points, fvb_y, common);
        else if (*g_cmd) cmd_g_plot(g_xi, g_b, g_points, common);
        else if (*h_cmd) cmd_h_contour(h_grid, common);
        else if (*mc_cmd) cmd_mc_compare(mc, common);
        else if (*red_cmd) cmd_reduce(red_flow, red_b, red_x0, common);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return is_validation_error(e.code()) ? kExitValidation : kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    }
    return 0;
}
