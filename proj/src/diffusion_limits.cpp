#include "seedbank/diffusion_limits.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "seedbank/branching_phase.hpp"
#include "seedbank/seedbank_flows.hpp"

namespace seedbank {

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

Box box1(double lo, double hi) {
    Box b;
    b.lo = Vec::Constant(1, lo);
    b.hi = Vec::Constant(1, hi);
    return b;
}

double wf_noise(double mean_time, double x) {
    const double v = x * (1.0 - x);
    return v > 0.0 ? std::sqrt(v) / (mean_time * (1.0 - x) + 1.0) : 0.0;
}

SdeSpec one_dim(ScalarFn drift, double mean_time) {
    SdeSpec s;
    s.dim = 1;
    s.noise_dim = 1;
    s.drift = [drift = std::move(drift)](const Vec& z, double) { return Vec::Constant(1, drift(clamp01(z[0]))); };
    s.diffusion = [mean_time](const Vec& z, double) { return Mat::Constant(1, 1, wf_noise(mean_time, clamp01(z[0]))); };
    s.domain = box1(0.0, 1.0);
    s.absorbing = {{0.0, 1.0}};
    s.bounded_by = {-1};
    return s;
}

}  // namespace

SdeSpec sde_constant(const GerminationDistribution& d) {
    const ScalarFn phi2 = drift_function(d);
    return one_dim([phi2](double x) { return 0.5 * x * (1.0 - x) * phi2(x); }, d.mean_time());
}

ProportionCoefficients proportion_coefficients(double phi2, double mean_time, double rho, double xi, double alpha,
                                               double eta) {
    const double bm = mean_time;
    const double v = rho * (1.0 - rho);
    const double den = bm * (1.0 - rho) + 1.0;
    ProportionCoefficients c;
    c.drift = 0.5 * phi2 * v / xi - bm * v * alpha / (den * xi) + bm * v * eta * eta / (den * xi * xi) +
              rho * rho * eta * eta / (2.0 * xi) * (phi2 - 2.0 * bm / den);
    c.noise_w0 = v > 0.0 ? std::sqrt(v) / (den * std::sqrt(xi)) : 0.0;
    c.noise_env = -bm * v * eta / (den * xi);
    return c;
}

SdeSpec sde_slow_env(const GerminationDistribution& d, const SlowEnvSpec& env, SlowVariable variable) {
    env.validate();
    const ScalarFn phi2 = drift_function(d);
    const double bm = d.mean_time();
    SdeSpec s;
    s.dim = 2;
    s.noise_dim = 2;
    s.domain.lo = Vec(2);
    s.domain.hi = Vec(2);
    s.domain.lo << 0.0, env.xi_min;
    s.domain.hi << (variable == SlowVariable::Count ? env.xi_max : 1.0), env.xi_max;

    if (variable == SlowVariable::Proportion) {
        s.drift = [phi2, bm, env](const Vec& z, double) {
            const double rho = clamp01(z[0]), xi = z[1];
            Vec out(2);
            out << proportion_coefficients(phi2(rho), bm, rho, xi, env.alpha(xi), env.eta(xi)).drift, env.alpha(xi);
            return out;
        };
        s.diffusion = [phi2, bm, env](const Vec& z, double) {
            const double rho = clamp01(z[0]), xi = z[1];
            const ProportionCoefficients c = proportion_coefficients(phi2(rho), bm, rho, xi, env.alpha(xi), env.eta(xi));
            Mat m(2, 2);
            m << c.noise_w0, c.noise_env, 0.0, env.eta(xi);
            return m;
        };
        s.absorbing = {{0.0, 1.0}, {}};
        s.bounded_by = {-1, -1};
        return s;
    }

    s.drift = [phi2, bm, env](const Vec& z, double) {
        const double xi = z[1], x = std::clamp(z[0], 0.0, xi);
        const double a = env.alpha(xi), e = env.eta(xi);
        const double den = bm * (xi - x) + xi;
        Vec out(2);
        out << 0.5 * phi2(x / xi) * (x * (xi - x) + e * e * x * x) / (xi * xi) + x * a / den -
                   bm * x * x * e * e / (xi * den * den),
            a;
        return out;
    };
    s.diffusion = [env, bm](const Vec& z, double) {
        const double xi = z[1], x = std::clamp(z[0], 0.0, xi);
        const double e = env.eta(xi);
        const double den = bm * (xi - x) + xi;
        const double v = xi * x * (xi - x);
        Mat m(2, 2);
        m << (v > 0.0 ? std::sqrt(v) / den : 0.0), x * e / den, 0.0, e;
        return m;
    };
    s.absorbing = {{0.0}, {}};
    s.bounded_by = {1, -1};
    return s;
}

SdeSpec sde_fast_env(const GerminationDistribution& d, const FastEnvSpec& fenv) {
    if (d.k() != 1) throw Error(ErrorCode::UnsupportedK, "the fast-environment diffusion is available for K = 1 only");
    fenv.validate();
    const double b0 = d.b(0);
    const double extra = fenv.p * fenv.s * fenv.s;
    return one_dim(
        [b0, extra](double x) {
            const double v = x * (1.0 - x);
            return 0.5 * v * drift_k1_closed(b0, x) + extra * v * h_function(x, b0);
        },
        d.mean_time());
}

SdePath integrate_sde(const SdeSpec& spec, const Vec& x0, double t_end, double dt, std::uint64_t seed,
                      const SdeOptions& opt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorCode::StepSizeInvalid, "dt must be positive and finite");
    if (!(t_end >= 0.0)) throw Error(ErrorCode::InvalidArgument, "t_end must be non-negative");
    if (opt.stride < 1) throw Error(ErrorCode::InvalidArgument, "stride must be positive");
    if (x0.size() != spec.dim || !spec.domain.contains(x0))
        throw Error(ErrorCode::DomainViolation, "initial state outside the domain");

    const auto n = static_cast<std::size_t>(spec.dim);
    std::vector<int> bounded = spec.bounded_by;
    bounded.resize(n, -1);
    std::vector<std::vector<double>> absorbing = spec.absorbing;
    absorbing.resize(n);

    SdePath path;
    path.absorbed.assign(n, std::nullopt);
    Vec x = x0;
    double t = 0.0;

    constexpr double snap = 1e-9;
    auto check_absorption = [&](double now) {
        for (std::size_t i = 0; i < n; ++i) {
            if (path.absorbed[i]) continue;
            const auto& vals = absorbing[i];
            const double top = vals.empty() ? 0.0 : *std::max_element(vals.begin(), vals.end());
            for (double a : vals) {
                if (std::abs(x[static_cast<Eigen::Index>(i)] - a) < snap) {
                    x[static_cast<Eigen::Index>(i)] = a;
                    path.absorbed[i] = Absorption{now, a, bounded[i] < 0 && vals.size() > 1 && a == top};
                    break;
                }
            }
            if (!path.absorbed[i] && bounded[i] >= 0) {
                const double cap = x[bounded[i]];
                if (std::abs(x[static_cast<Eigen::Index>(i)] - cap) < snap) {
                    x[static_cast<Eigen::Index>(i)] = cap;
                    path.absorbed[i] = Absorption{now, cap, true};
                }
            }
        }
    };
    auto finished = [&] {
        bool any = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (absorbing[i].empty() && bounded[i] < 0) continue;
            any = true;
            if (!path.absorbed[i]) return false;
        }
        return any;
    };

    check_absorption(0.0);
    if (opt.record) {
        path.times.push_back(t);
        path.states.push_back(x);
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sq = std::sqrt(dt);
    Vec dw(spec.noise_dim);
    long step = 0;
    while (t < t_end && !finished()) {
        const double h = std::min(dt, t_end - t);
        const double sh = h == dt ? sq : std::sqrt(h);
        for (Eigen::Index j = 0; j < dw.size(); ++j) dw[j] = normal(rng) * sh;
        Vec next = x + spec.drift(x, t) * h + spec.diffusion(x, t) * dw;
        for (std::size_t i = 0; i < n; ++i)
            if (path.absorbed[i]) next[static_cast<Eigen::Index>(i)] = x[static_cast<Eigen::Index>(i)];
        next = next.cwiseMax(spec.domain.lo).cwiseMin(spec.domain.hi);
        for (std::size_t i = 0; i < n; ++i)
            if (bounded[i] >= 0 && !path.absorbed[i])
                next[static_cast<Eigen::Index>(i)] = std::min(next[static_cast<Eigen::Index>(i)], next[bounded[i]]);
        x = next;
        t += h;
        ++step;
        check_absorption(t);
        if (opt.record && (step % opt.stride == 0 || t >= t_end || finished())) {
            path.times.push_back(t);
            path.states.push_back(x);
        }
    }
    path.final_state = x;
    path.final_time = t;
    return path;
}

FixationEstimate sde_fixation(const SdeSpec& spec, const Vec& x0, double t_end, double dt, long replicates,
                              std::uint64_t seed, int threads) {
    if (replicates < 1) throw Error(ErrorCode::InvalidArgument, "replicates must be positive");
    if (threads < 1) throw Error(ErrorCode::InvalidArgument, "threads must be positive");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorCode::StepSizeInvalid, "dt must be positive and finite");
    std::vector<int> outcome(static_cast<std::size_t>(replicates), 0);
    auto worker = [&](long begin, long end) {
        SdeOptions opt;
        opt.record = false;
        for (long i = begin; i < end; ++i) {
            const SdePath p = integrate_sde(spec, x0, t_end, dt, stream_seed(seed, static_cast<std::uint64_t>(i)), opt);
            const auto& a = p.absorbed.front();
            outcome[static_cast<std::size_t>(i)] = !a ? 0 : (a->upper ? 1 : -1);
        }
    };
    const int nt = static_cast<int>(std::min<long>(threads, replicates));
    const long chunk = (replicates + nt - 1) / nt;
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t) {
        const long b = t * chunk, e = std::min(replicates, b + chunk);
        if (b < e) pool.emplace_back(worker, b, e);
    }
    for (auto& th : pool) th.join();
    FixationEstimate est;
    est.master_seed = seed;
    for (int o : outcome) {
        if (o > 0) ++est.fixed;
        else if (o < 0) ++est.lost;
        else ++est.censored;
    }
    return est;
}

ScaleFunction::ScaleFunction(ScalarFn drift, ScalarFn diffusion, int panels)
    : drift_(std::move(drift)), diffusion_(std::move(diffusion)), panels_(panels) {
    if (panels_ < 1) throw Error(ErrorCode::InvalidArgument, "panels must be positive");
    cum_inner_.assign(static_cast<std::size_t>(panels_) + 1, 0.0);
    cum_scale_.assign(static_cast<std::size_t>(panels_) + 1, 0.0);
    for (int k = 0; k < panels_; ++k) {
        const double a = static_cast<double>(k) / panels_, b = static_cast<double>(k + 1) / panels_;
        cum_scale_[static_cast<std::size_t>(k) + 1] = cum_scale_[static_cast<std::size_t>(k)] + partial(k, b);
        cum_inner_[static_cast<std::size_t>(k) + 1] = cum_inner_[static_cast<std::size_t>(k)] + inner(a, b);
    }
    if (!std::isfinite(cum_scale_.back()) || !(cum_scale_.back() > 0.0))
        throw Error(ErrorCode::DegenerateDiffusion, "scale function is not finite on [0, 1]");
}

double ScaleFunction::ratio(double z) const {
    const double sigma = diffusion_(z);
    const double var = sigma * sigma;
    if (!(var > 0.0)) throw Error(ErrorCode::DegenerateDiffusion, "diffusion vanishes inside (0, 1)");
    const double r = 2.0 * drift_(z) / var;
    if (!std::isfinite(r)) throw Error(ErrorCode::DegenerateDiffusion, "2 mu / sigma^2 is not finite");
    return r;
}

double ScaleFunction::inner(double a, double b) const {
    if (b <= a) return 0.0;
    return boost::math::quadrature::gauss<double, 20>::integrate([this](double z) { return ratio(z); }, a, b);
}

double ScaleFunction::partial(int panel, double v) const {
    const double a = static_cast<double>(panel) / panels_;
    if (v <= a) return 0.0;
    const double base = cum_inner_[static_cast<std::size_t>(panel)];
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        [this, a, base](double w) { return std::exp(-(base + inner(a, w))); }, a, v, 6, 1e-13);
}

double ScaleFunction::operator()(double v) const {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::DomainViolation, "argument must lie in [0, 1]");
    const int panel = std::min(panels_ - 1, static_cast<int>(v * panels_));
    return cum_scale_[static_cast<std::size_t>(panel)] + partial(panel, v);
}

double ScaleFunction::fixation(double start) const { return (*this)(start) / cum_scale_.back(); }

double scale_fixation(const ScalarFn& drift, const ScalarFn& diffusion, double start) {
    if (!(start >= 0.0 && start <= 1.0)) throw Error(ErrorCode::DomainViolation, "start must lie in [0, 1]");
    return ScaleFunction(drift, diffusion).fixation(start);
}

double bounding_scale(double mean_time, double v) {
    const double e = std::exp(-mean_time * v);
    return (1.0 - e + v * e) / (mean_time + 1.0);
}

double psi_cap(double mean_time, double y) {
    if (!(y >= 0.0 && y < 1.0)) throw Error(ErrorCode::DomainViolation, "y must lie in [0, 1)");
    const double p = psi(mean_time, y);
    const double e = std::exp(-mean_time * p);
    return -std::expm1(-mean_time * p) + p * e;
}

double g_function(const GerminationDistribution& d, double rho, double xi) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw Error(ErrorCode::DomainViolation, "rho must lie in [0, 1]");
    if (!(xi > 0.0)) throw Error(ErrorCode::DomainViolation, "xi must be positive");
    const double bm = d.mean_time();
    const double den = bm * (1.0 - rho) + 1.0;
    return rho * (bm * (1.0 - rho) / (den * xi) + 0.5 * rho * (drift_second_derivative(d, rho) - 2.0 * bm / den));
}

double g_upper_bound(double mean_time, double rho, double xi) {
    const double bm = mean_time;
    const double y = 1.0 - rho;
    const double den = bm * y + 1.0;
    const double bracket = bm * bm * y * (1.0 - rho * (1.0 + xi)) + bm * (2.0 - rho * (2.0 + 1.5 * xi)) + 1.0;
    return bm * rho * y / (den * den * den * xi) * bracket;
}

double rho_c(double xi_min) { return (4.0 + xi_min) / (4.0 + 3.0 * xi_min); }

double b_c(double xi_min) { return 2.0 / xi_min; }

void Logistic::validate() const {
    if (!(r > 0.0)) throw Error(ErrorCode::InvalidArgument, "r must be positive");
    if (!(xi_inf > 0.0)) throw Error(ErrorCode::InvalidArgument, "xi_inf must be positive");
    if (!(xi0 > 0.0)) throw Error(ErrorCode::InvalidArgument, "xi0 must be positive");
}

double Logistic::xi(double t) const { return xi_inf / (1.0 + (xi_inf / xi0 - 1.0) * std::exp(-r * xi_inf * t)); }

void PdeGrid::validate() const {
    if (n_space < 51) throw Error(ErrorCode::InvalidArgument, "n_space must be at least 51");
    if (!(dt > 0.0) || dt > 0.01) throw Error(ErrorCode::StepSizeInvalid, "dt must lie in (0, 0.01]");
    if (!(t_end >= 0.0)) throw Error(ErrorCode::InvalidArgument, "t_end must be non-negative");
    if (!(theta >= 0.5 && theta <= 1.0)) throw Error(ErrorCode::InvalidArgument, "theta must lie in [0.5, 1]");
}

namespace {

/// Tridiagonal rows of L u = mu u' + sigma^2/2 u'' on the interior nodes.
struct Stencil {
    std::vector<double> lo, mid, hi;
};

class Operator {
public:
    Operator(ScalarFn phi2, double mean_time, int n) : n_(n), h_(1.0 / (n - 1)), rho_(static_cast<std::size_t>(n)) {
        phi2_.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            rho_[static_cast<std::size_t>(i)] = i * h_;
            phi2_[static_cast<std::size_t>(i)] = phi2(rho_[static_cast<std::size_t>(i)]);
        }
        mean_time_ = mean_time;
    }

    Stencil at(double xi, double alpha) const {
        Stencil s;
        const auto n = static_cast<std::size_t>(n_);
        s.lo.assign(n, 0.0);
        s.mid.assign(n, 0.0);
        s.hi.assign(n, 0.0);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const ProportionCoefficients c = proportion_coefficients(phi2_[i], mean_time_, rho_[i], xi, alpha, 0.0);
            const double dcoef = 0.5 * c.noise_w0 * c.noise_w0;
            const double mu = c.drift;
            const double diff = dcoef / (h_ * h_);
            s.lo[i] = diff;
            s.hi[i] = diff;
            s.mid[i] = -2.0 * diff;
            const double peclet = dcoef > 0.0 ? std::abs(mu) * h_ / dcoef : INFINITY;
            if (peclet > 2.0) {
                if (mu > 0.0) {
                    s.hi[i] += mu / h_;
                    s.mid[i] -= mu / h_;
                } else {
                    s.lo[i] -= mu / h_;
                    s.mid[i] += mu / h_;
                }
            } else {
                s.hi[i] += mu / (2.0 * h_);
                s.lo[i] -= mu / (2.0 * h_);
            }
        }
        return s;
    }

    int size() const { return n_; }

private:
    int n_;
    double h_;
    std::vector<double> rho_;
    std::vector<double> phi2_;
    double mean_time_ = 0.0;
};

/// Solves a u_{i-1} + b u_i + c u_{i+1} = r on nodes 1..n-2 with u_0 = 0, u_{n-1} = 1.
std::vector<double> thomas(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& c,
                           std::vector<double> r) {
    const std::size_t n = b.size();
    std::vector<double> u(n, 0.0);
    u[n - 1] = 1.0;
    r[n - 2] -= c[n - 2] * u[n - 1];
    std::vector<double> cp(n, 0.0), rp(n, 0.0);
    cp[1] = c[1] / b[1];
    rp[1] = r[1] / b[1];
    for (std::size_t i = 2; i + 1 < n; ++i) {
        const double m = b[i] - a[i] * cp[i - 1];
        if (m == 0.0) throw Error(ErrorCode::SingularSystem, "tridiagonal pivot vanished");
        cp[i] = c[i] / m;
        rp[i] = (r[i] - a[i] * rp[i - 1]) / m;
    }
    u[n - 2] = rp[n - 2];
    for (std::size_t i = n - 2; i-- > 1;) u[i] = rp[i] - cp[i] * u[i + 1];
    return u;
}

bool non_decreasing(const std::vector<double>& u) {
    for (std::size_t i = 1; i < u.size(); ++i)
        if (u[i] < u[i - 1] - 1e-12) return false;
    return true;
}

double interpolate(const std::vector<double>& u, double rho) {
    const double pos = rho * static_cast<double>(u.size() - 1);
    const auto i = std::min(u.size() - 2, static_cast<std::size_t>(pos));
    const double w = pos - static_cast<double>(i);
    return (1.0 - w) * u[i] + w * u[i + 1];
}

}  // namespace

KolmogorovResult kolmogorov_solve(const GerminationDistribution& d, const Logistic& env, double start_rho,
                                  const PdeGrid& grid) {
    env.validate();
    grid.validate();
    if (!(start_rho > 0.0 && start_rho < 1.0)) throw Error(ErrorCode::DomainViolation, "start_rho must lie in (0, 1)");

    const Operator op(drift_function(d), d.mean_time(), grid.n_space);
    const auto n = static_cast<std::size_t>(grid.n_space);

    // Terminal closure: the stationary solution of the autonomous operator at xi_inf.
    const Stencil s_inf = op.at(env.xi_inf, 0.0);
    std::vector<double> a(n), b(n), c(n);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        a[i] = s_inf.lo[i];
        b[i] = s_inf.mid[i];
        c[i] = s_inf.hi[i];
    }
    const std::vector<double> u_end = thomas(a, b, c, std::vector<double>(n, 0.0));

    const double rate = env.r * env.xi_inf;
    const double gap0 = std::abs(env.xi0 - env.xi_inf);
    double horizon = grid.t_end;
    if (gap0 > 1e-8) horizon = std::max(horizon, std::log(gap0 / 1e-8 * std::max(1.0, env.xi_inf / env.xi0)) / rate);

    for (int attempt = 0; attempt < 30; ++attempt) {
        const int steps = std::max(1, static_cast<int>(std::ceil(horizon / grid.dt)));
        const double dt = horizon > 0.0 ? horizon / steps : grid.dt;
        const double theta = grid.theta;

        KolmogorovResult res;
        res.u_end = u_end;
        res.horizon = horizon;
        res.monotone = non_decreasing(u_end);
        std::vector<double> u = u_end;
        double first_rate = 0.0;
        double t = horizon;
        Stencil s_old = op.at(env.xi(t), env.alpha(env.xi(t)));
        std::vector<double> rhs(n, 0.0);
        for (int k = 0; k < steps && horizon > 0.0; ++k) {
            const double t_new = t - dt;
            const double xi_new = env.xi(std::max(0.0, t_new));
            const Stencil s_new = op.at(xi_new, env.alpha(xi_new));
            for (std::size_t i = 1; i + 1 < n; ++i) {
                rhs[i] = u[i] + (1.0 - theta) * dt * (s_old.lo[i] * u[i - 1] + s_old.mid[i] * u[i] + s_old.hi[i] * u[i + 1]);
                a[i] = -theta * dt * s_new.lo[i];
                b[i] = 1.0 - theta * dt * s_new.mid[i];
                c[i] = -theta * dt * s_new.hi[i];
            }
            std::vector<double> next = thomas(a, b, c, rhs);
            if (k == 0) {
                double change = 0.0;
                for (std::size_t i = 0; i < n; ++i) change = std::max(change, std::abs(next[i] - u[i]));
                first_rate = change / dt;
            }
            u.swap(next);
            if (res.monotone && !non_decreasing(u)) res.monotone = false;
            s_old = s_new;
            t = t_new;
        }
        for (double v : u)
            if (!std::isfinite(v)) throw Error(ErrorCode::NoConvergence, "backward solve produced non-finite values");
        const bool settled = gap0 <= 1e-8 || std::abs(env.xi(horizon) - env.xi_inf) < 1e-8;
        if (settled && first_rate < 1e-8) {
            res.u0 = u;
            res.value = interpolate(u, start_rho);
            return res;
        }
        horizon += std::log(10.0) / rate;
    }
    throw Error(ErrorCode::NoConvergence, "environment did not settle within the horizon cap");
}

double kolmogorov_fixation(const GerminationDistribution& d, const Logistic& env, double start_rho,
                           const PdeGrid& grid) {
    return kolmogorov_solve(d, env, start_rho, grid).value;
}

}  // namespace seedbank
