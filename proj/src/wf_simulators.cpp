#include "seedbank/wf_simulators.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace seedbank {

bool WfState::lost() const {
    return std::all_of(x.begin(), x.end(), [](long c) { return c == 0; });
}

bool WfState::fixed() const {
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] != sizes[i]) return false;
    return true;
}

namespace {

long floor_size(double xi, long n) { return static_cast<long>(std::floor(xi * static_cast<double>(n))); }

void check_n(long n) {
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "N must be positive");
}

void check_state(const WfState& s, const GerminationDistribution& d) {
    const auto k1 = static_cast<std::size_t>(d.k()) + 1;
    if (s.x.size() != k1 || s.sizes.size() != k1) throw Error(ErrorCode::InvalidArgument, "state has the wrong length");
}

/// Ageing shift followed by the new mature count.
void advance(WfState& s, long x0_next, long size_next) {
    for (std::size_t i = s.x.size() - 1; i > 0; --i) {
        s.x[i] = s.x[i - 1];
        s.sizes[i] = s.sizes[i - 1];
    }
    s.x[0] = x0_next;
    s.sizes[0] = size_next;
}

}  // namespace

WfState diagonal_state(const GerminationDistribution& d, long n, double start, double xi0) {
    check_n(n);
    if (!(start >= 0.0 && start <= 1.0)) throw Error(ErrorCode::DomainViolation, "start must lie in [0, 1]");
    if (!(xi0 > 0.0)) throw Error(ErrorCode::InvalidArgument, "xi0 must be positive");
    const auto k1 = static_cast<std::size_t>(d.k()) + 1;
    WfState s;
    const long size = floor_size(xi0, n);
    s.sizes.assign(k1, size);
    s.x.assign(k1, std::lround(start * static_cast<double>(size)));
    s.xi = xi0;
    s.marks.assign(static_cast<std::size_t>(d.k()), 0);
    return s;
}

double success_probability(const GerminationDistribution& d, const std::vector<long>& x, double wild,
                           const std::vector<double>& weights) {
    double num = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        num += d.b(static_cast<int>(i)) * weights[i] * static_cast<double>(x[i]);
    const double den = wild + num;
    return den > 0.0 ? num / den : 0.0;
}

long draw_binomial(long trials, double p, Rng& rng) {
    if (trials <= 0 || p <= 0.0) return 0;
    if (p >= 1.0) return trials;
    return std::binomial_distribution<long>(trials, p)(rng);
}

void step_constant(WfState& s, const GerminationDistribution& d, long n, Rng& rng) {
    check_n(n);
    check_state(s, d);
    const std::vector<double> w(s.x.size(), 1.0);
    const double p = success_probability(d, s.x, static_cast<double>(n - s.x[0]), w);
    advance(s, draw_binomial(n, p, rng), n);
}

double EnvProcess::next(double xi, Rng& rng) const {
    const double nn = static_cast<double>(n);
    double out = xi + alpha(xi) / nn;
    if (kind == EnvKind::ReflectedWalk) {
        const double e = eta(xi) / std::sqrt(nn);
        out += std::bernoulli_distribution(0.5)(rng) ? e : -e;
        if (out > xi_max) out = 2.0 * xi_max - out;
        if (out < xi_min) out = 2.0 * xi_min - out;
    }
    return std::clamp(out, xi_min, xi_max);
}

EnvProcess make_logistic_env(double r, double xi_inf, double xi_min, double xi_max, long n) {
    check_n(n);
    if (!(r > 0.0) || !(xi_inf > 0.0)) throw Error(ErrorCode::InvalidArgument, "r and xi_inf must be positive");
    if (!(xi_min > 0.0) || !(xi_max > xi_min)) throw Error(ErrorCode::InvalidArgument, "need 0 < xi_min < xi_max");
    if (xi_inf < xi_min || xi_inf > xi_max)
        throw Error(ErrorCode::BoundaryConditionViolated, "xi_inf must lie in [xi_min, xi_max]");
    EnvProcess e;
    e.kind = EnvKind::DeterministicLogistic;
    e.xi_min = xi_min;
    e.xi_max = xi_max;
    e.n = n;
    e.alpha = [r, xi_inf](double xi) { return r * xi * (xi_inf - xi); };
    e.eta = [](double) { return 0.0; };
    return e;
}

EnvProcess make_reflected_walk(ScalarFn alpha, ScalarFn eta, double xi_min, double xi_max, long n) {
    check_n(n);
    SlowEnvSpec spec{xi_min, xi_max, alpha, eta};
    spec.validate();
    EnvProcess e;
    e.kind = EnvKind::ReflectedWalk;
    e.xi_min = xi_min;
    e.xi_max = xi_max;
    e.n = n;
    e.alpha = std::move(alpha);
    e.eta = std::move(eta);
    return e;
}

void step_slow(WfState& s, const GerminationDistribution& d, long n, const EnvProcess& env, Rng& rng) {
    check_n(n);
    check_state(s, d);
    const double xi_next = env.next(s.xi, rng);
    const long size_next = floor_size(xi_next, n);
    const std::vector<double> w(s.x.size(), 1.0);
    const double p = success_probability(d, s.x, static_cast<double>(s.sizes[0] - s.x[0]), w);
    advance(s, draw_binomial(size_next, p, rng), size_next);
    s.xi = xi_next;
}

void step_fast(WfState& s, const GerminationDistribution& d, long n, const FastEnvSpec& fenv, Rng& rng) {
    check_n(n);
    check_state(s, d);
    const auto k = static_cast<std::size_t>(d.k());
    if (s.marks.size() != k) throw Error(ErrorCode::InvalidArgument, "mark history must have K entries");
    const double sn = fenv.s_of_n(n);
    int mark = 0;
    if (fenv.p > 0.0) {
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        mark = u < fenv.p ? -1 : (u < 2.0 * fenv.p ? 1 : 0);
    }
    std::vector<double> w(k + 1);
    w[0] = 1.0 + sn * mark;
    for (std::size_t i = 1; i <= k; ++i) w[i] = 1.0 + sn * s.marks[i - 1];
    const double p = success_probability(d, s.x, static_cast<double>(n - s.x[0]) * w[0], w);
    advance(s, draw_binomial(n, p, rng), n);
    if (k > 0) {
        for (std::size_t i = k - 1; i > 0; --i) s.marks[i] = s.marks[i - 1];
        s.marks[0] = mark;
    }
}

double constant_expected_increment(const GerminationDistribution& d, const std::vector<double>& x) {
    double tail = 0.0, all = 0.0;
    for (int i = 0; i <= d.k(); ++i) {
        all += d.b(i) * x[static_cast<std::size_t>(i)];
        if (i >= 1) tail += d.b(i) * x[static_cast<std::size_t>(i)];
    }
    return (1.0 - x[0]) * (tail - (1.0 - d.b(0)) * x[0]) / ((1.0 - x[0]) + all);
}

double slow_expected_increment(const GerminationDistribution& d, const std::vector<double>& x, double xi,
                               double xi_next) {
    double tail = 0.0, all = 0.0;
    for (int i = 0; i <= d.k(); ++i) {
        all += d.b(i) * x[static_cast<std::size_t>(i)];
        if (i >= 1) tail += d.b(i) * x[static_cast<std::size_t>(i)];
    }
    const double den = (xi - x[0]) + all;
    return (xi_next - xi) * all / den + (xi - x[0]) * (tail - (1.0 - d.b(0)) * x[0]) / den;
}

double fast_expected_increment(const GerminationDistribution& d, const std::vector<double>& x,
                               const std::vector<double>& ups, double p, double s_n) {
    const double b0 = d.b(0), x0 = x[0];
    double tail = 0.0;
    for (int i = 1; i <= d.k(); ++i)
        tail += d.b(i) * (1.0 + ups[static_cast<std::size_t>(i) - 1]) * x[static_cast<std::size_t>(i)];
    const double wild = (1.0 - x0) + b0 * x0;
    const double h = wild + tail;
    const double m = 1.0 - (1.0 - b0) * x0;
    return 2.0 * p * s_n * s_n * (1.0 - x0) * wild * tail / ((h * h - s_n * s_n * m * m) * h) +
           (1.0 - x0) * (tail - (1.0 - b0) * x0) / h;
}

FixationEstimate run_fixation(const RegimeConfig& cfg, const GerminationDistribution& d, long n, double start,
                              const RunOptions& opt) {
    check_n(n);
    if (opt.replicates < 1) throw Error(ErrorCode::InvalidArgument, "replicates must be positive");
    if (opt.max_generations < 1) throw Error(ErrorCode::InvalidArgument, "max_generations must be positive");
    if (opt.threads < 1) throw Error(ErrorCode::InvalidArgument, "threads must be positive");
    if (cfg.regime == Regime::Fast) cfg.fast.validate();
    if (cfg.regime == Regime::Slow && !cfg.env.alpha) throw Error(ErrorCode::InvalidArgument, "slow regime needs an environment process");

    const WfState init = diagonal_state(d, n, start, cfg.regime == Regime::Slow ? cfg.xi0 : 1.0);
    std::vector<int> outcome(static_cast<std::size_t>(opt.replicates), 0);
    auto worker = [&](long begin, long end) {
        for (long r = begin; r < end; ++r) {
            Rng rng(stream_seed(opt.seed, static_cast<std::uint64_t>(r)));
            WfState s = init;
            int result = 0;
            for (long g = 0; g <= opt.max_generations; ++g) {
                if (s.lost()) {
                    result = -1;
                    break;
                }
                if (s.fixed()) {
                    result = 1;
                    break;
                }
                if (g == opt.max_generations) break;
                switch (cfg.regime) {
                    case Regime::Constant: step_constant(s, d, n, rng); break;
                    case Regime::Slow: step_slow(s, d, n, cfg.env, rng); break;
                    case Regime::Fast: step_fast(s, d, n, cfg.fast, rng); break;
                }
            }
            outcome[static_cast<std::size_t>(r)] = result;
        }
    };
    const int nt = static_cast<int>(std::min<long>(opt.threads, opt.replicates));
    const long chunk = (opt.replicates + nt - 1) / nt;
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t) {
        const long b = t * chunk, e = std::min(opt.replicates, b + chunk);
        if (b < e) pool.emplace_back(worker, b, e);
    }
    for (auto& th : pool) th.join();

    FixationEstimate est;
    est.master_seed = opt.seed;
    for (int o : outcome) {
        if (o > 0) ++est.fixed;
        else if (o < 0) ++est.lost;
        else ++est.censored;
    }
    return est;
}

}  // namespace seedbank
