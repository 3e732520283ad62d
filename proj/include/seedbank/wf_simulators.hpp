#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "seedbank/core_model.hpp"

namespace seedbank {

using Rng = std::mt19937_64;

/// Discrete-generation state. x[i] counts mutants of generation t - i, sizes[i] is the
/// number of mature individuals in that generation.
struct WfState {
    std::vector<long> x;
    std::vector<long> sizes;
    double xi = 1.0;         ///< slow regime: Xi(t)
    std::vector<int> marks;  ///< fast regime: Upsilon_0(t), ..., Upsilon_0(t - K + 1)

    bool lost() const;
    bool fixed() const;
};

/// All generations at frequency `start` (rounded to counts), Xi = xi0, marks zero.
WfState diagonal_state(const GerminationDistribution& d, long n, double start, double xi0 = 1.0);

/// Next-generation binomial success probability sum_i b_i w_i X_i / (wild + sum_i b_i w_i X_i).
double success_probability(const GerminationDistribution& d, const std::vector<long>& x, double wild,
                           const std::vector<double>& weights);

/// Binomial draw with the degenerate ends handled exactly.
long draw_binomial(long trials, double p, Rng& rng);

void step_constant(WfState& s, const GerminationDistribution& d, long n, Rng& rng);

enum class EnvKind { DeterministicLogistic, ReflectedWalk };

/// Discrete environment chain on [xi_min, xi_max] with increments of order 1/N.
struct EnvProcess {
    EnvKind kind = EnvKind::DeterministicLogistic;
    double xi_min = 0.5;
    double xi_max = 1.5;
    long n = 1;
    ScalarFn alpha;
    ScalarFn eta;

    /// Xi(t+1) given Xi(t). The deterministic kind draws nothing from rng.
    double next(double xi, Rng& rng) const;
};

/// alpha(xi) = r xi (xi_inf - xi), eta = 0.
EnvProcess make_logistic_env(double r, double xi_inf, double xi_min, double xi_max, long n);

/// Xi + alpha/N +- eta/sqrt(N) with equal probability, reflected into the box.
EnvProcess make_reflected_walk(ScalarFn alpha, ScalarFn eta, double xi_min, double xi_max, long n);

void step_slow(WfState& s, const GerminationDistribution& d, long n, const EnvProcess& env, Rng& rng);

/// Draws Upsilon_0(t+1) (skipped when p = 0) and applies the weighted binomial.
void step_fast(WfState& s, const GerminationDistribution& d, long n, const FastEnvSpec& fenv, Rng& rng);

/// E[x0(t+1) - x0(t)] in the constant regime.
double constant_expected_increment(const GerminationDistribution& d, const std::vector<double>& x);

/// Two-term slow-regime expectation given Xi(t) and Xi(t+1), in scaled units.
double slow_expected_increment(const GerminationDistribution& d, const std::vector<double>& x, double xi,
                               double xi_next);

/// Two-term fast-regime expectation; ups[i] = s_N Upsilon_i(t).
double fast_expected_increment(const GerminationDistribution& d, const std::vector<double>& x,
                               const std::vector<double>& ups, double p, double s_n);

enum class Regime { Constant, Slow, Fast };

struct RegimeConfig {
    Regime regime = Regime::Constant;
    EnvProcess env;    ///< slow only
    FastEnvSpec fast;  ///< fast only
    double xi0 = 1.0;  ///< slow only
};

struct RunOptions {
    long replicates = 10000;
    long max_generations = 1000000;
    std::uint64_t seed = 1;
    int threads = 1;
};

/// Independent replicates from the diagonal state at `start` until loss, fixation or censoring.
FixationEstimate run_fixation(const RegimeConfig& cfg, const GerminationDistribution& d, long n, double start,
                              const RunOptions& opt);

}  // namespace seedbank
