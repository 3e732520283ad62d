#pragma once

#include <cstdint>
#include <vector>

#include "seedbank/core_model.hpp"

namespace seedbank {

struct BranchingSpec {
    GerminationDistribution d;
    double poisson_scale = 10.0;  ///< M, seeds per mature individual

    void validate() const;
};

/// Row i holds the expected offspring of a type-i particle by type.
Mat mean_matrix(const BranchingSpec& spec);

/// Largest eigenvalue modulus of the mean matrix.
double spectral_radius(const Mat& m);

struct FrobeniusPair {
    Vec u;  ///< right eigenvector, entries sum to 1
    Vec v;  ///< left eigenvector, <u, v> = 1
};

FrobeniusPair frobenius_eigenvectors(const BranchingSpec& spec);

/// lim t P(Z(t) != 0) = 2(B+1).
double survival_constant(const GerminationDistribution& d);

/// lim P(Z_0(t)/t >= y | survival) = exp(-2y(B+1)^2).
double conditional_tail(const GerminationDistribution& d, double y);

/// Splice map psi_B(y) = log((B+1)/(B + e^{-2y})) / (2(B+1)^2).
double psi(double mean_time, double y);

/// Left minus right side of the correspondence identity between the seed-bank and monotype tails.
double correspondence_residual(double mean_time, double y1, double y2);

/// P(Z(t) != 0 | Z(0) = e_0) for t = 0..horizon, by iterating the offspring generating function.
std::vector<double> exact_survival(const BranchingSpec& spec, int horizon);

struct BranchingOptions {
    int horizon = 200;
    long replicates = 100000;
    std::uint64_t seed = 1;
    int threads = 1;
    double budget = 1e8;  ///< cap on total particle-steps
};

struct BranchingResult {
    int horizon = 0;
    long replicates = 0;
    /// alive[t] = number of replicates with Z(t) != 0, t = 0..horizon.
    std::vector<long> alive;
    /// Z_0(horizon)/horizon for each replicate still alive at the horizon, in replicate order.
    std::vector<double> tail_samples;
    double particle_steps = 0.0;

    double survival(int t) const;
    /// t * P(alive at t) and its binomial standard error.
    double scaled_survival(int t) const;
    double scaled_survival_se(int t) const;
};

/// Forward simulation from a single type-0 particle with aggregated Poisson/binomial draws.
BranchingResult simulate_branching(const BranchingSpec& spec, const BranchingOptions& opt);

}  // namespace seedbank
