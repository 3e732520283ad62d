#include "seedbank/branching_phase.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <thread>

namespace seedbank {

void BranchingSpec::validate() const {
    if (!(poisson_scale > 1.0)) throw Error(ErrorCode::InvalidArgument, "poisson_scale must exceed 1");
}

Mat mean_matrix(const BranchingSpec& spec) {
    spec.validate();
    const int k = spec.d.k();
    Mat m = Mat::Zero(k + 1, k + 1);
    m(0, 0) = spec.d.b(0);
    for (int i = 1; i <= k; ++i) m(0, i) = spec.poisson_scale * spec.d.b(i);
    m(1, 0) = 1.0 / spec.poisson_scale;
    for (int i = 2; i <= k; ++i) m(i, i - 1) = 1.0;
    return m;
}

double spectral_radius(const Mat& m) {
    return Eigen::EigenSolver<Mat>(m, false).eigenvalues().cwiseAbs().maxCoeff();
}

FrobeniusPair frobenius_eigenvectors(const BranchingSpec& spec) {
    spec.validate();
    const int k = spec.d.k();
    const double m = spec.poisson_scale;
    FrobeniusPair p;
    p.u = Vec::Ones(k + 1);
    p.u[0] = m;
    p.u /= m + k;
    p.v.resize(k + 1);
    p.v[0] = 1.0;
    for (int i = 1; i <= k; ++i) p.v[i] = m * spec.d.tail(i);
    p.v *= (m + k) / (m * (spec.d.mean_time() + 1.0));
    return p;
}

double survival_constant(const GerminationDistribution& d) { return 2.0 * (d.mean_time() + 1.0); }

double conditional_tail(const GerminationDistribution& d, double y) {
    if (!(y >= 0.0)) throw Error(ErrorCode::InvalidArgument, "y must be non-negative");
    const double b1 = d.mean_time() + 1.0;
    return std::exp(-2.0 * y * b1 * b1);
}

double psi(double mean_time, double y) {
    if (!(mean_time >= 0.0)) throw Error(ErrorCode::InvalidArgument, "B must be non-negative");
    if (!(y >= 0.0 && y <= 1.0)) throw Error(ErrorCode::DomainViolation, "y must lie in [0, 1]");
    const double b1 = mean_time + 1.0;
    const double e = std::exp(-2.0 * y);
    return std::log1p(-std::expm1(-2.0 * y) / (mean_time + e)) / (2.0 * b1 * b1);
}

double correspondence_residual(double mean_time, double y1, double y2) {
    const double b1 = mean_time + 1.0;
    const double lhs = b1 * (std::exp(-2.0 * psi(mean_time, y1) * b1 * b1) - std::exp(-2.0 * psi(mean_time, y2) * b1 * b1));
    return lhs - (std::exp(-2.0 * y1) - std::exp(-2.0 * y2));
}

std::vector<double> exact_survival(const BranchingSpec& spec, int horizon) {
    spec.validate();
    if (horizon < 0) throw Error(ErrorCode::InvalidArgument, "horizon must be non-negative");
    const int k = spec.d.k();
    const double m = spec.poisson_scale;
    Vec q = Vec::Zero(k + 1);  // extinction-by-t probabilities per starting type
    std::vector<double> out{1.0};
    for (int t = 1; t <= horizon; ++t) {
        Vec next(k + 1);
        double expo = spec.d.b(0) * (q[0] - 1.0);
        for (int i = 1; i <= k; ++i) expo += m * spec.d.b(i) * (q[i] - 1.0);
        next[0] = std::exp(expo);
        next[1] = 1.0 - (1.0 - q[0]) / m;
        for (int i = 2; i <= k; ++i) next[i] = q[i - 1];
        q = next;
        out.push_back(1.0 - q[0]);
    }
    return out;
}

double BranchingResult::survival(int t) const {
    return static_cast<double>(alive.at(static_cast<std::size_t>(t))) / static_cast<double>(replicates);
}

double BranchingResult::scaled_survival(int t) const { return t * survival(t); }

double BranchingResult::scaled_survival_se(int t) const {
    const double p = survival(t);
    return t * std::sqrt(p * (1.0 - p) / static_cast<double>(replicates));
}

namespace {

struct Replicate {
    int death = -1;  ///< first t with Z(t) = 0, or -1 if alive at the horizon
    double tail = 0.0;
    double steps = 0.0;
};

Replicate run_one(const BranchingSpec& spec, int horizon, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const int k = spec.d.k();
    const double m = spec.poisson_scale;
    std::vector<long long> z(static_cast<std::size_t>(k) + 1, 0), next(z.size());
    z[0] = 1;
    Replicate r;
    for (int t = 1; t <= horizon; ++t) {
        const long long n0 = z[0];
        std::fill(next.begin(), next.end(), 0);
        if (n0 > 0) {
            if (spec.d.b(0) > 0.0) next[0] += std::poisson_distribution<long long>(n0 * spec.d.b(0))(rng);
            for (int i = 1; i <= k; ++i)
                if (spec.d.b(i) > 0.0) next[static_cast<std::size_t>(i)] += std::poisson_distribution<long long>(n0 * m * spec.d.b(i))(rng);
        }
        if (k >= 1 && z[1] > 0) next[0] += std::binomial_distribution<long long>(z[1], 1.0 / m)(rng);
        for (int i = 2; i <= k; ++i) next[static_cast<std::size_t>(i) - 1] += z[static_cast<std::size_t>(i)];
        z.swap(next);
        long long total = 0;
        for (long long c : z) total += c;
        r.steps += static_cast<double>(total);
        if (total == 0) {
            r.death = t;
            return r;
        }
    }
    r.tail = static_cast<double>(z[0]) / horizon;
    return r;
}

}  // namespace

BranchingResult simulate_branching(const BranchingSpec& spec, const BranchingOptions& opt) {
    spec.validate();
    if (opt.horizon < 10) throw Error(ErrorCode::InvalidArgument, "horizon must be at least 10");
    if (opt.replicates < 1) throw Error(ErrorCode::BudgetExceeded, "replicates must be positive");
    if (opt.threads < 1) throw Error(ErrorCode::InvalidArgument, "threads must be positive");

    std::vector<Replicate> reps(static_cast<std::size_t>(opt.replicates));
    std::atomic<double> used{0.0};
    std::atomic<bool> over{false};
    auto worker = [&](long begin, long end) {
        double local = 0.0;
        for (long i = begin; i < end && !over.load(std::memory_order_relaxed); ++i) {
            reps[static_cast<std::size_t>(i)] = run_one(spec, opt.horizon, stream_seed(opt.seed, static_cast<std::uint64_t>(i)));
            local += reps[static_cast<std::size_t>(i)].steps;
            if ((i & 1023) == 0 || i + 1 == end) {
                const double total = used.fetch_add(local) + local;
                local = 0.0;
                if (total > opt.budget) over = true;
            }
        }
    };
    const int nthreads = static_cast<int>(std::min<long>(opt.threads, opt.replicates));
    std::vector<std::thread> pool;
    const long chunk = (opt.replicates + nthreads - 1) / nthreads;
    for (int t = 0; t < nthreads; ++t) {
        const long b = t * chunk, e = std::min(opt.replicates, b + chunk);
        if (b < e) pool.emplace_back(worker, b, e);
    }
    for (auto& th : pool) th.join();
    if (over) throw Error(ErrorCode::BudgetExceeded, "particle-step budget of " + std::to_string(opt.budget) + " exhausted");

    BranchingResult res;
    res.horizon = opt.horizon;
    res.replicates = opt.replicates;
    res.alive.assign(static_cast<std::size_t>(opt.horizon) + 1, 0);
    std::vector<long> deaths(static_cast<std::size_t>(opt.horizon) + 2, 0);
    for (const auto& r : reps) {
        res.particle_steps += r.steps;
        if (r.death < 0) {
            deaths[static_cast<std::size_t>(opt.horizon) + 1]++;
            res.tail_samples.push_back(r.tail);
        } else {
            deaths[static_cast<std::size_t>(r.death)]++;
        }
    }
    long alive = opt.replicates;
    for (int t = 0; t <= opt.horizon; ++t) {
        alive -= deaths[static_cast<std::size_t>(t)];
        res.alive[static_cast<std::size_t>(t)] = alive;
    }
    return res;
}

}  // namespace seedbank
