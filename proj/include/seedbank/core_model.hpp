#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace seedbank {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Failure categories shared by every module.
enum class ErrorCode {
    NotOnSimplex,
    ZeroB0,
    NegativeEntry,
    InvalidArgument,
    DomainViolation,
    UnsupportedK,
    BoundaryConditionViolated,
    NoNullEigenvalue,
    MultipleNullEigenvalues,
    SpectrumViolation,
    SingularSystem,
    TruncationNotConverged,
    NoConvergence,
    DegenerateDiffusion,
    StepSizeInvalid,
    BudgetExceeded,
};

const char* to_string(ErrorCode code);

/// True for codes caused by bad user input rather than by a numerical failure.
bool is_validation_error(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what);
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Absolute tolerance on the sum of the germination probabilities.
inline constexpr double kSimplexTol = 1e-12;

/// Germination distribution b = (b_0, ..., b_K) with b_0 > 0.
///
/// Immutable after construction. The mean germination time B = sum i*b_i is
/// cached because almost every downstream formula needs it.
class GerminationDistribution {
public:
    /// Validates and builds; throws Error with NegativeEntry, ZeroB0 or NotOnSimplex.
    static GerminationDistribution from(std::vector<double> b);

    int k() const { return static_cast<int>(b_.size()) - 1; }
    double b(int i) const { return b_[static_cast<std::size_t>(i)]; }
    const std::vector<double>& probabilities() const { return b_; }
    double mean_time() const { return mean_; }

    /// sum_{l >= i} b_l, for 0 <= i <= K+1 (tail(K+1) = 0).
    double tail(int i) const;

private:
    explicit GerminationDistribution(std::vector<double> b);
    std::vector<double> b_;
    std::vector<double> tail_;
    double mean_ = 0.0;
};

GerminationDistribution validate_distribution(const std::vector<double>& raw);

/// B = sum_i i*b_i.
double mean_germination_time(const GerminationDistribution& d);

struct TailSums {
    std::vector<double> tail;     ///< tail[i-1] = sum_{l=i}^K b_l, i = 1..K
    std::vector<double> b_minus;  ///< b_minus[j-1] = B - sum_{q=j}^K b_q, j = 1..K
};

TailSums tail_sums(const GerminationDistribution& d);

/// Parses "0.6,0.2,0.2".
GerminationDistribution parse_distribution(const std::string& csv);

/// Parses {"b": [...]}.
GerminationDistribution distribution_from_json(const nlohmann::json& j);

using ScalarFn = std::function<double(double)>;

/// Slowly varying scaled population size: drift alpha and noise eta on [xi_min, xi_max].
struct SlowEnvSpec {
    double xi_min = 0.5;
    double xi_max = 1.5;
    ScalarFn alpha;
    ScalarFn eta;

    /// Checks alpha(xi_min) >= 0, alpha(xi_max) <= 0 and eta vanishing at both ends.
    void validate() const;
};

/// Fast environment: marks in {-1, 0, +1} with P(-1) = P(+1) = p, amplitude s_N = s / sqrt(N).
struct FastEnvSpec {
    double p = 0.0;
    double s = 0.0;

    void validate() const;
    /// s * N^{-1/2}, clipped to [0, 1).
    double s_of_n(long n) const;
};

/// Independent generator seed for replicate `index` under master seed `seed` (SplitMix64 mixing).
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index);

/// Monte Carlo estimate of P(fixation). Censored runs (still interior at the time limit)
/// are reported but excluded from p_hat.
struct FixationEstimate {
    long fixed = 0;
    long lost = 0;
    long censored = 0;
    std::uint64_t master_seed = 0;

    long replicates() const { return fixed + lost + censored; }
    double p_hat() const;
    double std_err() const;
};

}  // namespace seedbank
