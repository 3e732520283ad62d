#include "seedbank/core_model.hpp"

#include <cmath>
#include <sstream>

namespace seedbank {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::NotOnSimplex: return "NotOnSimplex";
        case ErrorCode::ZeroB0: return "ZeroB0";
        case ErrorCode::NegativeEntry: return "NegativeEntry";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::DomainViolation: return "DomainViolation";
        case ErrorCode::UnsupportedK: return "UnsupportedK";
        case ErrorCode::BoundaryConditionViolated: return "BoundaryConditionViolated";
        case ErrorCode::NoNullEigenvalue: return "NoNullEigenvalue";
        case ErrorCode::MultipleNullEigenvalues: return "MultipleNullEigenvalues";
        case ErrorCode::SpectrumViolation: return "SpectrumViolation";
        case ErrorCode::SingularSystem: return "SingularSystem";
        case ErrorCode::TruncationNotConverged: return "TruncationNotConverged";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::DegenerateDiffusion: return "DegenerateDiffusion";
        case ErrorCode::StepSizeInvalid: return "StepSizeInvalid";
        case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    }
    return "Unknown";
}

bool is_validation_error(ErrorCode code) {
    switch (code) {
        case ErrorCode::NotOnSimplex:
        case ErrorCode::ZeroB0:
        case ErrorCode::NegativeEntry:
        case ErrorCode::InvalidArgument:
        case ErrorCode::DomainViolation:
        case ErrorCode::UnsupportedK:
        case ErrorCode::BoundaryConditionViolated:
        case ErrorCode::StepSizeInvalid:
            return true;
        default:
            return false;
    }
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

GerminationDistribution::GerminationDistribution(std::vector<double> b) : b_(std::move(b)) {
    const int kk = k();
    tail_.assign(static_cast<std::size_t>(kk) + 2, 0.0);
    for (int i = kk; i >= 0; --i) tail_[static_cast<std::size_t>(i)] = tail_[static_cast<std::size_t>(i) + 1] + b_[static_cast<std::size_t>(i)];
    for (int i = 1; i <= kk; ++i) mean_ += i * b_[static_cast<std::size_t>(i)];
}

GerminationDistribution GerminationDistribution::from(std::vector<double> b) {
    if (b.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least b0 and b1 (K >= 1)");
    double sum = 0.0;
    for (double bi : b) {
        if (!std::isfinite(bi)) throw Error(ErrorCode::InvalidArgument, "non-finite entry");
        if (bi < 0.0) throw Error(ErrorCode::NegativeEntry, "entry " + std::to_string(bi) + " < 0");
        sum += bi;
    }
    if (b[0] <= 0.0) throw Error(ErrorCode::ZeroB0, "b0 must be strictly positive");
    if (std::abs(sum - 1.0) > kSimplexTol) {
        std::ostringstream os;
        os.precision(17);
        os << "entries sum to " << sum;
        throw Error(ErrorCode::NotOnSimplex, os.str());
    }
    return GerminationDistribution(std::move(b));
}

double GerminationDistribution::tail(int i) const {
    if (i < 0 || i > k() + 1) throw Error(ErrorCode::InvalidArgument, "tail index out of range");
    return tail_[static_cast<std::size_t>(i)];
}

GerminationDistribution validate_distribution(const std::vector<double>& raw) {
    return GerminationDistribution::from(raw);
}

double mean_germination_time(const GerminationDistribution& d) { return d.mean_time(); }

TailSums tail_sums(const GerminationDistribution& d) {
    TailSums out;
    for (int i = 1; i <= d.k(); ++i) {
        out.tail.push_back(d.tail(i));
        out.b_minus.push_back(d.mean_time() - d.tail(i));
    }
    return out;
}

GerminationDistribution parse_distribution(const std::string& csv) {
    std::vector<double> b;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            b.push_back(std::stod(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw Error(ErrorCode::InvalidArgument, "cannot parse '" + item + "' as a number");
        }
    }
    return GerminationDistribution::from(std::move(b));
}

GerminationDistribution distribution_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("b") || !j["b"].is_array())
        throw Error(ErrorCode::InvalidArgument, "expected an object with array field \"b\"");
    std::vector<double> b;
    for (const auto& e : j["b"]) {
        if (!e.is_number()) throw Error(ErrorCode::InvalidArgument, "non-numeric entry in \"b\"");
        b.push_back(e.get<double>());
    }
    return GerminationDistribution::from(std::move(b));
}

void SlowEnvSpec::validate() const {
    if (!(xi_min > 0.0) || !(xi_max > xi_min))
        throw Error(ErrorCode::InvalidArgument, "need 0 < xi_min < xi_max");
    if (!alpha || !eta) throw Error(ErrorCode::InvalidArgument, "alpha and eta must be set");
    if (alpha(xi_min) < 0.0 || alpha(xi_max) > 0.0)
        throw Error(ErrorCode::BoundaryConditionViolated, "alpha must point inwards at the bounds");
    if (eta(xi_min) != 0.0 || eta(xi_max) != 0.0)
        throw Error(ErrorCode::BoundaryConditionViolated, "eta must vanish at xi_min and xi_max");
}

void FastEnvSpec::validate() const {
    if (!(p >= 0.0 && p <= 0.5)) throw Error(ErrorCode::InvalidArgument, "p must lie in [0, 1/2]");
    if (!(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "s must be positive");
}

double FastEnvSpec::s_of_n(long n) const {
    if (n <= 0) throw Error(ErrorCode::InvalidArgument, "N must be positive");
    const double sn = s / std::sqrt(static_cast<double>(n));
    return std::min(sn, std::nextafter(1.0, 0.0));
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(seed) ^ (index + 0x632be59bd9b4e019ULL));
}

double FixationEstimate::p_hat() const {
    const long n = fixed + lost;
    return n > 0 ? static_cast<double>(fixed) / static_cast<double>(n) : 0.0;
}

double FixationEstimate::std_err() const {
    const long n = fixed + lost;
    if (n == 0) return 0.0;
    const double q = p_hat();
    return std::sqrt(q * (1.0 - q) / static_cast<double>(n));
}

}  // namespace seedbank
