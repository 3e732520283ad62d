#pragma once

#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "seedbank/core_model.hpp"

namespace seedbank {

struct Box {
    Vec lo;
    Vec hi;
    bool contains(const Vec& x, double slack = 0.0) const;
};

/// A smooth vector field with optional analytic derivatives.
struct FlowField {
    int dim = 0;
    Box domain;
    std::function<Vec(const Vec&)> eval;
    std::function<Mat(const Vec&)> jac;                 ///< optional
    std::function<std::vector<Mat>(const Vec&)> hess;   ///< optional, one matrix per component
};

inline constexpr double kJacobianStep = 1e-6;
inline constexpr double kHessianStep = 1e-4;

Mat numeric_jacobian(const FlowField& f, const Vec& x, double h = kJacobianStep);
std::vector<Mat> numeric_hessians(const FlowField& f, const Vec& x, double h = kHessianStep);

/// Analytic when available, central differences otherwise.
Mat jacobian_at(const FlowField& f, const Vec& x);
std::vector<Mat> hessians_at(const FlowField& f, const Vec& x);

/// Parametrisation of the attractor manifold by its first coordinate.
struct ManifoldChart {
    std::function<Vec(double)> gamma;
    std::function<Vec(double)> gamma_prime;
    std::function<Vec(double)> gamma_second;
    /// Straight line with gamma_prime'_0 = 1: lets the derivative formulas use
    /// sum v_l gamma'_l = 1 and gamma'' = 0 exactly.
    bool straight = false;
};

/// (x, ..., x, 0, ..., 0) with `active` leading coordinates equal to x.
ManifoldChart diagonal_chart(int dim, int active);

struct NullEigenpair {
    Vec u;
    Vec v;
};

inline constexpr double kNullTol = 1e-8;

/// Right/left null vectors of j, with u_0 = 1 when nonzero and <u, v> = 1.
NullEigenpair null_eigenpair(const Mat& j, double tol = kNullTol);

struct SpectrumReport {
    bool ok = false;
    Eigen::VectorXcd eigenvalues;
    std::string reason;
};

/// One eigenvalue within tol of 0, all others strictly inside |lambda + 1| < 1.
SpectrumReport spectrum_report(const Mat& j, double tol = kNullTol);
/// As spectrum_report but throws SpectrumViolation on failure.
SpectrumReport spectrum_gate(const Mat& j, double tol = kNullTol);

/// P_s^T (sum_i v_i Hess F_i) P_s.
Mat lyapunov_rhs(const std::vector<Mat>& hessians, const Vec& v, const Mat& p_s);

/// Unique symmetric Theta with J^T Theta + Theta J = rhs and Theta u = 0.
Mat solve_lyapunov(const Mat& j, const Mat& rhs, const Vec& u);

/// solve_lyapunov with the right-hand side built from the flow Hessians.
Mat solve_theta(const Mat& j, const std::vector<Mat>& hessians, const Vec& v, const Mat& p_s,
                const Vec& u);

/// -int_0^inf exp(J^T t) C exp(J t) dt by composite Gauss-Legendre panels of width quad_step.
/// The horizon starts at t_max and doubles until the integrand drops below 1e-12.
Mat lyapunov_integral(const Mat& j, const Mat& rhs, double t_max = 20.0, double quad_step = 0.05);
Mat theta_integral(const Mat& j, const std::vector<Mat>& hessians, const Vec& v, const Mat& p_s,
                   double t_max = 20.0, double quad_step = 0.05);

enum class Definiteness { PosSemidef, NegSemidef, Indefinite };

struct DefinitenessReport {
    Definiteness kind = Definiteness::Indefinite;
    Vec eigenvalues;
};

DefinitenessReport definiteness_of(const Mat& m, double zero_tol = 1e-10);
const char* to_string(Definiteness d);

struct Phi0Derivatives {
    Vec grad;
    Mat hess;
};

/// Parsons-Rogers first and second derivatives of Phi_0 at gamma(x0), given v and dv/dx0.
Phi0Derivatives phi0_derivatives(const ManifoldChart& chart, double x0, const Vec& v,
                                 const Vec& v_prime, const Mat& theta);

using VOfX0 = std::function<Vec(double)>;

inline constexpr double kVPrimeStep = 1e-5;

/// Central difference of v along the chart.
Vec v_prime_fd(const VOfX0& v_of, double x0, double h = kVPrimeStep);

struct ReductionResult {
    Vec point;
    Vec u;
    Vec v;
    Mat p_c;
    Mat p_s;
    Mat theta;
    Vec phi0_grad;
    Mat phi0_hess;
    Eigen::VectorXcd spectrum;
};

/// Full pipeline at gamma(x0). v_of defaults to the numerically computed left null vector
/// along the chart, normalised against gamma'.
ReductionResult reduce(const FlowField& f, const ManifoldChart& chart, double x0,
                       const VOfX0& v_of = {});

/// Integrates dx/dt = F(x) with an adaptive Dormand-Prince 5(4) stepper until |F| < tol.
Vec project_to_manifold(const FlowField& f, const Vec& x, double tol = 1e-12,
                        double t_limit = 1e6);

}  // namespace seedbank
