#pragma once

#include <memory>
#include <optional>

#include "seedbank/core_model.hpp"
#include "seedbank/manifold_reduction.hpp"

namespace seedbank {

enum class FlowTag { Constant, Linearized, SlowEnv, FastEnv };

const char* to_string(FlowTag tag);

struct FlowKind {
    FlowTag tag = FlowTag::Constant;
    GerminationDistribution d;
    std::optional<SlowEnvSpec> env;  ///< slow_env only; the box uses [0, xi_max] and [xi_min, xi_max]

    /// K+1, K+2 or 2K+1 depending on the tag.
    int dim() const;
};

/// Coordinates may stray this far outside the box so that difference stencils
/// centred on a face still evaluate.
inline constexpr double kDomainSlack = 1e-3;

/// Layout: x_0..x_K, then xi (slow_env) or upsilon_0..upsilon_{K-1} (fast_env).
/// Jacobian and Hessians are analytic everywhere in the box.
FlowField build_flow(const FlowKind& kind);

/// Point of the attractor manifold: x in the first K+1 slots, xi in the last for slow_env, zeros otherwise.
Vec gamma_point(const FlowKind& kind, double x0, double xi = 1.0);

/// Closed-form Jacobian on the manifold. For slow_env x0 is the absolute count and xi the environment.
Mat jacobian_on_gamma(const FlowKind& kind, double x0, double xi = 1.0);

/// Closed-form null vectors (constant, linearized, fast_env). slow_env is rejected because
/// its manifold is two-dimensional.
NullEigenpair eigvecs_on_gamma(const FlowKind& kind, double x0);

/// Displayed second derivatives of F_0 on the diagonal.
Mat hessian_f0_on_gamma(const GerminationDistribution& d, double x0);

Mat theta_g_closed(const GerminationDistribution& d, double x0);

struct DeltaMatrix {
    Mat m;
    Vec spectrum;  ///< closed form, ascending: -((1-b0)^2 + sum b_i^2), then K zeros
};

DeltaMatrix delta_matrix(const GerminationDistribution& d);

double drift_bound(double mean_time, double x0);

/// d^2 Phi_0 / dx_0^2 on the diagonal, from the bound term and the Delta part of Theta.
double drift_second_derivative(const GerminationDistribution& d, double x0);

/// Same quantity from the generic reduction pipeline applied to the full flow.
double drift_via_pipeline(const GerminationDistribution& d, double x0);

double drift_k1_closed(double b0, double x0);

/// K = 2 closed form. Agrees with drift_second_derivative for every x0.
double drift_k2_closed(const GerminationDistribution& d, double x0);

/// The K = 2 expression with B(4 - B^2) in the numerator. Agrees with the other two only at x0 = 0.
double drift_k2_as_printed(const GerminationDistribution& d, double x0);

struct FastSecondDerivatives {
    double d2_x0_ups0 = 0.0;
    double d2_ups0_ups0 = 0.0;
};

/// K = 1 closed forms, consistent with the Lyapunov system of the fast flow.
FastSecondDerivatives fast_second_derivatives_k1(double b0, double x0);

/// The K = 1 expressions in their reference form. They disagree with the fast flow's
/// own Lyapunov system away from x0 = 1 and are kept for comparison only.
FastSecondDerivatives fast_second_derivatives_k1_as_printed(double b0, double x0);

/// d2_ups0_ups0 / (x0 (1 - x0)) with the factor cancelled, so finite at x0 in {0, 1}.
double fast_d2_ups0_ups0_reduced_k1(double b0, double x0);

/// Generic route: reduction pipeline on the fast flow with the closed-form null vectors.
FastSecondDerivatives fast_second_derivatives_pipeline(const GerminationDistribution& d, double x0);

/// Extra drift factor of the fast environment for K = 1, assembled from its four terms.
double h_function(double x0, double b0);

/// h assembled from the reference derivative expressions (h(0, 0) = 4/3 there, 5/6 for h_function).
double h_function_as_printed(double x0, double b0);

struct SlowEnvDerivatives {
    double d_x0 = 0.0;
    double d_xi = 0.0;
    double d2_x0x0 = 0.0;
    double d2_x0xi = 0.0;
    double d2_xixi = 0.0;
};

/// Derivatives of the slow-environment projection at (x0, ..., x0, xi).
SlowEnvDerivatives slow_env_derivatives(const GerminationDistribution& d, double x0, double xi);

/// K = 1 first integral ((1-b0) x1 + b0)/(1 - x0) - (1-b0) log(1 - x0) of the flow.
double k1_invariant(double b0, double x0, double x1);

/// Phi_0(x0, x1) for K = 1 by inverting the first integral on the diagonal.
double k1_phi0_closed(double b0, double x0, double x1);

/// Quintic spline of drift_second_derivative over [0, 1]. Cheap to copy.
class DriftCurve {
public:
    explicit DriftCurve(const GerminationDistribution& d, int intervals = 256);
    double operator()(double x0) const;
    double mean_time() const { return mean_time_; }

private:
    struct Impl;
    std::shared_ptr<const Impl> impl_;
    double mean_time_ = 0.0;
};

/// d^2 Phi_0 / dx_0^2 as a callable: closed form for K = 1 and K = 2, a DriftCurve otherwise.
ScalarFn drift_function(const GerminationDistribution& d);

}  // namespace seedbank
