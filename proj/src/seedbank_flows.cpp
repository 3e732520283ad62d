#include "seedbank/seedbank_flows.hpp"

#include <cmath>
#include <utility>

#include <boost/math/interpolators/cardinal_quintic_b_spline.hpp>
#include <boost/math/tools/roots.hpp>

namespace seedbank {

const char* to_string(FlowTag tag) {
    switch (tag) {
        case FlowTag::Constant: return "constant";
        case FlowTag::Linearized: return "linearized";
        case FlowTag::SlowEnv: return "slow_env";
        case FlowTag::FastEnv: return "fast_env";
    }
    return "?";
}

int FlowKind::dim() const {
    const int k = d.k();
    switch (tag) {
        case FlowTag::SlowEnv: return k + 2;
        case FlowTag::FastEnv: return 2 * k + 1;
        default: return k + 1;
    }
}

namespace {

/// F_0 = P / Q (or P alone for the linearized flow) with value, gradient and Hessian of each part.
struct F0Parts {
    double p = 0.0, q = 1.0;
    Vec gp, gq;
    Mat hp, hq;
};

F0Parts f0_parts(const FlowKind& kind, const Vec& z) {
    const int n = kind.dim();
    const int k = kind.d.k();
    const double c = 1.0 - kind.d.b(0);
    const bool fast = kind.tag == FlowTag::FastEnv;

    const double a0 = kind.tag == FlowTag::SlowEnv ? z[k + 1] : 1.0;
    const double a = a0 - z[0];
    Vec ga = Vec::Zero(n);
    ga[0] = -1.0;
    if (kind.tag == FlowTag::SlowEnv) ga[k + 1] = 1.0;

    double s = 0.0;
    Vec gs = Vec::Zero(n);
    Mat hs = Mat::Zero(n, n);
    for (int i = 1; i <= k; ++i) {
        const double bi = kind.d.b(i);
        const double w = fast ? 1.0 + z[k + i] : 1.0;
        s += bi * w * z[i];
        gs[i] += bi * w;
        if (fast) {
            gs[k + i] += bi * z[i];
            hs(i, k + i) += bi;
            hs(k + i, i) += bi;
        }
    }
    const double l = s - c * z[0];
    Vec gl = gs;
    gl[0] -= c;

    F0Parts out;
    out.p = a * l;
    out.gp = l * ga + a * gl;
    out.hp = ga * gl.transpose() + gl * ga.transpose() + a * hs;
    if (kind.tag == FlowTag::Linearized) {
        out.gq = Vec::Zero(n);
        out.hq = Mat::Zero(n, n);
        return out;
    }
    out.q = a + kind.d.b(0) * z[0] + s;
    out.gq = ga + gs;
    out.gq[0] += kind.d.b(0);
    out.hq = hs;
    return out;
}

double f0_value(const F0Parts& r) { return r.p / r.q; }

Vec f0_grad(const F0Parts& r) { return r.gp / r.q - (r.p / (r.q * r.q)) * r.gq; }

Mat f0_hess(const F0Parts& r) {
    const double q2 = r.q * r.q;
    return r.hp / r.q - (r.gp * r.gq.transpose() + r.gq * r.gp.transpose()) / q2 - (r.p / q2) * r.hq +
           (2.0 * r.p / (q2 * r.q)) * (r.gq * r.gq.transpose());
}

Box flow_box(const FlowKind& kind) {
    const int n = kind.dim();
    const int k = kind.d.k();
    Box box{Vec::Zero(n), Vec::Ones(n)};
    if (kind.tag == FlowTag::SlowEnv) {
        box.hi.setConstant(kind.env->xi_max);
        box.lo[k + 1] = kind.env->xi_min;
    } else if (kind.tag == FlowTag::FastEnv) {
        box.lo.tail(k).setConstant(-1.0);
    }
    return box;
}

void check_domain(const FlowKind& kind, const Box& box, const Vec& z) {
    if (z.size() != kind.dim())
        throw Error(ErrorCode::InvalidArgument, "point has dimension " + std::to_string(z.size()));
    if (!box.contains(z, kDomainSlack))
        throw Error(ErrorCode::DomainViolation, "point outside the flow domain");
    if (kind.tag == FlowTag::SlowEnv && z[0] > z[kind.d.k() + 1] + kDomainSlack)
        throw Error(ErrorCode::DomainViolation, "x0 exceeds xi");
}

/// Rows 1..K (ageing) and the environment rows; row 0 is left untouched.
void fill_linear_rows(const FlowKind& kind, Mat& j) {
    const int k = kind.d.k();
    for (int i = 1; i <= k; ++i) {
        j(i, i - 1) = 1.0;
        j(i, i) = -1.0;
    }
    if (kind.tag == FlowTag::FastEnv) {
        for (int i = 0; i < k; ++i) {
            j(k + 1 + i, k + 1 + i) = -1.0;
            if (i >= 1) j(k + 1 + i, k + i) = 1.0;
        }
    }
}

void require_unit(double x0, const char* what) {
    if (!(x0 >= 0.0 && x0 <= 1.0)) throw Error(ErrorCode::DomainViolation, std::string(what) + " must lie in [0, 1]");
}

}  // namespace

FlowField build_flow(const FlowKind& kind) {
    if (kind.tag == FlowTag::SlowEnv) {
        if (!kind.env) throw Error(ErrorCode::InvalidArgument, "slow_env flow needs an environment spec");
        kind.env->validate();
    }
    FlowField f;
    f.dim = kind.dim();
    f.domain = flow_box(kind);
    const Box box = f.domain;
    const int k = kind.d.k();

    f.eval = [kind, box, k](const Vec& z) {
        check_domain(kind, box, z);
        Vec out = Vec::Zero(kind.dim());
        out[0] = f0_value(f0_parts(kind, z));
        for (int i = 1; i <= k; ++i) out[i] = z[i - 1] - z[i];
        if (kind.tag == FlowTag::FastEnv)
            for (int i = 0; i < k; ++i) out[k + 1 + i] = (i >= 1 ? z[k + i] : 0.0) - z[k + 1 + i];
        return out;
    };
    f.jac = [kind, box](const Vec& z) {
        check_domain(kind, box, z);
        Mat j = Mat::Zero(kind.dim(), kind.dim());
        j.row(0) = f0_grad(f0_parts(kind, z)).transpose();
        fill_linear_rows(kind, j);
        return j;
    };
    f.hess = [kind, box](const Vec& z) {
        check_domain(kind, box, z);
        const int n = kind.dim();
        std::vector<Mat> h(static_cast<std::size_t>(n), Mat::Zero(n, n));
        const F0Parts r = f0_parts(kind, z);
        h[0] = kind.tag == FlowTag::Linearized ? r.hp : f0_hess(r);
        return h;
    };
    return f;
}

Vec gamma_point(const FlowKind& kind, double x0, double xi) {
    const int k = kind.d.k();
    Vec z = Vec::Zero(kind.dim());
    z.head(k + 1).setConstant(x0);
    if (kind.tag == FlowTag::SlowEnv) z[k + 1] = xi;
    return z;
}

Mat jacobian_on_gamma(const FlowKind& kind, double x0, double xi) {
    const int k = kind.d.k();
    const int n = kind.dim();
    double x = x0;
    if (kind.tag == FlowTag::SlowEnv) {
        if (!(xi > 0.0)) throw Error(ErrorCode::DomainViolation, "xi must be positive");
        x = x0 / xi;
    }
    Mat j = Mat::Zero(n, n);
    j(0, 0) = -(1.0 - kind.d.b(0)) * (1.0 - x);
    for (int i = 1; i <= k; ++i) j(0, i) = kind.d.b(i) * (1.0 - x);
    if (kind.tag == FlowTag::FastEnv)
        for (int i = 1; i <= k; ++i) j(0, k + i) = kind.d.b(i) * x * (1.0 - x);
    fill_linear_rows(kind, j);
    return j;
}

NullEigenpair eigvecs_on_gamma(const FlowKind& kind, double x0) {
    if (kind.tag == FlowTag::SlowEnv)
        throw Error(ErrorCode::InvalidArgument, "slow_env has a two-dimensional null space");
    const int k = kind.d.k();
    const int n = kind.dim();
    const double dd = kind.d.mean_time() * (1.0 - x0) + 1.0;
    NullEigenpair e;
    e.u = Vec::Zero(n);
    e.u.head(k + 1).setOnes();
    e.v = Vec::Zero(n);
    e.v[0] = 1.0;
    for (int i = 1; i <= k; ++i) e.v[i] = kind.d.tail(i) * (1.0 - x0);
    if (kind.tag == FlowTag::FastEnv)
        for (int i = 1; i <= k; ++i) e.v[k + i] = kind.d.tail(i) * x0 * (1.0 - x0);
    e.v /= dd;
    return e;
}

Mat hessian_f0_on_gamma(const GerminationDistribution& d, double x0) {
    const int k = d.k();
    const double c = 1.0 - d.b(0);
    const double y = 1.0 - x0;
    Mat h(k + 1, k + 1);
    h(0, 0) = 2.0 * c - 2.0 * c * c * y;
    for (int j = 1; j <= k; ++j) h(0, j) = h(j, 0) = 2.0 * d.b(j) * c * y - d.b(j);
    for (int i = 1; i <= k; ++i)
        for (int j = 1; j <= k; ++j) h(i, j) = -2.0 * d.b(i) * d.b(j) * y;
    return h;
}

Mat theta_g_closed(const GerminationDistribution& d, double x0) {
    const int k = d.k();
    const double b = d.mean_time();
    const double y = 1.0 - x0;
    const double den = std::pow(b * y + 1.0, 3);
    Mat t(k + 1, k + 1);
    t(0, 0) = -b * b * y / den;
    for (int i = 1; i <= k; ++i) {
        t(0, i) = t(i, 0) = b * d.tail(i) * y / den;
        for (int j = 1; j <= k; ++j) t(i, j) = -d.tail(i) * d.tail(j) * y / den;
    }
    return t;
}

DeltaMatrix delta_matrix(const GerminationDistribution& d) {
    const int k = d.k();
    Vec w(k + 1);
    w[0] = -(1.0 - d.b(0));
    for (int i = 1; i <= k; ++i) w[i] = d.b(i);
    DeltaMatrix out;
    out.m = -(w * w.transpose());
    out.spectrum = Vec::Zero(k + 1);
    out.spectrum[0] = -w.squaredNorm();
    return out;
}

double drift_bound(double mean_time, double x0) {
    const double by = mean_time * (1.0 - x0);
    return mean_time * (by + 2.0) / std::pow(by + 1.0, 3);
}

double drift_second_derivative(const GerminationDistribution& d, double x0) {
    require_unit(x0, "x0");
    const FlowKind kind{FlowTag::Constant, d, std::nullopt};
    const Mat j = jacobian_on_gamma(kind, x0);
    const NullEigenpair e = eigvecs_on_gamma(kind, x0);
    const Mat p_s = Mat::Identity(j.rows(), j.cols()) - e.u * e.v.transpose();
    const Mat rhs = e.v[0] * p_s.transpose() * (2.0 * (1.0 - x0) * delta_matrix(d).m) * p_s;
    const Mat theta_delta = solve_lyapunov(j, rhs, e.u);
    return drift_bound(d.mean_time(), x0) - theta_delta(0, 0);
}

double drift_via_pipeline(const GerminationDistribution& d, double x0) {
    require_unit(x0, "x0");
    const FlowKind kind{FlowTag::Constant, d, std::nullopt};
    const int n = kind.dim();
    const ReductionResult r = reduce(build_flow(kind), diagonal_chart(n, n), x0,
                                     [kind](double x) { return eigvecs_on_gamma(kind, x).v; });
    return r.phi0_hess(0, 0);
}

double drift_k1_closed(double b0, double x0) {
    const double c = 1.0 - b0;
    const double y = 1.0 - x0;
    return c * (2.0 - c * c * y * y) / std::pow(c * y + 1.0, 3);
}

namespace {

double drift_k2_impl(const GerminationDistribution& d, double x0, bool as_printed) {
    if (d.k() != 2) throw Error(ErrorCode::UnsupportedK, "needs K = 2");
    const double c = 1.0 - d.b(0);
    const double b1 = d.b(1), b2 = d.b(2);
    const double bm = d.mean_time();
    const double y = 1.0 - x0;
    const double tail = as_printed ? bm * (4.0 - bm * bm) : bm * (4.0 - bm * bm * y * y);
    const double num = y * (bm * c * (1.0 - c * y) * (bm * y + 2.0) + b2 * (2.0 * b1 + 3.0 * b2)) + tail;
    return num / (std::pow(bm * y + 1.0, 3) * (c * y + 2.0));
}

}  // namespace

double drift_k2_closed(const GerminationDistribution& d, double x0) { return drift_k2_impl(d, x0, false); }

double drift_k2_as_printed(const GerminationDistribution& d, double x0) { return drift_k2_impl(d, x0, true); }

namespace {

double printed_d2_ups0_ups0_reduced(double b0, double x0) {
    const double c = 1.0 - b0;
    const double x = x0, y = 1.0 - x0;
    const double e = c * y + 1.0;
    const double e3 = e * e * e;
    return 2.0 * c * c * (c * y * y + (1.0 - 2.0 * x)) / e3 +
           c * c * y * (c * c * x * x - c * (5.0 - b0) * x + (4.0 - b0)) / (e3 * (e + 1.0));
}

double h_assemble(double x0, double b0, const FastSecondDerivatives& f, double d2_ups_reduced) {
    const double c = 1.0 - b0;
    const double y = 1.0 - x0;
    return c * c * x0 * y * drift_k1_closed(b0, x0) + d2_ups_reduced - 2.0 * c * f.d2_x0_ups0 +
           2.0 * c * (y + b0 * x0) / (c * y + 1.0);
}

}  // namespace

FastSecondDerivatives fast_second_derivatives_k1(double b0, double x0) {
    const double c = 1.0 - b0;
    const double y = 1.0 - x0;
    const double e = c * y + 1.0;
    const double den = e * e * e * (e + 1.0);
    const double c2 = c * c, c3 = c2 * c;
    FastSecondDerivatives out;
    out.d2_x0_ups0 = -c *
                     (c3 * y * y * y * y - c3 * y * y * y + 2.0 * c2 * y * y * y - 3.0 * c2 * y * y - c * y * y -
                      c * y - 3.0 * y + 2.0) /
                     den;
    out.d2_ups0_ups0 = x0 * y * fast_d2_ups0_ups0_reduced_k1(b0, x0);
    return out;
}

double fast_d2_ups0_ups0_reduced_k1(double b0, double x0) {
    const double c = 1.0 - b0;
    const double y = 1.0 - x0;
    const double e = c * y + 1.0;
    const double c2 = c * c;
    return c2 * (2.0 * c2 * y * y * y - c2 * y * y + 6.0 * c * y * y - 4.0 * c * y + 5.0 * y - 4.0) /
           (e * e * e * (e + 1.0));
}

FastSecondDerivatives fast_second_derivatives_k1_as_printed(double b0, double x0) {
    const double c = 1.0 - b0;
    const double x = x0, y = 1.0 - x0;
    const double e = c * y + 1.0;
    const double e3 = e * e * e;
    FastSecondDerivatives out;
    out.d2_x0_ups0 = (c * c * y + c * (1.0 - 2.0 * x)) / e3 -
                     c * c * y * y * (c * c * x * x - c * (4.0 - b0) * x + (2.0 - b0)) / (e3 * (e + 1.0));
    out.d2_ups0_ups0 = x * y * printed_d2_ups0_ups0_reduced(b0, x0);
    return out;
}

FastSecondDerivatives fast_second_derivatives_pipeline(const GerminationDistribution& d, double x0) {
    require_unit(x0, "x0");
    const FlowKind kind{FlowTag::FastEnv, d, std::nullopt};
    const int k = d.k();
    const ReductionResult r = reduce(build_flow(kind), diagonal_chart(kind.dim(), k + 1), x0,
                                     [kind](double x) { return eigvecs_on_gamma(kind, x).v; });
    return {r.phi0_hess(0, k + 1), r.phi0_hess(k + 1, k + 1)};
}

double h_function(double x0, double b0) {
    require_unit(x0, "x0");
    require_unit(b0, "b0");
    return h_assemble(x0, b0, fast_second_derivatives_k1(b0, x0), fast_d2_ups0_ups0_reduced_k1(b0, x0));
}

double h_function_as_printed(double x0, double b0) {
    require_unit(x0, "x0");
    require_unit(b0, "b0");
    return h_assemble(x0, b0, fast_second_derivatives_k1_as_printed(b0, x0), printed_d2_ups0_ups0_reduced(b0, x0));
}

SlowEnvDerivatives slow_env_derivatives(const GerminationDistribution& d, double x0, double xi) {
    if (!(xi > 0.0) || x0 < 0.0 || x0 > xi) throw Error(ErrorCode::DomainViolation, "need 0 <= x0 <= xi");
    const double b = d.mean_time();
    const double rho = x0 / xi;
    SlowEnvDerivatives out;
    out.d_x0 = 1.0 / (b * (1.0 - rho) + 1.0);
    out.d2_x0x0 = drift_second_derivative(d, rho) / xi;
    const double den = b * (xi - x0) + xi;
    out.d2_x0xi = -b * x0 / (den * den);
    return out;
}

double k1_invariant(double b0, double x0, double x1) {
    if (!(x0 >= 0.0 && x0 < 1.0)) throw Error(ErrorCode::DomainViolation, "x0 must lie in [0, 1)");
    const double c = 1.0 - b0;
    return (c * x1 + b0) / (1.0 - x0) - c * std::log1p(-x0);
}

double k1_phi0_closed(double b0, double x0, double x1) {
    if (x0 == 1.0) return 1.0;
    const double target = k1_invariant(b0, x0, x1);
    auto g = [b0, target](double phi) { return k1_invariant(b0, phi, phi) - target; };
    if (g(0.0) >= 0.0) return 0.0;
    double hi = 0.5;
    while (g(hi) < 0.0) hi = 1.0 - 0.5 * (1.0 - hi);
    std::uintmax_t iters = 200;
    const auto bracket = boost::math::tools::toms748_solve(g, 0.0, hi, boost::math::tools::eps_tolerance<double>(52), iters);
    return 0.5 * (bracket.first + bracket.second);
}

struct DriftCurve::Impl {
    boost::math::interpolators::cardinal_quintic_b_spline<double> spline;
};

DriftCurve::DriftCurve(const GerminationDistribution& d, int intervals) : mean_time_(d.mean_time()) {
    if (intervals < 8) throw Error(ErrorCode::InvalidArgument, "need at least 8 intervals");
    std::vector<double> y(static_cast<std::size_t>(intervals) + 1);
    const double h = 1.0 / intervals;
    for (int i = 0; i <= intervals; ++i) y[static_cast<std::size_t>(i)] = drift_second_derivative(d, std::min(1.0, i * h));
    impl_ = std::make_shared<const Impl>(Impl{boost::math::interpolators::cardinal_quintic_b_spline<double>(y, 0.0, h)});
}

double DriftCurve::operator()(double x0) const { return impl_->spline(std::clamp(x0, 0.0, 1.0)); }

ScalarFn drift_function(const GerminationDistribution& d) {
    if (d.k() == 1) {
        const double b0 = d.b(0);
        return [b0](double x0) { return drift_k1_closed(b0, std::clamp(x0, 0.0, 1.0)); };
    }
    if (d.k() == 2) return [d](double x0) { return drift_k2_closed(d, std::clamp(x0, 0.0, 1.0)); };
    return DriftCurve(d);
}

}  // namespace seedbank
