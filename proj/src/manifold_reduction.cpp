#include "seedbank/manifold_reduction.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/numeric/odeint.hpp>
#include <unsupported/Eigen/MatrixFunctions>

namespace seedbank {

bool Box::contains(const Vec& x, double slack) const {
    if (x.size() != lo.size()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (!(x[i] >= lo[i] - slack && x[i] <= hi[i] + slack)) return false;
    return true;
}

Mat numeric_jacobian(const FlowField& f, const Vec& x, double h) {
    const int n = f.dim;
    Mat j(n, n);
    for (int c = 0; c < n; ++c) {
        Vec xp = x, xm = x;
        xp[c] += h;
        xm[c] -= h;
        j.col(c) = (f.eval(xp) - f.eval(xm)) / (2.0 * h);
    }
    return j;
}

std::vector<Mat> numeric_hessians(const FlowField& f, const Vec& x, double h) {
    const int n = f.dim;
    std::vector<Mat> out(static_cast<std::size_t>(n), Mat::Zero(n, n));
    const Vec f0 = f.eval(x);
    for (int a = 0; a < n; ++a) {
        for (int b = a; b < n; ++b) {
            Vec d2;
            if (a == b) {
                Vec xp = x, xm = x;
                xp[a] += h;
                xm[a] -= h;
                d2 = (f.eval(xp) - 2.0 * f0 + f.eval(xm)) / (h * h);
            } else {
                Vec pp = x, pm = x, mp = x, mm = x;
                pp[a] += h; pp[b] += h;
                pm[a] += h; pm[b] -= h;
                mp[a] -= h; mp[b] += h;
                mm[a] -= h; mm[b] -= h;
                d2 = (f.eval(pp) - f.eval(pm) - f.eval(mp) + f.eval(mm)) / (4.0 * h * h);
            }
            for (int c = 0; c < n; ++c) {
                out[static_cast<std::size_t>(c)](a, b) = d2[c];
                out[static_cast<std::size_t>(c)](b, a) = d2[c];
            }
        }
    }
    return out;
}

Mat jacobian_at(const FlowField& f, const Vec& x) {
    return f.jac ? f.jac(x) : numeric_jacobian(f, x);
}

std::vector<Mat> hessians_at(const FlowField& f, const Vec& x) {
    return f.hess ? f.hess(x) : numeric_hessians(f, x);
}

ManifoldChart diagonal_chart(int dim, int active) {
    ManifoldChart c;
    c.gamma = [dim, active](double x) {
        Vec g = Vec::Zero(dim);
        g.head(active).setConstant(x);
        return g;
    };
    c.gamma_prime = [dim, active](double) {
        Vec g = Vec::Zero(dim);
        g.head(active).setOnes();
        return g;
    };
    c.gamma_second = [dim](double) { return Vec::Zero(dim); };
    c.straight = true;
    return c;
}

namespace {

Vec smallest_singular_vector(const Mat& a) {
    Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullV);
    return svd.matrixV().col(a.cols() - 1);
}

int count_null(const Eigen::VectorXcd& ev, double tol) {
    int n = 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (std::abs(ev[i]) < tol) ++n;
    return n;
}

std::string format_eigs(const Eigen::VectorXcd& ev) {
    std::ostringstream os;
    os.precision(6);
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (i) os << ", ";
        os << ev[i].real();
        if (ev[i].imag() != 0.0) os << (ev[i].imag() > 0 ? "+" : "") << ev[i].imag() << "i";
    }
    return os.str();
}

}  // namespace

NullEigenpair null_eigenpair(const Mat& j, double tol) {
    const Eigen::VectorXcd ev = Eigen::EigenSolver<Mat>(j, false).eigenvalues();
    const int nnull = count_null(ev, tol);
    if (nnull == 0) throw Error(ErrorCode::NoNullEigenvalue, "spectrum {" + format_eigs(ev) + "}");
    if (nnull > 1) throw Error(ErrorCode::MultipleNullEigenvalues, "spectrum {" + format_eigs(ev) + "}");

    NullEigenpair out;
    out.u = smallest_singular_vector(j);
    out.v = smallest_singular_vector(j.transpose());
    if (std::abs(out.u[0]) > 1e-12) {
        out.u /= out.u[0];
    } else {
        Eigen::Index lead = 0;
        out.u.cwiseAbs().maxCoeff(&lead);
        if (out.u[lead] < 0) out.u = -out.u;
    }
    const double uv = out.u.dot(out.v);
    if (std::abs(uv) < 1e-14) throw Error(ErrorCode::SingularSystem, "null vectors are orthogonal");
    out.v /= uv;
    return out;
}

SpectrumReport spectrum_report(const Mat& j, double tol) {
    SpectrumReport r;
    r.eigenvalues = Eigen::EigenSolver<Mat>(j, false).eigenvalues();
    const int nnull = count_null(r.eigenvalues, tol);
    std::vector<std::complex<double>> outside;
    for (Eigen::Index i = 0; i < r.eigenvalues.size(); ++i) {
        const auto lam = r.eigenvalues[i];
        if (std::abs(lam) < tol) continue;
        if (!(std::abs(lam + 1.0) < 1.0)) outside.push_back(lam);
    }
    if (nnull != 1) {
        r.reason = std::to_string(nnull) + " eigenvalues at 0 (expected 1)";
    } else if (!outside.empty()) {
        Eigen::VectorXcd bad(static_cast<Eigen::Index>(outside.size()));
        for (std::size_t i = 0; i < outside.size(); ++i) bad[static_cast<Eigen::Index>(i)] = outside[i];
        r.reason = "eigenvalues outside |lambda+1|<1: {" + format_eigs(bad) + "}";
    } else {
        r.ok = true;
    }
    return r;
}

SpectrumReport spectrum_gate(const Mat& j, double tol) {
    SpectrumReport r = spectrum_report(j, tol);
    if (!r.ok) throw Error(ErrorCode::SpectrumViolation, r.reason);
    return r;
}

Mat lyapunov_rhs(const std::vector<Mat>& hessians, const Vec& v, const Mat& p_s) {
    const Eigen::Index n = p_s.rows();
    Mat h = Mat::Zero(n, n);
    for (std::size_t i = 0; i < hessians.size(); ++i) h += v[static_cast<Eigen::Index>(i)] * hessians[i];
    return p_s.transpose() * h * p_s;
}

Mat solve_lyapunov(const Mat& j, const Mat& rhs, const Vec& u) {
    const int n = static_cast<int>(j.rows());
    const int m = n * (n + 1) / 2;
    Mat a = Mat::Zero(m + n, m);
    Vec rhs_vec = Vec::Zero(m + n);

    int row = 0;
    for (int r = 0; r < n; ++r)
        for (int c = r; c < n; ++c) rhs_vec[row++] = rhs(r, c);

    int col = 0;
    for (int p = 0; p < n; ++p) {
        for (int q = p; q < n; ++q, ++col) {
            Mat e = Mat::Zero(n, n);
            e(p, q) = 1.0;
            e(q, p) = 1.0;
            const Mat le = j.transpose() * e + e * j;
            row = 0;
            for (int r = 0; r < n; ++r)
                for (int c = r; c < n; ++c) a(row++, col) = le(r, c);
            const Vec eu = e * u;
            for (int r = 0; r < n; ++r) a(m + r, col) = eu[r];
        }
    }

    Eigen::ColPivHouseholderQR<Mat> qr(a);
    if (qr.rank() < m)
        throw Error(ErrorCode::SingularSystem,
                    "rank " + std::to_string(qr.rank()) + " < " + std::to_string(m));
    const Vec sol = qr.solve(rhs_vec);
    const double resid = (a * sol - rhs_vec).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, rhs_vec.cwiseAbs().maxCoeff());
    if (resid > 1e-8 * scale)
        throw Error(ErrorCode::SingularSystem, "inconsistent Lyapunov system, residual " + std::to_string(resid));

    Mat theta(n, n);
    col = 0;
    for (int p = 0; p < n; ++p)
        for (int q = p; q < n; ++q, ++col) theta(p, q) = theta(q, p) = sol[col];
    return theta;
}

Mat solve_theta(const Mat& j, const std::vector<Mat>& hessians, const Vec& v, const Mat& p_s,
                const Vec& u) {
    return solve_lyapunov(j, lyapunov_rhs(hessians, v, p_s), u);
}

Mat lyapunov_integral(const Mat& j, const Mat& rhs, double t_max, double quad_step) {
    if (!(t_max > 0.0) || !(quad_step > 0.0))
        throw Error(ErrorCode::InvalidArgument, "t_max and quad_step must be positive");
    using Rule = boost::math::quadrature::gauss<double, 10>;
    const auto& abscissa = Rule::abscissa();
    const auto& weights = Rule::weights();

    const Eigen::Index n = j.rows();
    const double h = quad_step;
    std::vector<Mat> node_exp;
    std::vector<double> node_w;
    for (std::size_t k = 0; k < abscissa.size(); ++k) {
        for (int sgn : {-1, 1}) {
            if (sgn < 0 && abscissa[k] == 0.0) continue;
            const double tau = 0.5 * h * (1.0 + sgn * abscissa[k]);
            node_exp.push_back((j * tau).exp());
            node_w.push_back(0.5 * h * weights[k]);
        }
    }
    const Mat step = (j * h).exp();

    Mat acc = Mat::Zero(n, n);
    Mat p = Mat::Identity(n, n);
    double t = 0.0;
    double horizon = t_max;
    const double cap = t_max * 1048576.0;
    while (true) {
        for (std::size_t k = 0; k < node_exp.size(); ++k) {
            const Mat m = p * node_exp[k];
            acc.noalias() += node_w[k] * (m.transpose() * rhs * m);
        }
        p = p * step;
        t += h;
        if (t >= horizon) {
            const double tail = (p.transpose() * rhs * p).cwiseAbs().maxCoeff();
            if (tail < 1e-12) break;
            horizon *= 2.0;
            if (horizon > cap)
                throw Error(ErrorCode::TruncationNotConverged, "integrand still " + std::to_string(tail));
        }
    }
    const Mat out = -acc;
    return 0.5 * (out + out.transpose());
}

Mat theta_integral(const Mat& j, const std::vector<Mat>& hessians, const Vec& v, const Mat& p_s,
                   double t_max, double quad_step) {
    return lyapunov_integral(j, lyapunov_rhs(hessians, v, p_s), t_max, quad_step);
}

DefinitenessReport definiteness_of(const Mat& m, double zero_tol) {
    DefinitenessReport r;
    r.eigenvalues = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly).eigenvalues();
    const double lo = r.eigenvalues.minCoeff();
    const double hi = r.eigenvalues.maxCoeff();
    if (lo >= -zero_tol) r.kind = Definiteness::PosSemidef;
    else if (hi <= zero_tol) r.kind = Definiteness::NegSemidef;
    else r.kind = Definiteness::Indefinite;
    return r;
}

const char* to_string(Definiteness d) {
    switch (d) {
        case Definiteness::PosSemidef: return "pos-semidef";
        case Definiteness::NegSemidef: return "neg-semidef";
        case Definiteness::Indefinite: return "indefinite";
    }
    return "?";
}

Phi0Derivatives phi0_derivatives(const ManifoldChart& chart, double x0, const Vec& v,
                                 const Vec& v_prime, const Mat& theta) {
    const Vec gp = chart.gamma_prime(x0);
    double norm = 1.0;
    double curvature = 2.0 * v_prime.dot(gp);
    if (!chart.straight) {
        norm = v.dot(gp);
        curvature += v.dot(chart.gamma_second(x0));
    }
    Phi0Derivatives out;
    out.grad = v / norm;
    const Eigen::Index n = v.size();
    out.hess.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index k = i; k < n; ++k) {
            const double val = (v_prime[i] * out.grad[k] + v_prime[k] * out.grad[i] - theta(i, k) -
                                out.grad[i] * out.grad[k] * curvature) / norm;
            out.hess(i, k) = out.hess(k, i) = val;
        }
    return out;
}

Vec v_prime_fd(const VOfX0& v_of, double x0, double h) {
    return (v_of(x0 + h) - v_of(x0 - h)) / (2.0 * h);
}

ReductionResult reduce(const FlowField& f, const ManifoldChart& chart, double x0, const VOfX0& v_of) {
    VOfX0 vf = v_of;
    if (!vf) {
        vf = [&f, &chart](double x) {
            const NullEigenpair np = null_eigenpair(jacobian_at(f, chart.gamma(x)));
            return Vec(np.v / np.v.dot(chart.gamma_prime(x)));
        };
    }
    ReductionResult r;
    r.point = chart.gamma(x0);
    const Mat j = jacobian_at(f, r.point);
    r.spectrum = spectrum_gate(j).eigenvalues;
    r.u = chart.gamma_prime(x0);
    r.v = vf(x0);
    r.p_c = r.u * r.v.transpose();
    r.p_s = Mat::Identity(f.dim, f.dim) - r.p_c;
    r.theta = solve_theta(j, hessians_at(f, r.point), r.v, r.p_s, r.u);
    const Phi0Derivatives d = phi0_derivatives(chart, x0, r.v, v_prime_fd(vf, x0), r.theta);
    r.phi0_grad = d.grad;
    r.phi0_hess = d.hess;
    return r;
}

Vec project_to_manifold(const FlowField& f, const Vec& x, double tol, double t_limit) {
    namespace odeint = boost::numeric::odeint;
    using State = std::vector<double>;
    const std::size_t n = static_cast<std::size_t>(f.dim);
    auto rhs = [&f, n](const State& s, State& ds, double) {
        const Vec fx = f.eval(Eigen::Map<const Vec>(s.data(), static_cast<Eigen::Index>(n)));
        for (std::size_t i = 0; i < n; ++i) ds[i] = fx[static_cast<Eigen::Index>(i)];
    };
    State s(x.data(), x.data() + x.size());
    auto stepper = odeint::make_controlled(1e-14, 1e-13, odeint::runge_kutta_dopri5<State>());
    double t = 0.0;
    double chunk = 1.0;
    double dt = 1e-3;
    while (t < t_limit) {
        odeint::integrate_adaptive(stepper, rhs, s, t, t + chunk, dt);
        t += chunk;
        chunk *= 1.5;
        const Vec fx = f.eval(Eigen::Map<const Vec>(s.data(), static_cast<Eigen::Index>(n)));
        if (fx.cwiseAbs().maxCoeff() < tol) return Eigen::Map<const Vec>(s.data(), static_cast<Eigen::Index>(n));
    }
    throw Error(ErrorCode::NoConvergence, "flow did not settle before t = " + std::to_string(t_limit));
}

}  // namespace seedbank
