#include <catch_amalgamated.hpp>

#include <cmath>

#include "seedbank/manifold_reduction.hpp"
#include "seedbank/seedbank_flows.hpp"
#include "test_support.hpp"

using namespace seedbank;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using testing::max_abs;

namespace {

double k1_drift_oracle(double b0, double x) {
    const double c = 1.0 - b0, y = 1.0 - x;
    return c * (2.0 - c * c * y * y) / std::pow(c * y + 1.0, 3);
}

/// The K = 2 rational expression with the constant term written as B(4 - B^2 t^2);
/// t_power = 0 gives the reference variant.
double k2_drift_oracle(const GerminationDistribution& d, double x, int t_power) {
    const double b0 = d.b(0), b1 = d.b(1), b2 = d.b(2), bm = d.mean_time();
    const double y = 1.0 - x, c = 1.0 - b0;
    const double num = y * (bm * c * (1.0 - c * y) * (bm * y + 2.0) + b2 * (2.0 * b1 + 3.0 * b2)) +
                       bm * (4.0 - bm * bm * std::pow(y, 2 * t_power));
    return num / (std::pow(bm * y + 1.0, 3) * (c * y + 2.0));
}

/// Reference K = 1 mixed and pure mark derivatives.
FastSecondDerivatives fast_k1_printed_oracle(double b0, double x) {
    const double c = 1.0 - b0, y = 1.0 - x;
    const double d3 = std::pow(c * y + 1.0, 3), e = c * y + 2.0;
    FastSecondDerivatives out;
    out.d2_x0_ups0 = (c * c * y + c * (1.0 - 2.0 * x)) / d3 -
                     c * c * y * y * (c * c * x * x - c * (4.0 - b0) * x + (2.0 - b0)) / (d3 * e);
    out.d2_ups0_ups0 = 2.0 * c * c * x * y * (c * y * y + (1.0 - 2.0 * x)) / d3 +
                       c * c * x * y * y * (c * c * x * x - c * (5.0 - b0) * x + (4.0 - b0)) / (d3 * e);
    return out;
}

/// Four-term definition of h from the three second derivatives.
double h_oracle(double x, double b0, double phi2, double d2_x_ups, double d2_ups_ups) {
    const double c = 1.0 - b0;
    return c * c * x * (1.0 - x) * phi2 + d2_ups_ups / (x * (1.0 - x)) - 2.0 * c * d2_x_ups +
           2.0 * c * ((1.0 - x) + b0 * x) / (c * (1.0 - x) + 1.0);
}

SlowEnvSpec box_env() {
    return {0.5, 1.5, [](double xi) { return 1.0 - xi; }, [](double xi) { return (xi - 0.5) * (1.5 - xi); }};
}

}  // namespace

TEST_CASE("flow evaluation", "[seedbank_flows]") {
    const auto d = GerminationDistribution::from({0.5, 0.5});
    const FlowField f = build_flow({FlowTag::Constant, d, std::nullopt});
    Vec z(2);
    z << 0.0, 1.0;
    const Vec fz = f.eval(z);
    CHECK_THAT(fz[0], WithinAbs(1.0 / 3.0, 1e-15));
    CHECK(fz[1] == -1.0);

    std::mt19937_64 rng(20);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 1 + trial % 5;
        const auto dk = testing::random_distribution(k, rng);
        for (const FlowTag tag : {FlowTag::Constant, FlowTag::Linearized, FlowTag::FastEnv}) {
            const FlowKind kind{tag, dk, std::nullopt};
            CHECK(build_flow(kind).eval(gamma_point(kind, testing::uniform(rng))).norm() < 1e-14);
        }
    }
    CHECK(FlowKind{FlowTag::Constant, d, std::nullopt}.dim() == 2);
    CHECK(FlowKind{FlowTag::SlowEnv, d, box_env()}.dim() == 3);
    CHECK(FlowKind{FlowTag::FastEnv, GerminationDistribution::from({0.5, 0.3, 0.2}), std::nullopt}.dim() == 5);
}

TEST_CASE("slow-environment flow is a time change of the constant flow", "[seedbank_flows][property]") {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 100; ++trial) {
        const int k = 1 + trial % 4;
        const auto d = testing::random_distribution(k, rng);
        const FlowField slow = build_flow({FlowTag::SlowEnv, d, box_env()});
        const FlowField cst = build_flow({FlowTag::Constant, d, std::nullopt});
        const double xi = testing::uniform(rng, 0.5, 1.5);
        Vec z(k + 2);
        for (int i = 0; i <= k; ++i) z[i] = testing::uniform(rng, 0.0, std::min(xi, 1.0));
        z[k + 1] = xi;
        const Vec fs = slow.eval(z);
        const Vec fc = cst.eval(z.head(k + 1) / xi);
        CHECK(max_abs(fs.head(k + 1) - xi * fc) < 1e-12);
        CHECK(fs[k + 1] == 0.0);
    }
    const auto d = GerminationDistribution::from({0.5, 0.5});
    const FlowField slow = build_flow({FlowTag::SlowEnv, d, box_env()});
    Vec bad(3);
    bad << 0.9, 0.5, 0.8;
    CHECK_THROWS_AS(slow.eval(bad), Error);
}

TEST_CASE("Jacobians on the diagonal", "[seedbank_flows]") {
    const auto d = GerminationDistribution::from({0.5, 0.5});
    const Mat j = jacobian_on_gamma({FlowTag::Constant, d, std::nullopt}, 0.0);
    Mat expect(2, 2);
    expect << -0.5, 0.5, 1.0, -1.0;
    CHECK(max_abs(j - expect) == 0.0);

    const auto d3 = GerminationDistribution::from({0.4, 0.3, 0.2, 0.1});
    CHECK(jacobian_on_gamma({FlowTag::Constant, d3, std::nullopt}, 1.0).row(0).norm() == 0.0);

    const Mat jf = jacobian_on_gamma({FlowTag::FastEnv, d, std::nullopt}, 0.3);
    REQUIRE(jf.rows() == 3);
    CHECK_THAT(jf(0, 2), WithinAbs(0.5 * 0.3 * 0.7, 1e-15));

    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 40; ++trial) {
        const int k = 1 + trial % 4;
        const auto dk = testing::random_distribution(k, rng);
        const double x = testing::uniform(rng);
        for (const FlowTag tag : {FlowTag::Constant, FlowTag::Linearized, FlowTag::FastEnv}) {
            const FlowKind kind{tag, dk, std::nullopt};
            const FlowField f = build_flow(kind);
            CHECK(max_abs(jacobian_on_gamma(kind, x) - numeric_jacobian(f, gamma_point(kind, x))) < 1e-6);
        }
        const FlowKind slow{FlowTag::SlowEnv, dk, box_env()};
        const double xi = testing::uniform(rng, 0.6, 1.4);
        const double x0 = x * std::min(xi, 1.0);
        CHECK(max_abs(jacobian_on_gamma(slow, x0, xi) - numeric_jacobian(build_flow(slow), gamma_point(slow, x0, xi))) <
              1e-6);
    }
}

TEST_CASE("Hessians of F0 on the diagonal", "[seedbank_flows][property]") {
    std::mt19937_64 rng(26);
    for (int trial = 0; trial < 40; ++trial) {
        const int k = 1 + trial % 5;
        const auto d = testing::random_distribution(k, rng);
        const double x = testing::uniform(rng);
        const double c = 1.0 - d.b(0), y = 1.0 - x;
        Mat oracle(k + 1, k + 1);
        oracle(0, 0) = 2.0 * c - 2.0 * c * c * y;
        for (int i = 1; i <= k; ++i) {
            oracle(0, i) = oracle(i, 0) = 2.0 * d.b(i) * c * y - d.b(i);
            for (int j = 1; j <= k; ++j) oracle(i, j) = -2.0 * d.b(i) * d.b(j) * y;
        }
        const FlowKind kind{FlowTag::Constant, d, std::nullopt};
        const FlowField f = build_flow(kind);
        const Vec z = gamma_point(kind, x);
        CHECK(max_abs(hessian_f0_on_gamma(d, x) - oracle) < 1e-12);
        CHECK(max_abs(f.hess(z)[0] - oracle) < 1e-12);
        CHECK(max_abs(numeric_hessians(f, z)[0] - oracle) < 1e-6);

        // Hess F0 = Hess G0 + 2(1-x) Delta
        const Mat hg = build_flow({FlowTag::Linearized, d, std::nullopt}).hess(z)[0];
        CHECK(max_abs(oracle - hg - 2.0 * y * delta_matrix(d).m) < 1e-12);

        const FlowKind fast{FlowTag::FastEnv, d, std::nullopt};
        const FlowField ff = build_flow(fast);
        CHECK(max_abs(ff.hess(gamma_point(fast, x))[0] - numeric_hessians(ff, gamma_point(fast, x))[0]) < 1e-6);
    }
}

TEST_CASE("closed-form null vectors", "[seedbank_flows]") {
    const auto d = GerminationDistribution::from({0.5, 0.5});
    const NullEigenpair e = eigvecs_on_gamma({FlowTag::Constant, d, std::nullopt}, 0.0);
    CHECK(e.u == Vec::Ones(2));
    CHECK_THAT(e.v[0], WithinAbs(2.0 / 3.0, 1e-15));
    CHECK_THAT(e.v[1], WithinAbs(1.0 / 3.0, 1e-15));

    const NullEigenpair ef = eigvecs_on_gamma({FlowTag::FastEnv, d, std::nullopt}, 0.4);
    CHECK(ef.u[0] == 1.0);
    CHECK(ef.u[1] == 1.0);
    CHECK(ef.u[2] == 0.0);

    CHECK_THROWS_AS(eigvecs_on_gamma({FlowTag::SlowEnv, d, box_env()}, 0.4), Error);

    std::mt19937_64 rng(28);
    for (int trial = 0; trial < 40; ++trial) {
        const int k = 1 + trial % 5;
        const auto dk = testing::random_distribution(k, rng);
        const double x = testing::uniform(rng);
        for (const FlowTag tag : {FlowTag::Constant, FlowTag::FastEnv}) {
            const FlowKind kind{tag, dk, std::nullopt};
            const Mat j = jacobian_on_gamma(kind, x);
            const NullEigenpair p = eigvecs_on_gamma(kind, x);
            CHECK((j * p.u).norm() < 1e-13);
            CHECK((j.transpose() * p.v).norm() < 1e-13);
            CHECK_THAT(p.u.dot(p.v), WithinAbs(1.0, 1e-14));
        }
    }
}

TEST_CASE("closed-form Theta of the linearized flow", "[seedbank_flows]") {
    const auto d = GerminationDistribution::from({0.5, 0.3, 0.2});
    CHECK(max_abs(theta_g_closed(d, 1.0)) == 0.0);
    const auto d1 = GerminationDistribution::from({0.5, 0.5});
    CHECK_THAT(theta_g_closed(d1, 0.0)(0, 0), WithinAbs(-2.0 / 27.0, 1e-15));

    std::mt19937_64 rng(30);
    for (int k = 1; k <= 6; ++k)
        for (int trial = 0; trial < 8; ++trial) {
            const auto dk = testing::random_distribution(k, rng);
            const double x = testing::uniform(rng);
            const Mat t = theta_g_closed(dk, x);
            CHECK((t * Vec::Ones(k + 1)).norm() < 1e-14);
            const FlowKind kind{FlowTag::Linearized, dk, std::nullopt};
            const ReductionResult r = reduce(build_flow(kind), diagonal_chart(k + 1, k + 1), x);
            CHECK(max_abs(r.theta - t) < 1e-9);
        }
}

TEST_CASE("Delta matrix", "[seedbank_flows]") {
    const auto d = GerminationDistribution::from({0.5, 0.5});
    const DeltaMatrix dm = delta_matrix(d);
    CHECK_THAT(dm.spectrum[0], WithinAbs(-0.5, 1e-15));
    CHECK(delta_matrix(GerminationDistribution::from({1.0, 0.0})).m.norm() == 0.0);

    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 30; ++trial) {
        const int k = 1 + trial % 6;
        const auto dk = testing::random_distribution(k, rng);
        const DeltaMatrix m = delta_matrix(dk);
        CHECK((m.m * Vec::Ones(k + 1)).norm() < 1e-14);
        Eigen::SelfAdjointEigenSolver<Mat> es(m.m);
        Vec ev = es.eigenvalues();
        std::sort(ev.data(), ev.data() + ev.size());
        CHECK((ev - m.spectrum).cwiseAbs().maxCoeff() < 1e-12);
        double ss = std::pow(1.0 - dk.b(0), 2);
        for (int i = 1; i <= k; ++i) ss += dk.b(i) * dk.b(i);
        CHECK_THAT(m.spectrum[0], WithinAbs(-ss, 1e-14));
    }
}

TEST_CASE("drift bound", "[seedbank_flows]") {
    CHECK(drift_bound(0.0, 0.3) == 0.0);
    CHECK_THAT(drift_bound(1.0, 0.0), WithinAbs(0.375, 1e-15));
    CHECK_THAT(drift_bound(1.7, 1.0), WithinAbs(3.4, 1e-15));
}

TEST_CASE("K=1 drift matches its closed form", "[seedbank_flows]") {
    std::mt19937_64 rng(34);
    for (int trial = 0; trial < 50; ++trial) {
        const double b0 = testing::uniform(rng, 0.01, 1.0);
        const double x = testing::uniform(rng);
        const auto d = GerminationDistribution::from({b0, 1.0 - b0});
        CHECK_THAT(drift_second_derivative(d, x), WithinAbs(k1_drift_oracle(b0, x), 1e-9));
        CHECK_THAT(drift_k1_closed(b0, x), WithinAbs(k1_drift_oracle(b0, x), 1e-14));
        CHECK_THAT(drift_via_pipeline(d, x), WithinAbs(k1_drift_oracle(b0, x), 1e-8));
    }
}

TEST_CASE("K=2 drift: corrected constant term", "[seedbank_flows]") {
    std::mt19937_64 rng(36);
    for (int trial = 0; trial < 50; ++trial) {
        const auto d = testing::random_distribution(2, rng);
        const double x = testing::uniform(rng);
        const double lib = drift_second_derivative(d, x);
        CHECK_THAT(lib, WithinAbs(k2_drift_oracle(d, x, 1), 1e-9));
        CHECK_THAT(drift_k2_closed(d, x), WithinAbs(k2_drift_oracle(d, x, 1), 1e-13));
        CHECK_THAT(drift_k2_as_printed(d, x), WithinAbs(k2_drift_oracle(d, x, 0), 1e-13));
        CHECK_THAT(drift_via_pipeline(d, x), WithinAbs(lib, 1e-8));
    }
    // The reference variant agrees only at x0 = 0 and misses 2B at x0 = 1.
    const auto d = GerminationDistribution::from({0.5, 0.3, 0.2});
    CHECK_THAT(drift_k2_as_printed(d, 0.0), WithinAbs(drift_second_derivative(d, 0.0), 1e-12));
    CHECK(std::abs(drift_k2_as_printed(d, 0.6) - drift_second_derivative(d, 0.6)) > 1e-2);
    CHECK_THAT(drift_second_derivative(d, 1.0), WithinAbs(2.0 * d.mean_time(), 1e-12));
    CHECK(std::abs(drift_k2_as_printed(d, 1.0) - 2.0 * d.mean_time()) > 0.1);
}

TEST_CASE("drift second derivative: endpoint, bound and monotonicity", "[seedbank_flows][property]") {
    std::mt19937_64 rng(38);
    for (int trial = 0; trial < 60; ++trial) {
        const int k = 1 + trial % 6;
        const auto d = testing::random_distribution(k, rng, 0.01);
        const double bm = d.mean_time();
        CHECK_THAT(drift_second_derivative(d, 1.0), WithinAbs(2.0 * bm, 1e-10));
        double prev = -1.0;
        for (int i = 0; i <= 100; ++i) {
            const double x = i / 100.0;
            const double v = drift_second_derivative(d, x);
            CHECK(v <= drift_bound(bm, x) + 1e-12);
            CHECK(v > prev);
            prev = v;
        }
    }
}

TEST_CASE("drift curve and dispatcher", "[seedbank_flows]") {
    const auto d3 = GerminationDistribution::from({0.4, 0.3, 0.2, 0.1});
    const DriftCurve curve(d3);
    const ScalarFn f3 = drift_function(d3);
    CHECK(curve.mean_time() == d3.mean_time());
    for (int i = 0; i <= 40; ++i) {
        const double x = i / 40.0 - 0.0037 * (i > 0);
        CHECK_THAT(curve(x), WithinAbs(drift_second_derivative(d3, x), 1e-8));
        CHECK_THAT(f3(x), WithinAbs(drift_second_derivative(d3, x), 1e-8));
    }
    const auto d1 = GerminationDistribution::from({0.3, 0.7});
    CHECK(drift_function(d1)(0.4) == drift_k1_closed(0.3, 0.4));
    const auto d2 = GerminationDistribution::from({0.3, 0.3, 0.4});
    CHECK(drift_function(d2)(0.4) == drift_k2_closed(d2, 0.4));
}

TEST_CASE("fast environment second derivatives for K=1", "[seedbank_flows]") {
    const FastSecondDerivatives one = fast_second_derivatives_k1(1.0, 0.4);
    CHECK(one.d2_x0_ups0 == 0.0);
    CHECK(one.d2_ups0_ups0 == 0.0);
    CHECK(fast_second_derivatives_k1(0.3, 1.0).d2_ups0_ups0 == 0.0);

    std::mt19937_64 rng(40);
    for (int trial = 0; trial < 50; ++trial) {
        const double b0 = testing::uniform(rng, 0.05, 1.0);
        const double x = testing::uniform(rng, 0.01, 0.99);
        const auto d = GerminationDistribution::from({b0, 1.0 - b0});
        const FastSecondDerivatives lib = fast_second_derivatives_k1(b0, x);
        const FastSecondDerivatives pipe = fast_second_derivatives_pipeline(d, x);
        CHECK_THAT(lib.d2_x0_ups0, WithinAbs(pipe.d2_x0_ups0, 1e-8));
        CHECK_THAT(lib.d2_ups0_ups0, WithinAbs(pipe.d2_ups0_ups0, 1e-8));
        CHECK_THAT(fast_d2_ups0_ups0_reduced_k1(b0, x) * x * (1.0 - x), WithinAbs(lib.d2_ups0_ups0, 1e-13));

        const FastSecondDerivatives printed = fast_second_derivatives_k1_as_printed(b0, x);
        const FastSecondDerivatives oracle = fast_k1_printed_oracle(b0, x);
        CHECK_THAT(printed.d2_x0_ups0, WithinAbs(oracle.d2_x0_ups0, 1e-13));
        CHECK_THAT(printed.d2_ups0_ups0, WithinAbs(oracle.d2_ups0_ups0, 1e-13));
    }
    // The reference expressions leave the pipeline value at interior points.
    const FastSecondDerivatives p = fast_second_derivatives_pipeline(GerminationDistribution::from({0.5, 0.5}), 0.3);
    const FastSecondDerivatives q = fast_k1_printed_oracle(0.5, 0.3);
    CHECK(std::abs(p.d2_x0_ups0 - q.d2_x0_ups0) + std::abs(p.d2_ups0_ups0 - q.d2_ups0_ups0) > 1e-2);
}

TEST_CASE("fast-flow Theta restricted to the population block", "[seedbank_flows]") {
    std::mt19937_64 rng(42);
    for (int k = 1; k <= 2; ++k)
        for (int trial = 0; trial < 10; ++trial) {
            const auto d = testing::random_distribution(k, rng);
            const double x = testing::uniform(rng, 0.0, 0.95);
            const FlowKind fast{FlowTag::FastEnv, d, std::nullopt};
            const FlowKind cst{FlowTag::Constant, d, std::nullopt};
            const ReductionResult rf = reduce(build_flow(fast), diagonal_chart(2 * k + 1, k + 1), x,
                                              [&](double s) { return eigvecs_on_gamma(fast, s).v; });
            const ReductionResult rc = reduce(build_flow(cst), diagonal_chart(k + 1, k + 1), x);
            CHECK(max_abs(rf.theta.topLeftCorner(k + 1, k + 1) - rc.theta) < 1e-9);
        }
}

TEST_CASE("the fast-environment factor h", "[seedbank_flows]") {
    // Frozen from the Lyapunov pipeline: 5/6 at the corner.
    CHECK_THAT(h_function(0.0, 0.0), WithinAbs(5.0 / 6.0, 1e-14));
    CHECK_THAT(h_function(0.3, 0.5), WithinAbs(0.555023640661938, 1e-13));
    // The reference derivative expressions give the reference corner value.
    CHECK_THAT(h_function_as_printed(0.0, 0.0), WithinAbs(4.0 / 3.0, 1e-14));

    std::mt19937_64 rng(44);
    for (int trial = 0; trial < 30; ++trial) {
        const double b0 = testing::uniform(rng, 0.05, 1.0);
        const double x = testing::uniform(rng, 0.02, 0.98);
        const auto d = GerminationDistribution::from({b0, 1.0 - b0});
        const FastSecondDerivatives pipe = fast_second_derivatives_pipeline(d, x);
        const double oracle = h_oracle(x, b0, drift_via_pipeline(d, x), pipe.d2_x0_ups0, pipe.d2_ups0_ups0);
        CHECK_THAT(h_function(x, b0), WithinAbs(oracle, 1e-7));
        const FastSecondDerivatives pr = fast_k1_printed_oracle(b0, x);
        CHECK_THAT(h_function_as_printed(x, b0),
                   WithinAbs(h_oracle(x, b0, k1_drift_oracle(b0, x), pr.d2_x0_ups0, pr.d2_ups0_ups0), 1e-12));
    }

    double best = -1.0;
    int best_i = -1, best_j = -1;
    for (int i = 0; i <= 100; ++i)
        for (int j = 0; j <= 100; ++j) {
            const double h = h_function(i / 100.0, j / 100.0);
            CHECK(h >= 0.0);
            if (h > best) best = h, best_i = i, best_j = j;
        }
    CHECK(best_i == 0);
    CHECK(best_j == 0);
    for (int i = 0; i <= 20; ++i) CHECK(h_function(i / 20.0, 1.0) == 0.0);
}

TEST_CASE("slow-environment projection derivatives", "[seedbank_flows]") {
    std::mt19937_64 rng(46);
    for (int trial = 0; trial < 30; ++trial) {
        const int k = 1 + trial % 3;
        const auto d = testing::random_distribution(k, rng);
        const double xi = testing::uniform(rng, 0.6, 1.4);
        const double x0 = testing::uniform(rng, 0.05, 0.95) * std::min(xi, 1.0);
        const double bm = d.mean_time(), rho = x0 / xi;
        const SlowEnvDerivatives s = slow_env_derivatives(d, x0, xi);
        CHECK(s.d_xi == 0.0);
        CHECK(s.d2_xixi == 0.0);
        CHECK_THAT(s.d_x0, WithinAbs(1.0 / (bm * (1.0 - rho) + 1.0), 1e-13));
        CHECK_THAT(s.d2_x0x0, WithinAbs(drift_second_derivative(d, rho) / xi, 1e-9));
        const double h = 1e-5;
        const double fd =
            (slow_env_derivatives(d, x0, xi + h).d_x0 - slow_env_derivatives(d, x0, xi - h).d_x0) / (2.0 * h);
        CHECK_THAT(s.d2_x0xi, WithinAbs(fd, 1e-8));
        CHECK_THAT(s.d2_x0xi, WithinAbs(-bm * x0 / std::pow(bm * (xi - x0) + xi, 2), 1e-13));
    }
}

TEST_CASE("K=1 projection by characteristics", "[seedbank_flows]") {
    const FlowField f = build_flow({FlowTag::Constant, GerminationDistribution::from({0.4, 0.6}), std::nullopt});
    std::mt19937_64 rng(48);
    for (int trial = 0; trial < 20; ++trial) {
        Vec z(2);
        z << testing::uniform(rng, 0.0, 0.9), testing::uniform(rng);
        const double closed = k1_phi0_closed(0.4, z[0], z[1]);
        CHECK_THAT(project_to_manifold(f, z)[0], WithinAbs(closed, 1e-9));
        CHECK_THAT(k1_invariant(0.4, closed, closed), WithinAbs(k1_invariant(0.4, z[0], z[1]), 1e-10));
    }
}
