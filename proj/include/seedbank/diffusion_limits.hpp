#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "seedbank/core_model.hpp"
#include "seedbank/manifold_reduction.hpp"

namespace seedbank {

/// Ito SDE dX = drift dt + diffusion dW on a box. Column j of the diffusion matrix is the
/// loading on the j-th independent Brownian motion.
struct SdeSpec {
    int dim = 1;
    int noise_dim = 1;
    std::function<Vec(const Vec&, double)> drift;
    std::function<Mat(const Vec&, double)> diffusion;
    Box domain;
    /// Absorbing values for each coordinate (may be empty).
    std::vector<std::vector<double>> absorbing;
    /// bounded_by[i] = j >= 0 means x_i <= x_j, and x_i = x_j absorbs coordinate i.
    std::vector<int> bounded_by;
};

/// 1-D diffusion of the mature-type frequency in a constant environment.
SdeSpec sde_constant(const GerminationDistribution& d);

enum class SlowVariable { Count, Proportion };

/// State (x0 or rho0, xi); noise columns (W_0, W_env).
SdeSpec sde_slow_env(const GerminationDistribution& d, const SlowEnvSpec& env, SlowVariable variable);

/// K = 1 only.
SdeSpec sde_fast_env(const GerminationDistribution& d, const FastEnvSpec& fenv);

/// Drift and noise loadings of the proportion form at (rho, xi).
struct ProportionCoefficients {
    double drift = 0.0;
    double noise_w0 = 0.0;
    double noise_env = 0.0;
};

/// phi2 is d^2 Phi_0 / d rho^2 at rho; alpha and eta are the environment coefficients at xi.
ProportionCoefficients proportion_coefficients(double phi2, double mean_time, double rho, double xi, double alpha,
                                               double eta);

struct Absorption {
    double time = 0.0;
    double value = 0.0;
    bool upper = false;  ///< hit the largest absorbing value or the bounding coordinate
};

struct SdePath {
    std::vector<double> times;
    std::vector<Vec> states;
    std::vector<std::optional<Absorption>> absorbed;  ///< per coordinate
    Vec final_state;
    double final_time = 0.0;
};

struct SdeOptions {
    bool record = true;
    int stride = 1;  ///< keep every stride-th step when recording
};

/// Euler-Maruyama with clamping to the box and a 1e-9 absorption snap. Stops once every
/// coordinate that can be absorbed has been absorbed, or at t_end.
SdePath integrate_sde(const SdeSpec& spec, const Vec& x0, double t_end, double dt, std::uint64_t seed,
                      const SdeOptions& opt = {});

/// Replicates of integrate_sde; fixation means coordinate 0 absorbed at its upper value.
FixationEstimate sde_fixation(const SdeSpec& spec, const Vec& x0, double t_end, double dt, long replicates,
                              std::uint64_t seed, int threads = 1);

/// S(v) = int_0^v exp(-2 int_0^w mu/sigma^2 dz) dw by nested Gauss-Kronrod quadrature on panels.
class ScaleFunction {
public:
    ScaleFunction(ScalarFn drift, ScalarFn diffusion, int panels = 32);
    double operator()(double v) const;
    /// (S(start) - S(0)) / (S(1) - S(0)).
    double fixation(double start) const;

private:
    double ratio(double z) const;
    double inner(double a, double b) const;
    double partial(int panel, double v) const;

    ScalarFn drift_;
    ScalarFn diffusion_;
    int panels_;
    std::vector<double> cum_inner_;  ///< int_0^{edge k} 2 mu / sigma^2
    std::vector<double> cum_scale_;  ///< S at edge k
};

double scale_fixation(const ScalarFn& drift, const ScalarFn& diffusion, double start);

/// Closed-form scale function (1 - e^{-Bv} + v e^{-Bv}) / (B + 1) of the bounding diffusion.
double bounding_scale(double mean_time, double v);

/// 1 - e^{-B psi} + psi e^{-B psi} with psi = psi_B(y).
double psi_cap(double mean_time, double y);

/// Noise-induced drift factor of the slow environment: the eta^2 / xi coefficient.
double g_function(const GerminationDistribution& d, double rho, double xi);

/// Same with d^2 Phi_0 replaced by its upper bound, in collected form.
double g_upper_bound(double mean_time, double rho, double xi);

/// (4 + xi_min) / (4 + 3 xi_min).
double rho_c(double xi_min);

/// 2 / xi_min.
double b_c(double xi_min);

/// dxi/dt = r xi (xi_inf - xi).
struct Logistic {
    double r = 20.0;
    double xi_inf = 1.0;
    double xi0 = 1.0;

    void validate() const;
    double xi(double t) const;
    double alpha(double xi) const { return r * xi * (xi_inf - xi); }
};

struct PdeGrid {
    int n_space = 2001;
    double dt = 0.002;
    double t_end = 0.0;  ///< minimum horizon; the solver extends it until the environment settles
    double theta = 0.5;  ///< implicit weight, 0.5 is Crank-Nicolson

    void validate() const;
};

struct KolmogorovResult {
    double value = 0.0;          ///< u(0, start_rho)
    std::vector<double> u0;      ///< u(0, .) on the grid
    std::vector<double> u_end;   ///< terminal closure at xi_inf
    double horizon = 0.0;
    bool monotone = true;        ///< non-decreasing in rho at every time slice
};

/// Backward equation for P(fixation | rho at time t) along the logistic environment with eta = 0.
KolmogorovResult kolmogorov_solve(const GerminationDistribution& d, const Logistic& env, double start_rho,
                                  const PdeGrid& grid = {});

double kolmogorov_fixation(const GerminationDistribution& d, const Logistic& env, double start_rho,
                           const PdeGrid& grid = {});

}  // namespace seedbank
