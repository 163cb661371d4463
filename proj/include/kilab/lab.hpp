#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "kilab/config.hpp"
#include "kilab/estimators.hpp"
#include "kilab/report.hpp"

namespace kilab {

/// Risk-integration grid described by the config (exact integration falls
/// back to the quadrature rule for risks).
QuadratureGrid integration_grid(const ExperimentConfig& config);

/// Log-log fit of the per-n medians of `values` against n, with a
/// percentile bootstrap band (seeds resampled within each n).
ExponentFit fit_exponent(const std::vector<std::size_t>& n, const std::vector<std::vector<double>>& values,
                         std::size_t bootstrap, std::uint64_t seed);

/// Interpolates noisy data for each (n, seed), records the excess risk and
/// V(0), and fits the exponent of the median risk in n. With noise redraws,
/// also checks the conditional bound mean risk >= V(0) - 3 stderr per cell.
ScalingReport run_interpolation_scaling(const ExperimentConfig& config, unsigned workers = 0);

/// Per-(n, seed) lambda sweeps of V with log-log slopes and the spread of
/// V n lambda^{1/beta} / sigma^2.
ScalingReport run_variance_scaling(const ExperimentConfig& config, unsigned workers = 0);

/// Two-sided bounds on the empirical semi-norm,
///   1/2 ||f||^2 - t <= ||f||_n^2 <= 3/2 ||f||^2 + t,  t = 5 M^2 ln(2/delta) / (3n).
struct SeminormBounds {
  double lower = 0.0;
  double upper = 0.0;
};
SeminormBounds seminorm_bounds(double l2_norm_squared, double sup_bound, std::size_t n, double delta);

/// <f, g>_{L2,n} = f[X]^T g[X] / n.
double empirical_inner_product(const Eigen::VectorXd& f_values, const Eigen::VectorXd& g_values);
double empirical_inner_product(const RegressionFunction& f, const RegressionFunction& g, const Points& X);

ScalingReport run_seminorm_concentration(const ExperimentConfig& config);

/// Trains two-layer networks of each configured width next to the NTK
/// interpolator on the same data and compares them on the risk grid.
ScalingReport run_ntk_pipeline(const ExperimentConfig& config, unsigned workers = 0);

/// Analytic and empirical spectra with decay fits and effective dimensions.
ScalingReport run_spectrum(const ExperimentConfig& config, unsigned workers = 0);

/// kappa^2, Holder constants, leading eigenvalues or blocks and beta_hat;
/// a human-readable table goes to `text`.
Json kernel_info(const ExperimentConfig& config, std::ostream& text);

}  // namespace kilab
