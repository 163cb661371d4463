#pragma once

#include <string>
#include <vector>

#include "kilab/geometry.hpp"
#include "kilab/kernels.hpp"
#include "kilab/spectral.hpp"

namespace kilab {

/// The noise-driven part of the conditional risk of KRR at fixed X,
///   V(lambda) = sigma^2 / n^2  int K(x,X) (K + lambda)^{-2} K(X,x) dmu(x),
/// with K = K(X,X)/n. The integral is reduced once to per-eigendirection
/// weights s_i = int (q_i^T K(X,x))^2 dmu, so any number of lambdas cost O(n)
/// each:  V(lambda) = sigma^2 / n^2 sum_i s_i / (mu_i + lambda)^2.
class VarianceIntegrator {
 public:
  /// Integrates over an independent grid (quadrature or Monte Carlo).
  static VarianceIntegrator from_grid(const GramMatrix& gram, const KernelSpec& spec, const Points& X,
                                      const QuadratureGrid& grid, unsigned workers = 1);
  /// Same, from a precomputed cross matrix K(X, grid.nodes) (n x R).
  static VarianceIntegrator from_cross(const GramMatrix& gram, const Eigen::MatrixXd& cross,
                                       const QuadratureGrid& grid);
  /// Exact integral for a finite Mercer expansion (orthonormal features).
  static VarianceIntegrator from_mercer(const GramMatrix& gram, const PeriodicFourier& kernel, const Points& X);

  std::size_t n() const { return static_cast<std::size_t>(mu_.size()); }
  bool monte_carlo() const { return monte_carlo_; }
  std::size_t nodes() const { return nodes_; }
  std::string method() const { return method_; }

  /// Throws InterpolationInfeasible at lambda = 0 for a singular K.
  double value(double sigma2, double lambda) const;
  /// Monte Carlo standard error (0 for deterministic rules).
  double standard_error(double sigma2, double lambda) const;

 private:
  void check_lambda(double lambda) const;
  Eigen::VectorXd mu_;        // eigenvalues of K(X,X)/n, clipped at 0
  Eigen::VectorXd weights_;   // s_i
  Eigen::MatrixXd projected_; // (q_i^T K(X,x_j))^2, kept for Monte Carlo error bars
  Eigen::VectorXd node_weights_;
  double min_raw_eigenvalue_ = 0.0;
  bool monte_carlo_ = false;
  std::size_t nodes_ = 0;
  std::string method_;
};

struct VarianceEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  /// Monte Carlo relative standard error above 2%.
  bool warning = false;
};

VarianceEstimate variance_term(const GramMatrix& gram, const KernelSpec& spec, const Points& X, double sigma2,
                               double lambda, const QuadratureGrid& grid, unsigned workers = 1);

/// Same integral through the empirical semi-norm,
///   V = sigma^2/n int ||(T_X + lambda)^{-1} k(x, .)||^2_{L2,n} dmu,
/// evaluated with an LDLT solve per node instead of the eigendecomposition.
double variance_operator_form(const GramMatrix& gram, const KernelSpec& spec, const Points& X, double sigma2,
                              double lambda, const QuadratureGrid& grid);

struct VarianceEntry {
  double lambda = 0.0;
  double value = 0.0;
  double standard_error = 0.0;
  bool warning = false;
};

struct VarianceCurve {
  std::size_t n = 0;
  double sigma2 = 0.0;
  std::vector<VarianceEntry> entries;  // ascending lambda
  std::string integration;
  std::size_t nodes = 0;
};

/// lambdas: strictly positive, ascending. With include_zero, V(0) is
/// prepended. Raises ConsistencyError if V increases in lambda beyond 1e-10
/// relative.
VarianceCurve variance_curve(const VarianceIntegrator& integrator, double sigma2, const std::vector<double>& lambdas,
                             bool include_zero = false);

VarianceCurve variance_curve(const KernelSpec& spec, const Points& X, double sigma2, const std::vector<double>& lambdas,
                             const QuadratureGrid& grid, bool include_zero = false, unsigned workers = 1);

/// sigma^2 N_2(lambda) / n.
double theoretical_variance(const SpectrumModel& spectrum, double sigma2, std::size_t n, double lambda);

}  // namespace kilab
