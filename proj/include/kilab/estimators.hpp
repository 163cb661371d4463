#pragma once

#include <Eigen/Dense>
#include <functional>

#include "kilab/geometry.hpp"
#include "kilab/kernels.hpp"

namespace kilab {

struct SolverDiagnostics {
  double min_eigenvalue = 0.0;  // of K(X,X)
  double max_eigenvalue = 0.0;
  double condition = 0.0;       // of K(X,X) + n lambda I
  std::size_t clipped = 0;      // negative round-off eigenvalues treated as 0
  double relative_residual = 0.0;
  int refinement_steps = 0;
};

/// Kernel ridge regression (lambda > 0) or minimum-norm interpolation
/// (lambda = 0): f(x) = K(x,X) c with (K(X,X) + n lambda I) c = Y.
struct FitResult {
  KernelSpec spec;
  Points X;
  GramMatrix gram;
  Eigen::VectorXd dual;
  double lambda = 0.0;
  SolverDiagnostics diagnostics;
};

/// Solves through the symmetric eigendecomposition of K(X,X). At lambda = 0
/// a minimum eigenvalue below n * 1e-12 raises InterpolationInfeasible; no
/// jitter is ever added.
FitResult fit(const KernelSpec& spec, const Points& X, const Eigen::VectorXd& Y, double lambda,
              unsigned workers = 1);

/// Same, reusing an existing Gram matrix (and its cached factorization).
FitResult fit(const KernelSpec& spec, const Points& X, const GramMatrix& gram, const Eigen::VectorXd& Y,
              double lambda);

/// Dual coefficients only; the building block of fit().
Eigen::VectorXd solve_dual(const GramMatrix& gram, const Eigen::VectorXd& Y, double lambda,
                           SolverDiagnostics* diagnostics = nullptr);

Eigen::VectorXd predict(const FitResult& fit, const Points& points, unsigned workers = 1);

using RegressionFunction = std::function<double(PointRef)>;

/// sum_j w_j (f_hat(x_j) - f*(x_j))^2.
double excess_risk(const FitResult& fit, const RegressionFunction& truth, const QuadratureGrid& grid,
                   unsigned workers = 1);

/// Same from precomputed values on the grid nodes.
double excess_risk(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truth_values,
                   const QuadratureGrid& grid);

}  // namespace kilab
