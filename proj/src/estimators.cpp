#include "kilab/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "kilab/errors.hpp"

namespace kilab {

namespace {

constexpr double kInterpolationFloor = 1e-12;

double relative_residual(const Eigen::MatrixXd& raw, double shift, const Eigen::VectorXd& c,
                         const Eigen::VectorXd& y, Eigen::VectorXd* residual) {
  Eigen::VectorXd r = y - raw * c - shift * c;
  const double denom = std::max(y.norm(), 1e-300);
  const double rel = y.norm() == 0.0 ? r.norm() : r.norm() / denom;
  if (residual) *residual = std::move(r);
  return rel;
}

}  // namespace

Eigen::VectorXd solve_dual(const GramMatrix& gram, const Eigen::VectorXd& Y, double lambda,
                           SolverDiagnostics* diagnostics) {
  if (!(lambda >= 0.0)) throw ConfigError("fit: lambda must be >= 0");
  const auto n = static_cast<Eigen::Index>(gram.n());
  if (Y.size() != n) throw ConfigError("fit: Y has " + std::to_string(Y.size()) + " entries, expected " + std::to_string(n));

  const auto& eig = gram.eigen();
  const double max_ev = eig.max_value();
  const double min_ev = eig.min_value();
  if (min_ev < -1e-10 * std::max(std::abs(max_ev), 1e-300))
    throw ConsistencyError("fit: kernel matrix is not positive semidefinite (min eigenvalue " +
                           std::to_string(min_ev) + ")");
  const double shift = static_cast<double>(n) * lambda;
  if (lambda == 0.0 && !(min_ev > static_cast<double>(n) * kInterpolationFloor))
    throw InterpolationInfeasible(min_ev);

  Eigen::VectorXd denom(n);
  std::size_t clipped = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double v = eig.values(i);
    if (v < 0.0) {
      v = 0.0;
      ++clipped;
    }
    denom(i) = v + shift;
  }
  auto apply_inverse = [&](const Eigen::VectorXd& rhs) -> Eigen::VectorXd {
    Eigen::VectorXd coef = eig.vectors.transpose() * rhs;
    coef.array() /= denom.array();
    return eig.vectors * coef;
  };

  Eigen::VectorXd c = apply_inverse(Y);
  Eigen::VectorXd r;
  double rel = relative_residual(gram.raw(), shift, c, Y, &r);
  int steps = 0;
  // Iterative refinement with the same factorization.
  while (steps < 3 && rel > 1e-14) {
    Eigen::VectorXd candidate = c + apply_inverse(r);
    Eigen::VectorXd r2;
    const double rel2 = relative_residual(gram.raw(), shift, candidate, Y, &r2);
    if (!(rel2 < rel)) break;
    c = std::move(candidate);
    r = std::move(r2);
    rel = rel2;
    ++steps;
  }

  const double tolerance = lambda > 0.0 ? 1e-8 : 1e-6;
  if (rel > tolerance) {
    if (lambda == 0.0) throw InterpolationInfeasible(min_ev);
    throw NumericalError("fit: relative residual " + std::to_string(rel) + " exceeds " + std::to_string(tolerance));
  }
  if (diagnostics) {
    diagnostics->min_eigenvalue = min_ev;
    diagnostics->max_eigenvalue = max_ev;
    diagnostics->condition = (max_ev + shift) / std::max(std::max(min_ev, 0.0) + shift, 1e-300);
    diagnostics->clipped = clipped;
    diagnostics->relative_residual = rel;
    diagnostics->refinement_steps = steps;
  }
  return c;
}

FitResult fit(const KernelSpec& spec, const Points& X, const GramMatrix& gram, const Eigen::VectorXd& Y,
              double lambda) {
  FitResult out;
  out.spec = spec;
  out.X = X;
  out.gram = gram;
  out.lambda = lambda;
  out.dual = solve_dual(gram, Y, lambda, &out.diagnostics);
  return out;
}

FitResult fit(const KernelSpec& spec, const Points& X, const Eigen::VectorXd& Y, double lambda, unsigned workers) {
  return fit(spec, X, gram(spec, X, workers), Y, lambda);
}

Eigen::VectorXd predict(const FitResult& fit, const Points& points, unsigned workers) {
  return cross_gram(fit.spec, points, fit.X, workers) * fit.dual;
}

double excess_risk(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truth_values,
                   const QuadratureGrid& grid) {
  if (predictions.size() != grid.weights.size() || truth_values.size() != grid.weights.size())
    throw ConfigError("excess_risk: value vectors do not match the grid");
  return grid.weights.dot((predictions - truth_values).array().square().matrix());
}

double excess_risk(const FitResult& fit, const RegressionFunction& truth, const QuadratureGrid& grid,
                   unsigned workers) {
  Eigen::VectorXd t(grid.nodes.rows());
  for (Eigen::Index j = 0; j < grid.nodes.rows(); ++j) t(j) = truth(grid.nodes.row(j));
  return excess_risk(predict(fit, grid.nodes, workers), t, grid);
}

}  // namespace kilab
