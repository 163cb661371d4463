#include "kilab/variance.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "kilab/errors.hpp"

namespace kilab {

namespace {

constexpr double kInterpolationFloor = 1e-12;

Eigen::VectorXd clipped_normalized(const SymmetricEigen& eig) {
  const double n = static_cast<double>(eig.size());
  return (eig.values.array().max(0.0) / n).matrix();
}

}  // namespace

VarianceIntegrator VarianceIntegrator::from_grid(const GramMatrix& gram, const KernelSpec& spec, const Points& X,
                                                 const QuadratureGrid& grid, unsigned workers) {
  if (static_cast<std::size_t>(X.rows()) != gram.n()) throw ConfigError("variance: X does not match the Gram matrix");
  if (grid.size() == 0) throw ConfigError("variance: empty integration grid");
  return from_cross(gram, cross_gram(spec, X, grid.nodes, workers), grid);
}

VarianceIntegrator VarianceIntegrator::from_cross(const GramMatrix& gram, const Eigen::MatrixXd& cross,
                                                  const QuadratureGrid& grid) {
  if (static_cast<std::size_t>(cross.rows()) != gram.n() || static_cast<std::size_t>(cross.cols()) != grid.size())
    throw ConfigError("variance: cross matrix must be n x (grid size)");
  if (grid.size() == 0) throw ConfigError("variance: empty integration grid");
  const auto& eig = gram.eigen();
  VarianceIntegrator v;
  v.mu_ = clipped_normalized(eig);
  v.min_raw_eigenvalue_ = eig.min_value();
  v.monte_carlo_ = grid.monte_carlo;
  v.nodes_ = grid.size();
  v.method_ = grid.monte_carlo ? "monte_carlo" : "quadrature";
  Eigen::MatrixXd projected = (eig.vectors.transpose() * cross).array().square().matrix();
  v.weights_ = projected * grid.weights;
  if (grid.monte_carlo) {
    v.projected_ = std::move(projected);
    v.node_weights_ = grid.weights;
  }
  return v;
}

VarianceIntegrator VarianceIntegrator::from_mercer(const GramMatrix& gram, const PeriodicFourier& kernel,
                                                   const Points& X) {
  if (static_cast<std::size_t>(X.rows()) != gram.n()) throw ConfigError("variance: X does not match the Gram matrix");
  const auto& eig = gram.eigen();
  VarianceIntegrator v;
  v.mu_ = clipped_normalized(eig);
  v.min_raw_eigenvalue_ = eig.min_value();
  v.method_ = "exact_mercer";
  // int K(X,x) K(x,X) dmu = Phi diag(c^2) Phi^T for orthonormal features Phi.
  const Eigen::MatrixXd projected = eig.vectors.transpose() * kernel.features(X);
  const Eigen::VectorXd c2 = kernel.feature_weights().array().square().matrix();
  v.weights_ = projected.array().square().matrix() * c2;
  v.nodes_ = static_cast<std::size_t>(c2.size());
  return v;
}

void VarianceIntegrator::check_lambda(double lambda) const {
  if (!(lambda >= 0.0)) throw ConfigError("variance: lambda must be >= 0");
  if (lambda == 0.0 && !(min_raw_eigenvalue_ > static_cast<double>(n()) * kInterpolationFloor))
    throw InterpolationInfeasible(min_raw_eigenvalue_);
}

double VarianceIntegrator::value(double sigma2, double lambda) const {
  check_lambda(lambda);
  const double n = static_cast<double>(this->n());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < mu_.size(); ++i) {
    const double d = mu_(i) + lambda;
    sum += weights_(i) / (d * d);
  }
  return sigma2 * sum / (n * n);
}

double VarianceIntegrator::standard_error(double sigma2, double lambda) const {
  if (!monte_carlo_) return 0.0;
  check_lambda(lambda);
  const double n = static_cast<double>(this->n());
  const Eigen::ArrayXd inv = 1.0 / (mu_.array() + lambda).square();
  // Per-node integrand values.
  const Eigen::VectorXd g = (projected_.transpose() * inv.matrix()) * (sigma2 / (n * n));
  const double r = static_cast<double>(g.size());
  if (r < 2) return 0.0;
  const double m = g.mean();
  const double var = (g.array() - m).square().sum() / (r - 1.0);
  return std::sqrt(var / r);
}

VarianceEstimate variance_term(const GramMatrix& gram, const KernelSpec& spec, const Points& X, double sigma2,
                               double lambda, const QuadratureGrid& grid, unsigned workers) {
  if (!(sigma2 > 0.0)) throw ConfigError("variance: sigma2 must be positive");
  const auto integ = VarianceIntegrator::from_grid(gram, spec, X, grid, workers);
  VarianceEstimate est;
  est.value = integ.value(sigma2, lambda);
  est.standard_error = integ.standard_error(sigma2, lambda);
  est.warning = integ.monte_carlo() && est.value > 0.0 && est.standard_error > 0.02 * est.value;
  return est;
}

double variance_operator_form(const GramMatrix& gram, const KernelSpec& spec, const Points& X, double sigma2,
                              double lambda, const QuadratureGrid& grid) {
  const double n = static_cast<double>(gram.n());
  Eigen::MatrixXd shifted = gram.normalized();
  shifted.diagonal().array() += lambda;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(shifted);
  if (ldlt.info() != Eigen::Success) throw NumericalError("variance_operator_form: LDLT failed");
  double integral = 0.0;
  for (Eigen::Index j = 0; j < grid.nodes.rows(); ++j) {
    Eigen::VectorXd h(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) h(i) = spec(X.row(i), grid.nodes.row(j));
    const Eigen::VectorXd z = ldlt.solve(h);
    // ||g||^2_{L2,n} = (1/n) sum_i g(x_i)^2 with g[X] = (K + lambda)^{-1} h_x[X].
    integral += grid.weights(j) * z.squaredNorm() / n;
  }
  return sigma2 * integral / n;
}

VarianceCurve variance_curve(const VarianceIntegrator& integrator, double sigma2, const std::vector<double>& lambdas,
                             bool include_zero) {
  if (!(sigma2 > 0.0)) throw ConfigError("variance: sigma2 must be positive");
  if (lambdas.empty() && !include_zero) throw ConfigError("variance_curve: empty lambda grid");
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    if (!(lambdas[k] > 0.0)) throw ConfigError("variance_curve: lambdas must be strictly positive");
    if (k > 0 && !(lambdas[k] > lambdas[k - 1])) throw ConfigError("variance_curve: lambdas must be strictly ascending");
  }
  VarianceCurve curve;
  curve.n = integrator.n();
  curve.sigma2 = sigma2;
  curve.integration = integrator.method();
  curve.nodes = integrator.nodes();
  std::vector<double> grid;
  if (include_zero) grid.push_back(0.0);
  grid.insert(grid.end(), lambdas.begin(), lambdas.end());
  for (double lam : grid) {
    VarianceEntry e;
    e.lambda = lam;
    e.value = integrator.value(sigma2, lam);
    e.standard_error = integrator.standard_error(sigma2, lam);
    e.warning = integrator.monte_carlo() && e.value > 0.0 && e.standard_error > 0.02 * e.value;
    curve.entries.push_back(e);
  }
  for (std::size_t k = 1; k < curve.entries.size(); ++k) {
    const double prev = curve.entries[k - 1].value, cur = curve.entries[k].value;
    if (cur > prev * (1.0 + 1e-10))
      throw ConsistencyError("variance_curve: V increased from " + std::to_string(prev) + " to " + std::to_string(cur) +
                             " between lambda = " + std::to_string(curve.entries[k - 1].lambda) + " and " +
                             std::to_string(curve.entries[k].lambda));
  }
  return curve;
}

VarianceCurve variance_curve(const KernelSpec& spec, const Points& X, double sigma2, const std::vector<double>& lambdas,
                             const QuadratureGrid& grid, bool include_zero, unsigned workers) {
  const GramMatrix g = gram(spec, X, workers);
  return variance_curve(VarianceIntegrator::from_grid(g, spec, X, grid, workers), sigma2, lambdas, include_zero);
}

double theoretical_variance(const SpectrumModel& spectrum, double sigma2, std::size_t n, double lambda) {
  if (n == 0) throw ConfigError("theoretical_variance: n must be positive");
  return sigma2 * effective_dimension(spectrum, lambda, 2.0).value / static_cast<double>(n);
}

}  // namespace kilab
