#include "kilab/orthopoly.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "kilab/errors.hpp"

namespace kilab {

namespace {

// Off-diagonal of the Jacobi matrix for orthonormal Gegenbauer polynomials,
// index lambda = alpha + 1/2.
double jacobi_offdiag(int k, double lambda) {
  const double kk = k;
  return std::sqrt(kk * (kk + 2.0 * lambda - 1.0) /
                   (4.0 * (kk + lambda) * (kk + lambda - 1.0)));
}

// Orthonormal recurrence at t: returns p_count(t) and its derivative, and
// accumulates sum_{k<count} p_k(t)^2.
struct RecurrenceValue {
  double p;
  double dp;
  double sum_sq;
};

RecurrenceValue orthonormal_eval(const std::vector<double>& b, int count, double t) {
  double p_prev = 0.0, p = 1.0;
  double dp_prev = 0.0, dp = 0.0;
  double sum_sq = 0.0;
  for (int k = 0; k < count; ++k) {
    sum_sq += p * p;
    const double bk = k > 0 ? b[k - 1] : 0.0;
    const double bn = b[k];
    const double p_next = (t * p - bk * p_prev) / bn;
    const double dp_next = (p + t * dp - bk * dp_prev) / bn;
    p_prev = p;
    p = p_next;
    dp_prev = dp;
    dp = dp_next;
  }
  return {p, dp, sum_sq};
}

}  // namespace

GaussRule gauss_gegenbauer(int count, double alpha) {
  if (count < 1) throw ConfigError("gauss_gegenbauer: count must be >= 1");
  if (!(alpha > -1.0)) throw ConfigError("gauss_gegenbauer: alpha must exceed -1");
  const double lambda = alpha + 0.5;

  GaussRule rule;
  if (count == 1) {
    rule.nodes = {0.0};
    rule.weights = {1.0};
    return rule;
  }
  // coupling[k] multiplies p_{k+1} in t*p_k = coupling[k]*p_{k+1} + coupling[k-1]*p_{k-1}.
  std::vector<double> coupling(count + 1);
  for (int k = 0; k <= count; ++k) coupling[k] = jacobi_offdiag(k + 1, lambda);

  Eigen::VectorXd diag = Eigen::VectorXd::Zero(count);
  Eigen::VectorXd sub(count - 1);
  for (int k = 0; k < count - 1; ++k) sub(k) = coupling[k];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw NumericalError("gauss_gegenbauer: tridiagonal eigensolver failed");

  rule.nodes.resize(count);
  rule.weights.resize(count);
  for (int i = 0; i < count; ++i) {
    double t = solver.eigenvalues()(i);
    for (int it = 0; it < 3; ++it) {
      const auto v = orthonormal_eval(coupling, count, t);
      if (v.dp == 0.0) break;
      const double step = v.p / v.dp;
      t -= step;
      if (std::abs(step) < 1e-17) break;
    }
    rule.nodes[i] = t;
  }
  // Enforce exact symmetry of the rule about 0.
  for (int i = 0; i < count / 2; ++i) {
    const double t = 0.5 * (rule.nodes[count - 1 - i] - rule.nodes[i]);
    rule.nodes[i] = -t;
    rule.nodes[count - 1 - i] = t;
  }
  if (count % 2 == 1) rule.nodes[count / 2] = 0.0;

  double total = 0.0;
  for (int i = 0; i < count; ++i) {
    rule.weights[i] = 1.0 / orthonormal_eval(coupling, count, rule.nodes[i]).sum_sq;
    total += rule.weights[i];
  }
  for (auto& w : rule.weights) w /= total;
  for (int i = 0; i < count / 2; ++i) {
    const double w = 0.5 * (rule.weights[i] + rule.weights[count - 1 - i]);
    rule.weights[i] = rule.weights[count - 1 - i] = w;
  }
  return rule;
}

void sphere_legendre_all(int dim, double t, std::span<double> out) {
  if (out.empty()) return;
  out[0] = 1.0;
  if (out.size() == 1) return;
  out[1] = t;
  const double d = dim;
  for (std::size_t n = 1; n + 1 < out.size(); ++n) {
    const double nn = static_cast<double>(n);
    out[n + 1] = ((2.0 * nn + d - 2.0) * t * out[n] - nn * out[n - 1]) / (nn + d - 2.0);
  }
}

double sphere_legendre(int degree, int dim, double t) {
  std::vector<double> v(degree + 1);
  sphere_legendre_all(dim, t, v);
  return v[degree];
}

double harmonic_multiplicity(int degree, int dim) {
  if (degree == 0) return 1.0;
  if (dim == 2) return 2.0;
  const double n = degree, d = dim;
  // binom(n + d - 2, n) = prod_{j=1}^{d-2} (n + j) / j
  double binom = 1.0;
  for (int j = 1; j <= dim - 2; ++j) binom *= (n + j) / j;
  return (2.0 * n + d - 2.0) / (n + d - 2.0) * binom;
}

}  // namespace kilab
