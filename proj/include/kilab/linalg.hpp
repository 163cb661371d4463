#pragma once

#include <Eigen/Dense>

namespace kilab {

/// Symmetric eigendecomposition A = Q diag(values) Q^T, values ascending.
/// LAPACK dsyevd when a one-time self-test passes, otherwise Eigen's solver.
/// Each LAPACK result is also checked on a spread of eigenpairs and recomputed
/// with Eigen if the check fails.
struct SymmetricEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;

  static SymmetricEigen compute(const Eigen::MatrixXd& a);

  Eigen::Index size() const { return values.size(); }
  double min_value() const { return values.size() ? values(0) : 0.0; }
  double max_value() const { return values.size() ? values(values.size() - 1) : 0.0; }
};

/// Eigenvalues only, ascending.
Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& a);

/// "lapack" or "eigen".
const char* eigensolver_backend();

}  // namespace kilab
