#include "kilab/linalg.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "kilab/errors.hpp"

namespace kilab {

namespace {

bool run_syevd(Eigen::MatrixXd& a, Eigen::VectorXd& w, char jobz) {
  const auto n = static_cast<lapack_int>(a.rows());
  w.resize(n);
  if (n == 0) return true;
  return LAPACKE_dsyevd(LAPACK_COL_MAJOR, jobz, 'L', n, a.data(), n, w.data()) == 0;
}

// Residuals ||A v - w v|| and orthonormality on a spread of eigenpairs.
bool verify(const Eigen::MatrixXd& a, const Eigen::VectorXd& w, const Eigen::MatrixXd& v) {
  const Eigen::Index n = a.rows();
  if (n == 0) return true;
  if (!w.allFinite() || !v.allFinite()) return false;
  const double scale = std::max({std::abs(w(0)), std::abs(w(n - 1)), 1e-300});
  const double tol = 1e-9 * scale * std::max<double>(1.0, std::sqrt(static_cast<double>(n)));
  const Eigen::Index probes = std::min<Eigen::Index>(n, 9);
  for (Eigen::Index k = 0; k < probes; ++k) {
    const Eigen::Index j = probes == 1 ? 0 : k * (n - 1) / (probes - 1);
    if ((a * v.col(j) - w(j) * v.col(j)).norm() > tol) return false;
    if (std::abs(v.col(j).squaredNorm() - 1.0) > 1e-8) return false;
    const Eigen::Index other = (j + n / 2) % n;
    if (other != j && std::abs(v.col(j).dot(v.col(other))) > 1e-8) return false;
  }
  return std::is_sorted(w.data(), w.data() + n);
}

bool verify_values(const Eigen::MatrixXd& a, const Eigen::VectorXd& w) {
  const Eigen::Index n = a.rows();
  if (n == 0) return true;
  if (!w.allFinite() || !std::is_sorted(w.data(), w.data() + n)) return false;
  const double scale = std::max({std::abs(w(0)), std::abs(w(n - 1)), 1e-300});
  return std::abs(w.sum() - a.trace()) <= 1e-9 * scale * static_cast<double>(n);
}

// Some optimized BLAS builds select broken kernels on unfamiliar CPUs. The
// backend is fixed once per process by a self-test so that results never
// depend on call history.
bool lapack_trusted() {
  static const bool trusted = [] {
    const Eigen::Index n = 512;
    Eigen::VectorXd t(n);
    for (Eigen::Index i = 0; i < n; ++i) t(i) = std::fmod(0.6180339887498949 * static_cast<double>(i + 1), 1.0);
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) a(i, j) = std::exp(-std::abs(t(i) - t(j)));
    Eigen::MatrixXd v = a;
    Eigen::VectorXd w, w_only;
    Eigen::MatrixXd work = a;
    return run_syevd(v, w, 'V') && verify(a, w, v) && run_syevd(work, w_only, 'N') &&
           (w_only - w).cwiseAbs().maxCoeff() <= 1e-10 * w.cwiseAbs().maxCoeff();
  }();
  return trusted;
}

}  // namespace

SymmetricEigen SymmetricEigen::compute(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw ConfigError("symmetric eigensolver: matrix is not square");
  SymmetricEigen out;
  if (lapack_trusted()) {
    out.vectors = a;
    if (run_syevd(out.vectors, out.values, 'V') && verify(a, out.values, out.vectors)) return out;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
  if (solver.info() != Eigen::Success) throw NumericalError("symmetric eigensolver did not converge");
  out.values = solver.eigenvalues();
  out.vectors = solver.eigenvectors();
  return out;
}

Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw ConfigError("symmetric eigensolver: matrix is not square");
  if (lapack_trusted()) {
    Eigen::MatrixXd work = a;
    Eigen::VectorXd w;
    if (run_syevd(work, w, 'N') && verify_values(a, w)) return w;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("symmetric eigensolver did not converge");
  return solver.eigenvalues();
}

const char* eigensolver_backend() { return lapack_trusted() ? "lapack" : "eigen"; }

}  // namespace kilab
