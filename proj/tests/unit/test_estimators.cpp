#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <random>

#include <cmath>

#include "kilab/random.hpp"
#include "kilab/errors.hpp"
#include "kilab/estimators.hpp"

using namespace kilab;

namespace {

Eigen::VectorXd gaussian_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = g(rng);
  return v;
}

double point_prediction(const FitResult& f, PointRef x) {
  Points p(1, x.size());
  p.row(0) = x;
  return predict(f, p)(0);
}

}  // namespace

TEST_CASE("one-point ridge fit shrinks by 1 / (1 + lambda)") {
  Points X(1, 1);
  X << 0.3;
  Eigen::VectorXd Y(1);
  Y << 1.0;
  const auto f = fit(KernelSpec::constant(), X, Y, 1.0);
  CHECK(predict(f, X)(0) == doctest::Approx(0.5).epsilon(1e-15));
  double prev = 1.0;
  for (double lam : {0.1, 1.0, 10.0, 100.0, 1e4}) {
    const double v = predict(fit(KernelSpec::constant(), X, Y, lam), X)(0);
    CHECK(v == doctest::Approx(1.0 / (1.0 + lam)));
    CHECK(v < prev);
    prev = v;
  }
  CHECK(prev < 1e-3);
}

TEST_CASE("constant kernel: singular at lambda = 0, 2/3 everywhere at lambda = 0.5") {
  Points X(2, 1);
  X << 0.1, 0.7;
  const Eigen::VectorXd Y = Eigen::VectorXd::Ones(2);
  try {
    (void)fit(KernelSpec::constant(), X, Y, 0.0);
    FAIL("expected InterpolationInfeasible");
  } catch (const InterpolationInfeasible& e) {
    CHECK(std::abs(e.min_eigenvalue()) < 1e-12);
  }
  const auto f = fit(KernelSpec::constant(), X, Y, 0.5);
  CHECK(f.dual(0) == doctest::Approx(1.0 / 3.0));
  CHECK(f.dual(1) == doctest::Approx(1.0 / 3.0));
  const Points grid = sample_iid(Domain::cube(1), 7, 3);
  for (double v : predict(f, grid)) CHECK(v == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("interpolation reproduces the data") {
  struct Case {
    KernelSpec spec;
    Domain domain;
    std::size_t n;
  };
  const std::vector<Case> cases{
      {KernelSpec::laplace(1.0), Domain::torus(1), 200},
      {KernelSpec::matern(1.5, 0.5), Domain::cube(2), 150},
      {KernelSpec::ntk2(), Domain::sphere(3), 120},
      {KernelSpec::periodic(PeriodicFourier::power_law(1, 2.0, 512)), Domain::torus(1), 128},
  };
  for (const auto& c : cases) {
    CAPTURE(c.spec.family_name());
    const Points X = sample_iid(c.domain, c.n, 5);
    const Eigen::VectorXd Y = gaussian_vector(c.n, 6);
    const auto f = fit(c.spec, X, Y, 0.0);
    const double tol = 1e-6 * (1.0 + Y.cwiseAbs().maxCoeff());
    CHECK((predict(f, X) - Y).cwiseAbs().maxCoeff() < tol);
    CHECK(f.diagnostics.relative_residual < 1e-6);
  }
}

TEST_CASE("ridge solves to tight residuals") {
  const Points X = sample_iid(Domain::torus(1), 100, 1);
  const Eigen::VectorXd Y = gaussian_vector(100, 2);
  const auto g = gram(KernelSpec::laplace(), X);
  for (double lam : {1e-6, 1e-3, 1.0}) {
    SolverDiagnostics d;
    const Eigen::VectorXd c = solve_dual(g, Y, lam, &d);
    const Eigen::VectorXd r = (g.raw() + 100 * lam * Eigen::MatrixXd::Identity(100, 100)) * c - Y;
    CHECK(r.norm() / Y.norm() < 1e-8);
    CHECK(d.relative_residual < 1e-8);
  }
}

TEST_CASE("zero targets give the zero function") {
  const Points X = sample_iid(Domain::sphere(3), 30, 2);
  const auto f = fit(KernelSpec::ntk2(), X, Eigen::VectorXd::Zero(30), 0.0);
  CHECK(f.dual.cwiseAbs().maxCoeff() == 0.0);
  CHECK(predict(f, sample_iid(Domain::sphere(3), 10, 3)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("linearity of the dual map") {
  const Points X = sample_iid(Domain::cube(2), 80, 4);
  const auto g = gram(KernelSpec::gaussian(0.5), X);
  const Eigen::VectorXd a = gaussian_vector(80, 1), b = gaussian_vector(80, 2);
  for (double lam : {1e-4, 0.1}) {
    const Eigen::VectorXd lhs = solve_dual(g, a + b, lam);
    const Eigen::VectorXd rhs = solve_dual(g, a, lam) + solve_dual(g, b, lam);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + lhs.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("ridge training residual is non-decreasing in lambda") {
  const Points X = sample_iid(Domain::torus(1), 90, 8);
  const Eigen::VectorXd Y = gaussian_vector(90, 9);
  const auto g = gram(KernelSpec::laplace(), X);
  double prev = -1.0;
  for (double lam : {0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1.0, 100.0}) {
    const auto f = fit(KernelSpec::laplace(), X, g, Y, lam);
    const double rss = (predict(f, X) - Y).squaredNorm();
    CHECK(rss >= prev - 1e-12);
    prev = rss;
  }
}

TEST_CASE("dual form agrees with the spectral form") {
  const std::size_t n = 120;
  const Points X = sample_iid(Domain::torus(1), n, 12);
  const Eigen::VectorXd Y = gaussian_vector(n, 13);
  const auto spec = KernelSpec::laplace();
  const auto g = gram(spec, X);
  const Points Z = sample_iid(Domain::torus(1), 40, 14);
  const Eigen::MatrixXd Kz = cross_gram(spec, Z, X);
  // Spectral route: (T_X + lambda)^{-1} g_Z through the eigenpairs of K/n.
  const Eigen::MatrixXd Kn = g.raw() / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Kn);
  for (double lam : {1e-5, 1e-2}) {
    const Eigen::VectorXd coef =
        es.eigenvectors() *
        ((es.eigenvectors().transpose() * Y).array() / (es.eigenvalues().array() + lam)).matrix() /
        static_cast<double>(n);
    const Eigen::VectorXd spectral = Kz * coef;
    const Eigen::VectorXd dual = predict(fit(spec, X, g, Y, lam), Z);
    CHECK((spectral - dual).cwiseAbs().maxCoeff() <= 1e-8 * (1.0 + dual.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("excess risk") {
  const Points X = sample_iid(Domain::torus(1), 20, 1);
  const auto f = fit(KernelSpec::laplace(), X, gaussian_vector(20, 2), 1e-3);
  const auto grid = quadrature(Domain::torus(1), 256);
  CHECK(excess_risk(f, [&](PointRef x) { return point_prediction(f, x); }, grid) == doctest::Approx(0.0));
  CHECK(excess_risk(f, [&](PointRef x) { return point_prediction(f, x) - 1.0; }, grid) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(excess_risk(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(4), grid), ConfigError);
}

TEST_CASE("noiseless interpolation of an in-span truth has tiny risk") {
  const auto spec = KernelSpec::periodic(PeriodicFourier::power_law(1, 4.0, 256));
  const Points X = sample_iid(Domain::torus(1), 64, 21);
  const RegressionFunction truth = [](PointRef x) { return std::sin(x(0)) + 0.5 * std::cos(2 * x(0)); };
  Eigen::VectorXd Y(64);
  for (Eigen::Index i = 0; i < 64; ++i) Y(i) = truth(X.row(i));
  const auto f = fit(spec, X, Y, 0.0);
  const double risk = excess_risk(f, truth, quadrature(Domain::torus(1), 1024));
  MESSAGE("risk = " << risk);
  CHECK(risk < 1e-4);
}

TEST_CASE("fit argument errors") {
  const Points X = sample_iid(Domain::torus(1), 5, 1);
  CHECK_THROWS_AS(fit(KernelSpec::laplace(), X, Eigen::VectorXd::Zero(5), -1.0), ConfigError);
  CHECK_THROWS_AS(fit(KernelSpec::laplace(), X, Eigen::VectorXd::Zero(4), 0.1), ConfigError);
  Points D = X;
  D.row(3) = D.row(0);
  CHECK_THROWS_AS(fit(KernelSpec::laplace(), D, Eigen::VectorXd::Zero(5), 0.1), DuplicatePointsError);
}
