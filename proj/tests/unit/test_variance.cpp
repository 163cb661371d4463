#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <random>

#include <cmath>

#include "kilab/random.hpp"
#include "kilab/errors.hpp"
#include "kilab/stats.hpp"
#include "kilab/variance.hpp"

using namespace kilab;

TEST_CASE("one point with the constant kernel") {
  Points X(1, 1);
  X << 0.4;
  const auto spec = KernelSpec::constant();
  const auto g = gram(spec, X);
  const auto grid = quadrature(Domain::cube(1), 50);
  CHECK(variance_term(g, spec, X, 1.0, 0.0, grid).value == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(variance_term(g, spec, X, 1.0, 1.0, grid).value == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(variance_operator_form(g, spec, X, 1.0, 1.0, grid) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("heavy regularization lowers the variance") {
  const Points X = sample_iid(Domain::torus(1), 50, 1);
  const auto spec = KernelSpec::laplace();
  const auto g = gram(spec, X);
  const auto grid = quadrature(Domain::torus(1), 512);
  CHECK(variance_term(g, spec, X, 1.0, 1e6, grid).value < variance_term(g, spec, X, 1.0, 0.0, grid).value);
}

TEST_CASE("singular K at lambda = 0 is reported") {
  Points X(2, 1);
  X << 0.1, 0.9;
  const auto spec = KernelSpec::constant();
  const auto g = gram(spec, X);
  const auto grid = quadrature(Domain::cube(1), 10);
  CHECK_THROWS_AS(variance_term(g, spec, X, 1.0, 0.0, grid), InterpolationInfeasible);
  CHECK(variance_term(g, spec, X, 1.0, 0.1, grid).value > 0.0);
  CHECK_THROWS_AS(variance_term(g, spec, X, 0.0, 0.1, grid), ConfigError);
}

TEST_CASE("variance is linear in sigma^2") {
  const Points X = sample_iid(Domain::cube(2), 40, 2);
  const auto spec = KernelSpec::matern(1.5, 0.5);
  const auto grid = quadrature(Domain::cube(2), 24);
  const auto lambdas = logspace(1e-6, 1e-1, 12);
  const auto a = variance_curve(spec, X, 0.7, lambdas, grid);
  const auto b = variance_curve(spec, X, 1.4, lambdas, grid);
  for (std::size_t k = 0; k < lambdas.size(); ++k) CHECK(b.entries[k].value == 2.0 * a.entries[k].value);
}

TEST_CASE("single-point curve equals variance_term") {
  const Points X = sample_iid(Domain::torus(1), 30, 3);
  const auto spec = KernelSpec::laplace();
  const auto grid = quadrature(Domain::torus(1), 256);
  const auto curve = variance_curve(spec, X, 1.0, {1e-3}, grid);
  REQUIRE(curve.entries.size() == 1);
  CHECK(curve.entries[0].value == doctest::Approx(variance_term(gram(spec, X), spec, X, 1.0, 1e-3, grid).value)
                                      .epsilon(1e-13));
}

TEST_CASE("curves are non-increasing in lambda and nonnegative") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Points X = sample_iid(Domain::sphere(3), 60, seed);
    const auto spec = KernelSpec::ntk2();
    const auto grid = quadrature(Domain::sphere(3), 16);
    const auto c = variance_curve(spec, X, 1.0, logspace(1e-8, 10.0, 30), grid, true);
    REQUIRE(c.entries.size() == 31);
    CHECK(c.entries[0].lambda == 0.0);
    for (std::size_t k = 0; k < c.entries.size(); ++k) {
      CHECK(c.entries[k].value >= 0.0);
      if (k) CHECK(c.entries[k].value <= c.entries[k - 1].value * (1 + 1e-12));
    }
  }
  const Points X = sample_iid(Domain::torus(1), 10, 1);
  const auto grid = quadrature(Domain::torus(1), 64);
  CHECK_THROWS_AS(variance_curve(KernelSpec::laplace(), X, 1.0, {}, grid), ConfigError);
  CHECK_THROWS_AS(variance_curve(KernelSpec::laplace(), X, 1.0, {1e-2, 1e-3}, grid), ConfigError);
}

TEST_CASE("eigen-weight form agrees with the operator form") {
  struct Case {
    KernelSpec spec;
    Domain domain;
    int res;
    double smallest_lambda;
  };
  // The Gaussian Gram at n = 48 is numerically singular, so it starts at a positive lambda.
  for (const auto& c : {Case{KernelSpec::laplace(), Domain::torus(1), 256, 0.0},
                        Case{KernelSpec::ntk2(), Domain::sphere(3), 12, 0.0},
                        Case{KernelSpec::gaussian(0.4), Domain::cube(2), 16, 1e-8}}) {
    const Points X = sample_iid(c.domain, 48, 4);
    const auto g = gram(c.spec, X);
    const auto grid = quadrature(c.domain, c.res);
    for (double lam : {c.smallest_lambda, 1e-4, 1e-1}) {
      const double a = variance_term(g, c.spec, X, 1.0, lam, grid).value;
      const double b = variance_operator_form(g, c.spec, X, 1.0, lam, grid);
      CHECK(std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)));
    }
  }
}

TEST_CASE("exact Mercer integration agrees with quadrature") {
  const auto p = PeriodicFourier::power_law(1, 4.0, 128);
  const auto spec = KernelSpec::periodic(p);
  const Points X = sample_iid(Domain::torus(1), 64, 5);
  const auto g = gram(spec, X);
  const auto exact = VarianceIntegrator::from_mercer(g, p, X);
  const auto quad = VarianceIntegrator::from_grid(g, spec, X, quadrature(Domain::torus(1), 512));
  for (double lam : {0.0, 1e-6, 1e-2}) CHECK(exact.value(1.0, lam) == doctest::Approx(quad.value(1.0, lam)).epsilon(1e-9));
}

TEST_CASE("monte carlo integration carries a standard error and warning flag") {
  const Points X = sample_iid(Domain::sphere(3), 30, 6);
  const auto spec = KernelSpec::ntk2();
  const auto g = gram(spec, X);
  const auto coarse = variance_term(g, spec, X, 1.0, 1e-3, monte_carlo_grid(Domain::sphere(3), 20, 1));
  CHECK(coarse.standard_error > 0.0);
  const auto fine = variance_term(g, spec, X, 1.0, 1e-3, monte_carlo_grid(Domain::sphere(3), 50000, 2));
  CHECK(fine.standard_error / fine.value < 0.02);
  CHECK_FALSE(fine.warning);
  CHECK(coarse.warning == (coarse.standard_error / coarse.value > 0.02));
}

TEST_CASE("theoretical variance") {
  CHECK(theoretical_variance(SpectrumModel::from_list({1.0}), 1.0, 10, 1.0) == doctest::Approx(0.025));
  const auto s = SpectrumModel::power_law(1.0, 2.0, 200000);
  std::vector<double> ratio;
  for (double lam : logspace(1e-6, 1e-2, 15)) {
    // Oracle: direct summation of N_2.
    double n2 = 0.0;
    for (int i = 1; i <= 1000000; ++i) {
      const double l = 1.0 / (double(i) * i);
      n2 += (l / (l + lam)) * (l / (l + lam));
    }
    CHECK(theoretical_variance(s, 1.0, 100, lam) == doctest::Approx(n2 / 100).epsilon(1e-4));
    ratio.push_back(theoretical_variance(s, 1.0, 100, lam) / (std::pow(lam, -0.5) / 100));
  }
  const auto [lo, hi] = std::minmax_element(ratio.begin(), ratio.end());
  CHECK(*lo > 0.1);
  CHECK(*hi < 10.0);
  CHECK(*hi / *lo < 1.5);
}

TEST_CASE("theoretical variance tracks the sample variance for a periodic kernel") {
  const auto p = PeriodicFourier::power_law(1, 4.0, 2048);
  const auto spec = KernelSpec::periodic(p);
  const std::size_t n = 1024;
  const double lam = 1.0 / std::sqrt(double(n));
  std::vector<double> values;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Points X = sample_iid(Domain::torus(1), n, 100 + s);
    values.push_back(VarianceIntegrator::from_mercer(gram(spec, X), p, X).value(1.0, lam));
  }
  const double theory = theoretical_variance(exact_spectrum_torus(p), 1.0, n, lam);
  MESSAGE("sample mean " << mean(values) << " theory " << theory);
  CHECK(std::abs(mean(values) / theory - 1.0) <= 0.35);
}

TEST_CASE("variance rate for a decay-4 periodic kernel") {
  const auto p = PeriodicFourier::power_law(1, 4.0, 2048);
  const auto spec = KernelSpec::periodic(p);
  for (std::size_t n : {512u, 1024u}) {
    const Points X = sample_iid(Domain::torus(1), n, 7);
    const auto integ = VarianceIntegrator::from_mercer(gram(spec, X), p, X);
    const auto lambdas = logspace(std::pow(double(n), -3.5), 1.0, 30);
    const auto curve = variance_curve(integ, 1.0, lambdas);
    std::vector<double> v;
    for (const auto& e : curve.entries) v.push_back(e.value);
    const double slope = fit_loglog(lambdas, v).slope;
    MESSAGE("n = " << n << " slope " << slope);
    CHECK(std::abs(slope + 0.25) <= 0.04);
  }
}
