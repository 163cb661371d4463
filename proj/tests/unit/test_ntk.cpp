#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <random>

#include <cmath>

#include "kilab/random.hpp"
#include "kilab/errors.hpp"
#include "kilab/ntk.hpp"

using namespace kilab;

namespace {

Eigen::VectorXd gaussian_vector(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  Eigen::VectorXd v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

// Central differences of the loss over every parameter.
NetworkGradient finite_difference(const NetworkState& net, const Points& X, const Eigen::VectorXd& Y, double h) {
  NetworkGradient g{Eigen::MatrixXd::Zero(net.width, net.dim), Eigen::VectorXd::Zero(net.width)};
  NetworkState p = net;
  for (int r = 0; r < net.width; ++r) {
    for (int c = 0; c < net.dim; ++c) {
      p.w(r, c) = net.w(r, c) + h;
      const double up = training_loss(p, X, Y);
      p.w(r, c) = net.w(r, c) - h;
      const double down = training_loss(p, X, Y);
      p.w(r, c) = net.w(r, c);
      g.w(r, c) = (up - down) / (2 * h);
    }
    p.a(r) = net.a(r) + h;
    const double up = training_loss(p, X, Y);
    p.a(r) = net.a(r) - h;
    const double down = training_loss(p, X, Y);
    p.a(r) = net.a(r);
    g.a(r) = (up - down) / (2 * h);
  }
  return g;
}

double gradient_relative_error(const NetworkGradient& a, const NetworkGradient& b) {
  const double diff = std::sqrt((a.w - b.w).squaredNorm() + (a.a - b.a).squaredNorm());
  const double norm = std::sqrt(a.w.squaredNorm() + a.a.squaredNorm());
  return diff / std::max(norm, 1e-300);
}

}  // namespace

TEST_CASE("symmetric initialization") {
  const auto net = init_symmetric(64, 3, 5);
  const Points P = sample_iid(Domain::sphere(3), 100, 6);
  CHECK(net.forward(P).cwiseAbs().maxCoeff() < 1e-12);
  for (int r = 0; r < 32; ++r) {
    CHECK(net.a(r + 32) == -net.a(r));
    CHECK(net.w.row(r + 32) == net.w.row(r));
  }
  const auto tiny = init_symmetric(2, 1, 9);
  CHECK(tiny.a(1) == -tiny.a(0));
  CHECK(tiny.w(1, 0) == tiny.w(0, 0));
  const auto again = init_symmetric(64, 3, 5);
  CHECK(again.w == net.w);
  CHECK(again.a == net.a);
  CHECK(init_symmetric(64, 3, 7).w != net.w);
  CHECK_THROWS_AS(init_symmetric(7, 3, 1), ConfigError);
  CHECK_THROWS_AS(init_symmetric(0, 3, 1), ConfigError);
}

TEST_CASE("zero targets: zero gradients and an unchanged state") {
  const auto net = init_symmetric(32, 3, 1);
  const Points X = sample_iid(Domain::sphere(3), 10, 2);
  const Eigen::VectorXd Y = Eigen::VectorXd::Zero(10);
  const auto g = loss_gradient(net, X, Y);
  CHECK(g.w.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.a.cwiseAbs().maxCoeff() == 0.0);
  const auto trace = train_gd(net, X, Y, {.eta = 1.0, .steps = 50});
  CHECK(trace.final_state.w == net.w);
  CHECK(trace.final_state.a == net.a);
  for (double l : trace.loss_history) CHECK(l == 0.0);
}

TEST_CASE("analytic gradient matches central differences") {
  Rng rng(77);
  for (int instance = 0; instance < 20; ++instance) {
    std::uniform_int_distribution<int> mw(1, 8), nn(1, 8), dd(2, 4);
    const int m = 2 * mw(rng), n = nn(rng), d = dd(rng);
    CAPTURE(m);
    CAPTURE(n);
    CAPTURE(d);
    NetworkState net = init_symmetric(m, d, 1000 + instance);
    // Break the symmetry so every parameter has a nonzero gradient.
    net.a += 0.3 * gaussian_vector(m, 2000 + instance);
    const Points X = sample_iid(Domain::sphere(d), n, 3000 + instance);
    const Eigen::VectorXd Y = gaussian_vector(n, 4000 + instance);
    const double rel = gradient_relative_error(loss_gradient(net, X, Y), finite_difference(net, X, Y, 1e-4));
    CHECK(rel < 1e-5);
  }
}

TEST_CASE("wide networks fit eight points") {
  const Points X = sample_iid(Domain::sphere(3), 8, 11);
  const Eigen::VectorXd Y = gaussian_vector(8, 12);
  const auto trace = train_gd(init_symmetric(4096, 3, 13), X, Y, {.eta = 2.5, .steps = 20000, .tolerance = 1e-7});
  MESSAGE("steps " << trace.steps_taken << " loss " << trace.loss_history.back());
  CHECK(trace.loss_history.back() < 1e-6);
  for (std::size_t k = 1; k < trace.loss_history.size(); ++k)
    CHECK(trace.loss_history[k] <= trace.loss_history[k - 1] * (1 + 1e-12));
}

TEST_CASE("step halving keeps the loss monotone and is recorded") {
  const Points X = sample_iid(Domain::sphere(3), 6, 1);
  const Eigen::VectorXd Y = gaussian_vector(6, 2);
  const auto trace = train_gd(init_symmetric(64, 3, 3), X, Y, {.eta = 500.0, .steps = 200});
  CHECK_FALSE(trace.halvings.empty());
  CHECK(trace.eta_final < trace.eta_initial);
  for (std::size_t k = 1; k < trace.loss_history.size(); ++k)
    CHECK(trace.loss_history[k] <= trace.loss_history[k - 1] * (1 + 1e-12));
  CHECK_THROWS_AS(train_gd(init_symmetric(64, 3, 3), X, Y, {.eta = 1e6, .steps = 50, .adaptive = false}),
                  DivergenceError);
  CHECK_THROWS_AS(train_gd(init_symmetric(64, 3, 3), X, Y, {.eta = 0.0}), ConfigError);
}

TEST_CASE("checkpoints at powers of two") {
  const Points X = sample_iid(Domain::sphere(3), 5, 1);
  const Points grid = sample_iid(Domain::sphere(3), 7, 2);
  TrainOptions o{.eta = 1.0, .steps = 20, .tolerance = 0.0};
  o.eval_grid = grid;
  const auto trace = train_gd(init_symmetric(16, 3, 3), X, gaussian_vector(5, 4), o);
  std::vector<std::size_t> steps;
  for (const auto& c : trace.checkpoints) {
    steps.push_back(c.step);
    CHECK(c.predictions.size() == 7);
  }
  CHECK(steps == std::vector<std::size_t>{0, 1, 2, 4, 8, 16, 20});
}

TEST_CASE("NTK interpolator") {
  const Points X = sample_iid(Domain::sphere(3), 40, 5);
  const Eigen::VectorXd Y = gaussian_vector(40, 6);
  const auto f = ntk_interpolator(X, Y);
  CHECK((predict(f, X) - Y).cwiseAbs().maxCoeff() < 1e-6 * (1 + Y.cwiseAbs().maxCoeff()));
  CHECK(ntk_interpolator(X, Eigen::VectorXd::Zero(40)).dual.cwiseAbs().maxCoeff() == 0.0);
  const Eigen::VectorXd Z = gaussian_vector(40, 7);
  const Eigen::VectorXd sum = ntk_interpolator(X, Y + Z).dual;
  CHECK((sum - f.dual - ntk_interpolator(X, Z).dual).cwiseAbs().maxCoeff() < 1e-10 * (1 + sum.cwiseAbs().maxCoeff()));
  Points off = X;
  off.row(3) *= 1.5;
  CHECK_THROWS_AS(ntk_interpolator(off, Y), DomainError);
}

TEST_CASE("sup gap") {
  const Points X = sample_iid(Domain::sphere(3), 10, 1);
  const Points grid = sample_iid(Domain::sphere(3), 200, 2);
  const auto zero_fit = ntk_interpolator(X, Eigen::VectorXd::Zero(10));
  CHECK(sup_gap(init_symmetric(32, 3, 3), zero_fit, grid) == 0.0);
}

TEST_CASE("a single datum: network and NTK interpolant agree at x1") {
  const Points X = sample_iid(Domain::sphere(3), 1, 21);
  Eigen::VectorXd Y(1);
  Y << 0.8;
  const auto trace = train_gd(init_symmetric(1024, 3, 22), X, Y, {.eta = 1.0, .steps = 5000, .tolerance = 1e-12});
  const double nn = trace.final_state.forward(X)(0);
  const double ntk = predict(ntk_interpolator(X, Y), X)(0);
  CHECK(std::abs(nn - Y(0)) < 1e-3);
  CHECK(std::abs(ntk - Y(0)) < 1e-12);
}

TEST_CASE("empirical tangent kernel at initialization matches k_NT") {
  const auto net = init_symmetric(1 << 16, 3, 31);
  const Points P = sample_iid(Domain::sphere(3), 16, 32);
  const auto k = KernelSpec::ntk2();
  for (Eigen::Index p = 0; p < 8; ++p) {
    const auto e = empirical_ntk(net, P.row(2 * p), P.row(2 * p + 1));
    const double exact = k(P.row(2 * p), P.row(2 * p + 1));
    CAPTURE(p);
    CHECK(e.standard_error > 0.0);
    CHECK(std::abs(e.value - exact) <= 3.0 * e.standard_error);
  }
}
