#include "kilab/geometry.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "kilab/errors.hpp"
#include "kilab/orthopoly.hpp"
#include "kilab/random.hpp"

namespace kilab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::size_t kMaxQuadratureNodes = 50'000'000;

// Points of S^{k-1} (k >= 2) with probability weights.
void sphere_rule(int k, int resolution, std::vector<std::vector<double>>& nodes,
                 std::vector<double>& weights) {
  nodes.clear();
  weights.clear();
  if (k == 2) {
    const int count = 2 * resolution;
    for (int j = 0; j < count; ++j) {
      const double phi = -kPi + 2.0 * kPi * j / count;
      nodes.push_back({std::cos(phi), std::sin(phi)});
      weights.push_back(1.0 / count);
    }
    return;
  }
  // x = (t, sqrt(1 - t^2) y), t ~ (1 - t^2)^{(k-3)/2}, y in S^{k-2}.
  const GaussRule polar = gauss_gegenbauer(resolution, 0.5 * (k - 3));
  std::vector<std::vector<double>> sub_nodes;
  std::vector<double> sub_weights;
  sphere_rule(k - 1, resolution, sub_nodes, sub_weights);
  nodes.reserve(polar.nodes.size() * sub_nodes.size());
  for (std::size_t i = 0; i < polar.nodes.size(); ++i) {
    const double t = polar.nodes[i];
    const double r = std::sqrt(std::max(0.0, 1.0 - t * t));
    for (std::size_t j = 0; j < sub_nodes.size(); ++j) {
      std::vector<double> x(k);
      x[0] = t;
      for (int c = 0; c < k - 1; ++c) x[c + 1] = r * sub_nodes[j][c];
      // Renormalize so rounding in r does not move points off the sphere.
      double norm = 0.0;
      for (double v : x) norm += v * v;
      norm = std::sqrt(norm);
      for (double& v : x) v /= norm;
      nodes.push_back(std::move(x));
      weights.push_back(polar.weights[i] * sub_weights[j]);
    }
  }
}

QuadratureGrid tensor_grid(int dim, int resolution, double lo, double step) {
  double total = std::pow(static_cast<double>(resolution), dim);
  if (total > static_cast<double>(kMaxQuadratureNodes))
    throw ConfigError("quadrature: tensor grid with " + std::to_string(resolution) + "^" +
                      std::to_string(dim) + " nodes is too large; use monte_carlo integration");
  const auto count = static_cast<std::size_t>(total);
  QuadratureGrid grid;
  grid.nodes.resize(static_cast<Eigen::Index>(count), dim);
  grid.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(count), 1.0 / total);
  std::vector<int> idx(dim, 0);
  for (std::size_t p = 0; p < count; ++p) {
    for (int c = 0; c < dim; ++c) grid.nodes(static_cast<Eigen::Index>(p), c) = lo + step * idx[c];
    for (int c = dim - 1; c >= 0; --c) {
      if (++idx[c] < resolution) break;
      idx[c] = 0;
    }
  }
  return grid;
}

}  // namespace

Domain Domain::sphere(int d) {
  if (d < 2) throw ConfigError("sphere domain requires ambient dimension d >= 2, got " + std::to_string(d));
  return Domain(DomainKind::sphere, d);
}

Domain Domain::torus(int d) {
  if (d < 1) throw ConfigError("torus domain requires d >= 1, got " + std::to_string(d));
  return Domain(DomainKind::torus, d);
}

Domain Domain::cube(int d) {
  if (d < 1) throw ConfigError("cube domain requires d >= 1, got " + std::to_string(d));
  return Domain(DomainKind::cube, d);
}

Domain Domain::from_name(const std::string& kind, int d) {
  if (kind == "sphere") return sphere(d);
  if (kind == "torus") return torus(d);
  if (kind == "cube") return cube(d);
  throw ConfigError("unsupported domain kind '" + kind + "' (expected sphere, torus or cube)");
}

std::string Domain::kind_name() const {
  switch (kind_) {
    case DomainKind::sphere: return "sphere";
    case DomainKind::torus: return "torus";
    case DomainKind::cube: return "cube";
  }
  return "unknown";
}

std::string Domain::describe() const {
  return kind_name() + "(d=" + std::to_string(dim_) + ")";
}

bool Domain::contains(PointRef x, double tol) const {
  if (x.size() != dim_) return false;
  switch (kind_) {
    case DomainKind::sphere: return std::abs(x.norm() - 1.0) <= tol;
    case DomainKind::torus:
      return (x.array() >= -kPi - tol).all() && (x.array() < kPi + tol).all();
    case DomainKind::cube: return (x.array() >= -tol).all() && (x.array() <= 1.0 + tol).all();
  }
  return false;
}

double wrap_angle(double a) {
  double r = std::fmod(a + kPi, 2.0 * kPi);
  if (r < 0.0) r += 2.0 * kPi;
  r -= kPi;
  // fmod can land exactly on +pi after the shift back.
  if (r >= kPi) r -= 2.0 * kPi;
  return r;
}

Points sample_iid(const Domain& domain, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample_iid: n must be >= 1");
  Rng rng(seed);
  const int d = domain.dim();
  Points X(static_cast<Eigen::Index>(n), d);
  switch (domain.kind()) {
    case DomainKind::sphere: {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double norm = 0.0;
        do {
          for (int c = 0; c < d; ++c) X(i, c) = normal(rng);
          norm = X.row(i).norm();
        } while (norm < 1e-300);
        X.row(i) /= norm;
      }
      break;
    }
    case DomainKind::torus: {
      std::uniform_real_distribution<double> uniform(-kPi, kPi);
      for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (int c = 0; c < d; ++c) X(i, c) = wrap_angle(uniform(rng));
      break;
    }
    case DomainKind::cube: {
      std::uniform_real_distribution<double> uniform(0.0, 1.0);
      for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (int c = 0; c < d; ++c) X(i, c) = uniform(rng);
      break;
    }
  }
  return X;
}

QuadratureGrid quadrature(const Domain& domain, int resolution) {
  if (resolution < 2) throw ConfigError("quadrature: resolution must be >= 2");
  const int d = domain.dim();
  switch (domain.kind()) {
    case DomainKind::torus: return tensor_grid(d, resolution, -kPi, 2.0 * kPi / resolution);
    case DomainKind::cube: {
      auto grid = tensor_grid(d, resolution, 0.5 / resolution, 1.0 / resolution);
      return grid;
    }
    case DomainKind::sphere: {
      if (d > 8)
        throw ConfigError("quadrature: sphere with d = " + std::to_string(d) +
                          " > 8 is not supported; use monte_carlo integration");
      const double count = 2.0 * std::pow(static_cast<double>(resolution), d - 1);
      if (count > static_cast<double>(kMaxQuadratureNodes))
        throw ConfigError("quadrature: sphere grid too large; lower the resolution or use monte_carlo");
      std::vector<std::vector<double>> nodes;
      std::vector<double> weights;
      sphere_rule(d, resolution, nodes, weights);
      QuadratureGrid grid;
      grid.nodes.resize(static_cast<Eigen::Index>(nodes.size()), d);
      grid.weights.resize(static_cast<Eigen::Index>(nodes.size()));
      double total = 0.0;
      for (double w : weights) total += w;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        for (int c = 0; c < d; ++c) grid.nodes(static_cast<Eigen::Index>(i), c) = nodes[i][c];
        grid.weights(static_cast<Eigen::Index>(i)) = weights[i] / total;
      }
      return grid;
    }
  }
  throw ConfigError("quadrature: unsupported domain");
}

QuadratureGrid monte_carlo_grid(const Domain& domain, std::size_t nodes, std::uint64_t seed) {
  QuadratureGrid grid;
  grid.nodes = sample_iid(domain, nodes, seed);
  grid.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(nodes), 1.0 / static_cast<double>(nodes));
  grid.monte_carlo = true;
  return grid;
}

}  // namespace kilab
