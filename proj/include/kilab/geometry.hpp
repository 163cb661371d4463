#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <string>

namespace kilab {

/// Rows are points.
using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using PointRef = Eigen::Ref<const Eigen::RowVectorXd>;

enum class DomainKind { sphere, torus, cube };

/// Input space with its uniform reference measure.
///   sphere(d): unit sphere S^{d-1} in R^d, d >= 2
///   torus(d):  [-pi, pi)^d with periodic identification, d >= 1
///   cube(d):   [0, 1]^d, d >= 1
class Domain {
 public:
  static Domain sphere(int d);
  static Domain torus(int d);
  static Domain cube(int d);
  static Domain from_name(const std::string& kind, int d);

  DomainKind kind() const { return kind_; }
  /// Ambient coordinate count of a point.
  int dim() const { return dim_; }
  std::string kind_name() const;
  std::string describe() const;

  bool contains(PointRef x, double tol = 1e-12) const;

  bool operator==(const Domain&) const = default;

 private:
  Domain(DomainKind kind, int dim) : kind_(kind), dim_(dim) {}
  DomainKind kind_;
  int dim_;
};

/// a mod [-pi, pi) = ((a + pi) mod 2pi) - pi.
double wrap_angle(double a);

/// n i.i.d. points from the uniform measure; bit-identical for a given seed.
Points sample_iid(const Domain& domain, std::size_t n, std::uint64_t seed);

/// Discrete probability measure approximating mu.
struct QuadratureGrid {
  Points nodes;
  Eigen::VectorXd weights;
  bool monte_carlo = false;

  std::size_t size() const { return static_cast<std::size_t>(weights.size()); }
  double integrate(const Eigen::Ref<const Eigen::VectorXd>& values) const {
    return weights.dot(values);
  }
};

/// Deterministic product rule.
///   torus: uniform tensor grid with `resolution` nodes per axis (exact for
///          trigonometric polynomials of degree < resolution)
///   cube:  tensor midpoint rule
///   sphere: circle -> 2*resolution uniform angles; d >= 3 -> recursive
///          Gauss-Gegenbauer in the polar coordinate times S^{d-2}
/// Sphere with d > 8 is rejected; use monte_carlo_grid there.
QuadratureGrid quadrature(const Domain& domain, int resolution);

/// Equal-weight grid of i.i.d. samples.
QuadratureGrid monte_carlo_grid(const Domain& domain, std::size_t nodes, std::uint64_t seed);

}  // namespace kilab
