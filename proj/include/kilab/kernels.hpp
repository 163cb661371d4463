#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "kilab/geometry.hpp"
#include "kilab/linalg.hpp"

namespace kilab {

/// exp(-|x - y| / bandwidth)
struct Laplace {
  double bandwidth = 1.0;
};

/// exp(-|x - y|^2 / (2 bandwidth^2))
struct Gaussian {
  double bandwidth = 1.0;
};

/// Matern with smoothness nu and length scale; unit variance.
struct Matern {
  double nu = 1.5;
  double lengthscale = 1.0;
};

/// k(x, y) = value
struct Constant {
  double value = 1.0;
};

/// Translation-invariant kernel on the torus given by its Fourier
/// coefficients: k(x, y) = sum_{m in Z^d} c_m cos<m, x - y> with c_m = c_{-m}.
/// Only one representative per {m, -m} pair is stored (the zero frequency,
/// then frequencies whose first nonzero entry is positive).
class PeriodicFourier {
 public:
  PeriodicFourier() = default;

  /// Terms may list m and -m; both must then carry the same coefficient.
  static PeriodicFourier from_terms(int dim, const std::vector<std::pair<std::vector<int>, double>>& terms);

  /// c_m = scale * (1 + |m|^2)^{-decay * d / 2} for all m with |m|_inf <= max_freq,
  /// giving eigenvalues lambda_i ~ i^{-decay}.
  static PeriodicFourier power_law(int dim, double decay, int max_freq, double scale = 1.0);

  int dim() const { return dim_; }
  const std::vector<std::vector<int>>& frequencies() const { return freqs_; }
  const std::vector<double>& coefficients() const { return coefs_; }
  std::optional<double> decay() const { return decay_; }
  std::optional<int> max_freq() const { return max_freq_; }
  double scale() const { return scale_; }

  double eval(PointRef x, PointRef y) const;
  /// sum over all m in Z^d of c_m (the constant k(x, x)).
  double trace() const;

  /// Real orthonormal Fourier basis at the rows of X: columns are
  /// [1, sqrt2 cos<m,x>, sqrt2 sin<m,x>, ...] in representative order.
  Eigen::MatrixXd features(const Points& X) const;
  /// Eigenvalue attached to each feature column.
  Eigen::VectorXd feature_weights() const;

 private:
  int dim_ = 1;
  std::vector<std::vector<int>> freqs_;
  std::vector<double> coefs_;
  std::optional<double> decay_;
  std::optional<int> max_freq_;
  double scale_ = 1.0;
  bool contiguous_1d_ = false;
};

/// k(x, y) = f(<x, y>) on the sphere.
struct DotProduct {
  enum class Profile { linear, polynomial, exponential, custom };
  Profile profile = Profile::linear;
  double degree = 1.0;   // polynomial: (t + offset)^degree
  double offset = 0.0;
  double scale = 1.0;    // exponential: exp((t - 1) / scale)
  std::string name = "linear";
  std::function<double(double)> custom;

  double operator()(double t) const;
};

/// Two-layer ReLU neural tangent kernel
/// (2/pi)(pi - arccos t) t + (1/pi) sqrt(1 - t^2).
struct Ntk2 {};

using KernelFamily = std::variant<Laplace, Gaussian, Matern, Constant, PeriodicFourier, DotProduct, Ntk2>;

/// |k(x1,x2) - k(y1,y2)| <= constant * |(x1,x2) - (y1,y2)|^exponent. When
/// `in_argument` is set the bound is for the scalar profile f of a
/// dot-product kernel, in |t - s|.
struct HolderConstants {
  double exponent = 1.0;
  double constant = 0.0;
  bool in_argument = false;
};

double ntk2_profile(double t);

class KernelSpec {
 public:
  KernelSpec() : KernelSpec(Laplace{}) {}
  explicit KernelSpec(KernelFamily family);

  static KernelSpec laplace(double bandwidth = 1.0) { return KernelSpec(Laplace{bandwidth}); }
  static KernelSpec gaussian(double bandwidth = 1.0) { return KernelSpec(Gaussian{bandwidth}); }
  static KernelSpec matern(double nu, double lengthscale = 1.0) { return KernelSpec(Matern{nu, lengthscale}); }
  static KernelSpec constant(double value = 1.0) { return KernelSpec(Constant{value}); }
  static KernelSpec periodic(PeriodicFourier p) { return KernelSpec(std::move(p)); }
  static KernelSpec ntk2() { return KernelSpec(Ntk2{}); }
  static KernelSpec linear_dot();
  static KernelSpec polynomial_dot(double degree, double offset);
  static KernelSpec exponential_dot(double scale);
  static KernelSpec custom_dot(std::string name, std::function<double(double)> f);

  double operator()(PointRef x, PointRef y) const;

  const KernelFamily& family() const { return family_; }
  std::string family_name() const;
  bool is_dot_product() const;
  /// Scalar profile of a dot-product kernel.
  double profile(double t) const;
  /// sup_x k(x, x).
  double kappa2() const { return kappa2_; }
  const std::optional<HolderConstants>& holder() const { return holder_; }
  /// Eigenvalue decay exponent beta on the given domain when it is known in
  /// closed form (Matern/Laplace via Sobolev equivalence, NTK on spheres,
  /// power-law periodic kernels).
  std::optional<double> decay_exponent(const Domain& domain) const;

 private:
  KernelFamily family_;
  double kappa2_ = 1.0;
  std::optional<HolderConstants> holder_;
};

/// k(x, X) assembled for all pairs of rows of a and b.
Eigen::MatrixXd cross_gram(const KernelSpec& spec, const Points& a, const Points& b, unsigned workers = 1);

/// Throws DuplicatePointsError naming the first colliding pair.
void check_distinct(const Points& X, double tol = 1e-12);

/// K(X,X) and K = K(X,X)/n with a lazily computed eigendecomposition of the
/// raw matrix. Copies share the cache.
class GramMatrix {
 public:
  GramMatrix() = default;
  explicit GramMatrix(Eigen::MatrixXd raw);

  std::size_t n() const { return static_cast<std::size_t>(raw_.rows()); }
  const Eigen::MatrixXd& raw() const { return raw_; }
  Eigen::MatrixXd normalized() const { return raw_ / static_cast<double>(n()); }

  /// Eigendecomposition of raw(), computed once.
  const SymmetricEigen& eigen() const;
  /// min eigenvalue >= -1e-10 * max eigenvalue.
  bool is_psd() const;
  double symmetry_error() const;

  void write_csv(std::ostream& os) const;

 private:
  struct Cache;
  Eigen::MatrixXd raw_;
  std::shared_ptr<Cache> cache_;
};

/// Rejects duplicate points, then assembles the symmetric matrix.
GramMatrix gram(const KernelSpec& spec, const Points& X, unsigned workers = 1);

struct HolderEstimate {
  double exponent = 0.0;    // s_hat, capped at 1.5
  double constant = 0.0;    // L_hat = max |dk| / |d|^s_hat over probes
  double residual = 0.0;    // RMS of the log-log fit
  std::size_t probes = 0;
  bool in_argument = false;
};

/// Fits log|dk| against log|d(pair)| over random probe pairs with
/// log-uniform separations. Dot-product kernels are probed in their scalar
/// argument anchored at t = +-1; all others in point-pair coordinates.
HolderEstimate estimate_holder(const KernelSpec& spec, const Domain& domain, std::size_t probes,
                               std::uint64_t seed);

}  // namespace kilab
