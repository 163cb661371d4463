#include "kilab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>
#include <random>

#include "kilab/errors.hpp"
#include "kilab/parallel.hpp"
#include "kilab/random.hpp"
#include "kilab/stats.hpp"

namespace kilab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDotSlack = 1e-9;

double matern_value(const Matern& m, double r) {
  if (r <= 0.0) return 1.0;
  const double z = std::sqrt(2.0 * m.nu) * r / m.lengthscale;
  if (m.nu == 0.5) return std::exp(-r / m.lengthscale);
  if (m.nu == 1.5) return (1.0 + z) * std::exp(-z);
  if (m.nu == 2.5) return (1.0 + z + z * z / 3.0) * std::exp(-z);
  if (z > 700.0) return 0.0;
  return std::pow(2.0, 1.0 - m.nu) / std::tgamma(m.nu) * std::pow(z, m.nu) * std::cyl_bessel_k(m.nu, z);
}

HolderConstants matern_holder(const Matern& m) {
  const double s = std::min(1.0, 2.0 * m.nu);
  double best = 0.0;
  for (double u = -6.0; u <= 1.0; u += 0.01) {
    const double r = m.lengthscale * std::pow(10.0, u);
    best = std::max(best, (1.0 - matern_value(m, r)) / std::pow(r, s));
    const double h = 1e-7 * m.lengthscale;
    best = std::max(best, std::abs(matern_value(m, r + h) - matern_value(m, r)) / std::pow(h, s));
  }
  return {s, std::sqrt(2.0) * best, false};
}

std::vector<int> canonical(std::vector<int> m) {
  for (int v : m) {
    if (v == 0) continue;
    if (v < 0)
      for (int& w : m) w = -w;
    break;
  }
  return m;
}

bool is_zero(const std::vector<int>& m) {
  return std::all_of(m.begin(), m.end(), [](int v) { return v == 0; });
}

double clamp_dot(double t) {
  if (!(std::abs(t) <= 1.0 + kDotSlack))
    throw DomainError("dot-product kernel evaluated at <x,y> = " + std::to_string(t) +
                      " outside [-1, 1]; inputs must lie on the unit sphere");
  return std::clamp(t, -1.0, 1.0);
}

}  // namespace

double ntk2_profile(double t) {
  t = std::clamp(t, -1.0, 1.0);
  return (2.0 / kPi) * (kPi - std::acos(t)) * t + (1.0 / kPi) * std::sqrt(std::max(0.0, 1.0 - t * t));
}

// ---------------------------------------------------------------- periodic

PeriodicFourier PeriodicFourier::from_terms(int dim, const std::vector<std::pair<std::vector<int>, double>>& terms) {
  if (dim < 1) throw ConfigError("periodic kernel: dimension must be >= 1");
  std::map<std::pair<int, std::vector<int>>, double> reps;
  for (const auto& [m, c] : terms) {
    if (static_cast<int>(m.size()) != dim)
      throw ConfigError("periodic kernel: frequency has " + std::to_string(m.size()) +
                        " entries, expected " + std::to_string(dim));
    if (!(c >= 0.0) || !std::isfinite(c))
      throw ConfigError("periodic kernel: negative Fourier coefficient " + std::to_string(c) +
                        " makes the kernel indefinite");
    auto key = canonical(m);
    int norm2 = 0;
    for (int v : key) norm2 += v * v;
    auto [it, inserted] = reps.emplace(std::make_pair(norm2, key), c);
    if (!inserted && std::abs(it->second - c) > 1e-15 * std::max(1.0, c))
      throw ConfigError("periodic kernel: coefficients of m and -m differ (kernel would not be real)");
  }
  PeriodicFourier p;
  p.dim_ = dim;
  for (const auto& [key, c] : reps) {
    p.freqs_.push_back(key.second);
    p.coefs_.push_back(c);
  }
  if (dim == 1) {
    p.contiguous_1d_ = true;
    for (std::size_t i = 0; i < p.freqs_.size(); ++i)
      if (p.freqs_[i][0] != static_cast<int>(i)) p.contiguous_1d_ = false;
  }
  return p;
}

PeriodicFourier PeriodicFourier::power_law(int dim, double decay, int max_freq, double scale) {
  if (!(decay > 1.0)) throw ConfigError("periodic kernel: decay must exceed 1 for a trace-class kernel");
  if (max_freq < 0) throw ConfigError("periodic kernel: max_freq must be >= 0");
  if (!(scale > 0.0)) throw ConfigError("periodic kernel: scale must be positive");
  std::vector<std::pair<std::vector<int>, double>> terms;
  std::vector<int> m(dim, -max_freq);
  for (;;) {
    if (canonical(m) == m) {
      double norm2 = 0.0;
      for (int v : m) norm2 += static_cast<double>(v) * v;
      terms.emplace_back(m, scale * std::pow(1.0 + norm2, -0.5 * decay * dim));
    }
    int c = dim - 1;
    while (c >= 0 && ++m[c] > max_freq) m[c--] = -max_freq;
    if (c < 0) break;
  }
  auto p = from_terms(dim, terms);
  p.decay_ = decay;
  p.max_freq_ = max_freq;
  p.scale_ = scale;
  return p;
}

double PeriodicFourier::eval(PointRef x, PointRef y) const {
  if (contiguous_1d_) {
    const double delta = x(0) - y(0);
    const double cr = std::cos(delta), ci = std::sin(delta);
    double zr = 1.0, zi = 0.0;
    double sum = coefs_[0];
    for (std::size_t m = 1; m < coefs_.size(); ++m) {
      const double nr = zr * cr - zi * ci;
      zi = zr * ci + zi * cr;
      zr = nr;
      sum += 2.0 * coefs_[m] * zr;
    }
    return sum;
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < freqs_.size(); ++k) {
    if (is_zero(freqs_[k])) {
      sum += coefs_[k];
      continue;
    }
    double phase = 0.0;
    for (int c = 0; c < dim_; ++c) phase += freqs_[k][c] * (x(c) - y(c));
    sum += 2.0 * coefs_[k] * std::cos(phase);
  }
  return sum;
}

double PeriodicFourier::trace() const {
  double t = 0.0;
  for (std::size_t k = 0; k < freqs_.size(); ++k) t += (is_zero(freqs_[k]) ? 1.0 : 2.0) * coefs_[k];
  return t;
}

Eigen::MatrixXd PeriodicFourier::features(const Points& X) const {
  if (X.cols() != dim_) throw ConfigError("periodic kernel: point dimension mismatch");
  Eigen::Index cols = 0;
  for (const auto& m : freqs_) cols += is_zero(m) ? 1 : 2;
  Eigen::MatrixXd phi(X.rows(), cols);
  const double root2 = std::sqrt(2.0);
  Eigen::Index col = 0;
  for (const auto& m : freqs_) {
    if (is_zero(m)) {
      phi.col(col++).setOnes();
      continue;
    }
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      double phase = 0.0;
      for (int c = 0; c < dim_; ++c) phase += m[c] * X(i, c);
      phi(i, col) = root2 * std::cos(phase);
      phi(i, col + 1) = root2 * std::sin(phase);
    }
    col += 2;
  }
  return phi;
}

Eigen::VectorXd PeriodicFourier::feature_weights() const {
  std::vector<double> w;
  for (std::size_t k = 0; k < freqs_.size(); ++k) {
    w.push_back(coefs_[k]);
    if (!is_zero(freqs_[k])) w.push_back(coefs_[k]);
  }
  return Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
}

// ------------------------------------------------------------- dot product

double DotProduct::operator()(double t) const {
  switch (profile) {
    case Profile::linear: return t;
    case Profile::polynomial: return std::pow(t + offset, degree);
    case Profile::exponential: return std::exp((t - 1.0) / scale);
    case Profile::custom: return custom(t);
  }
  return 0.0;
}

// -------------------------------------------------------------- KernelSpec

KernelSpec::KernelSpec(KernelFamily family) : family_(std::move(family)) {
  std::visit(
      [this](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, Laplace>) {
          if (!(f.bandwidth > 0.0)) throw ConfigError("laplace kernel: bandwidth must be positive");
          kappa2_ = 1.0;
          holder_ = HolderConstants{1.0, std::sqrt(2.0) / f.bandwidth, false};
        } else if constexpr (std::is_same_v<T, Gaussian>) {
          if (!(f.bandwidth > 0.0)) throw ConfigError("gaussian kernel: bandwidth must be positive");
          kappa2_ = 1.0;
          holder_ = HolderConstants{1.0, std::sqrt(2.0) * std::exp(-0.5) / f.bandwidth, false};
        } else if constexpr (std::is_same_v<T, Matern>) {
          if (!(f.nu > 0.0)) throw ConfigError("matern kernel: nu must be positive");
          if (!(f.lengthscale > 0.0)) throw ConfigError("matern kernel: lengthscale must be positive");
          kappa2_ = 1.0;
          holder_ = matern_holder(f);
        } else if constexpr (std::is_same_v<T, Constant>) {
          if (!(f.value >= 0.0)) throw ConfigError("constant kernel: value must be nonnegative");
          kappa2_ = f.value;
          holder_ = HolderConstants{1.0, 0.0, false};
        } else if constexpr (std::is_same_v<T, PeriodicFourier>) {
          if (f.coefficients().empty()) throw ConfigError("periodic kernel: no Fourier coefficients");
          kappa2_ = f.trace();
          double lip = 0.0;
          for (std::size_t k = 0; k < f.frequencies().size(); ++k) {
            double norm2 = 0.0;
            for (int v : f.frequencies()[k]) norm2 += static_cast<double>(v) * v;
            lip += 2.0 * f.coefficients()[k] * std::sqrt(norm2);
          }
          holder_ = HolderConstants{1.0, std::sqrt(2.0) * lip, false};
        } else if constexpr (std::is_same_v<T, DotProduct>) {
          if (f.profile == DotProduct::Profile::custom && !f.custom)
            throw ConfigError("dot-product kernel: custom profile without a function");
          if (f.profile == DotProduct::Profile::exponential && !(f.scale > 0.0))
            throw ConfigError("dot-product kernel: exponential scale must be positive");
          if (f.profile == DotProduct::Profile::polynomial && (f.offset < 0.0 || f.degree < 0.0))
            throw ConfigError("dot-product kernel: polynomial needs offset >= 0 and degree >= 0");
          kappa2_ = f(1.0);
          switch (f.profile) {
            case DotProduct::Profile::linear: holder_ = HolderConstants{1.0, 1.0, true}; break;
            case DotProduct::Profile::polynomial:
              if (f.degree >= 1.0)
                holder_ = HolderConstants{1.0, f.degree * std::pow(1.0 + f.offset, f.degree - 1.0), true};
              break;
            case DotProduct::Profile::exponential: holder_ = HolderConstants{1.0, 1.0 / f.scale, true}; break;
            case DotProduct::Profile::custom: break;
          }
        } else if constexpr (std::is_same_v<T, Ntk2>) {
          kappa2_ = 2.0;
          // |f(t)-f(s)| <= 2|t-s| + (1/pi) sqrt(2|t-s|) and |t-s| <= 2.
          holder_ = HolderConstants{0.5, 2.0 * std::sqrt(2.0) + std::sqrt(2.0) / kPi, true};
        }
      },
      family_);
}

KernelSpec KernelSpec::linear_dot() {
  DotProduct d;
  d.profile = DotProduct::Profile::linear;
  d.name = "linear";
  return KernelSpec(d);
}

KernelSpec KernelSpec::polynomial_dot(double degree, double offset) {
  DotProduct d;
  d.profile = DotProduct::Profile::polynomial;
  d.degree = degree;
  d.offset = offset;
  d.name = "polynomial";
  return KernelSpec(d);
}

KernelSpec KernelSpec::exponential_dot(double scale) {
  DotProduct d;
  d.profile = DotProduct::Profile::exponential;
  d.scale = scale;
  d.name = "exponential";
  return KernelSpec(d);
}

KernelSpec KernelSpec::custom_dot(std::string name, std::function<double(double)> f) {
  DotProduct d;
  d.profile = DotProduct::Profile::custom;
  d.name = std::move(name);
  d.custom = std::move(f);
  return KernelSpec(d);
}

std::string KernelSpec::family_name() const {
  return std::visit(
      [](const auto& f) -> std::string {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, Laplace>) return "laplace";
        else if constexpr (std::is_same_v<T, Gaussian>) return "gaussian";
        else if constexpr (std::is_same_v<T, Matern>) return "matern";
        else if constexpr (std::is_same_v<T, Constant>) return "constant";
        else if constexpr (std::is_same_v<T, PeriodicFourier>) return "periodic";
        else if constexpr (std::is_same_v<T, DotProduct>) return "dot_product";
        else return "ntk2";
      },
      family_);
}

bool KernelSpec::is_dot_product() const {
  return std::holds_alternative<DotProduct>(family_) || std::holds_alternative<Ntk2>(family_);
}

double KernelSpec::profile(double t) const {
  if (const auto* d = std::get_if<DotProduct>(&family_)) return (*d)(t);
  if (std::holds_alternative<Ntk2>(family_)) return ntk2_profile(t);
  throw ConfigError("kernel '" + family_name() + "' is not a dot-product kernel");
}

double KernelSpec::operator()(PointRef x, PointRef y) const {
  if (x.size() != y.size()) throw ConfigError("kernel evaluated on points of different dimension");
  return std::visit(
      [&](const auto& f) -> double {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, Laplace>) {
          return std::exp(-(x - y).norm() / f.bandwidth);
        } else if constexpr (std::is_same_v<T, Gaussian>) {
          return std::exp(-(x - y).squaredNorm() / (2.0 * f.bandwidth * f.bandwidth));
        } else if constexpr (std::is_same_v<T, Matern>) {
          return matern_value(f, (x - y).norm());
        } else if constexpr (std::is_same_v<T, Constant>) {
          return f.value;
        } else if constexpr (std::is_same_v<T, PeriodicFourier>) {
          return f.eval(x, y);
        } else if constexpr (std::is_same_v<T, DotProduct>) {
          return f(clamp_dot(x.dot(y)));
        } else {
          return ntk2_profile(clamp_dot(x.dot(y)));
        }
      },
      family_);
}

std::optional<double> KernelSpec::decay_exponent(const Domain& domain) const {
  const double intrinsic = domain.kind() == DomainKind::sphere ? domain.dim() - 1 : domain.dim();
  if (const auto* l = std::get_if<Laplace>(&family_)) {
    (void)l;
    if (domain.kind() == DomainKind::sphere) return std::nullopt;
    return (1.0 + intrinsic) / intrinsic;
  }
  if (const auto* m = std::get_if<Matern>(&family_)) {
    if (domain.kind() == DomainKind::sphere) return std::nullopt;
    return (2.0 * m->nu + intrinsic) / intrinsic;
  }
  if (const auto* p = std::get_if<PeriodicFourier>(&family_)) {
    if (domain.kind() == DomainKind::torus && p->decay()) return p->decay();
    return std::nullopt;
  }
  if (std::holds_alternative<Ntk2>(family_) && domain.kind() == DomainKind::sphere && domain.dim() >= 3)
    return static_cast<double>(domain.dim()) / (domain.dim() - 1);
  return std::nullopt;
}

// -------------------------------------------------------------------- gram

Eigen::MatrixXd cross_gram(const KernelSpec& spec, const Points& a, const Points& b, unsigned workers) {
  if (a.cols() != b.cols()) throw ConfigError("cross_gram: point dimension mismatch");
  if (const auto* p = std::get_if<PeriodicFourier>(&spec.family())) {
    const Eigen::VectorXd w = p->feature_weights();
    const Eigen::MatrixXd fa = p->features(a);
    const Eigen::MatrixXd fb = p->features(b);
    return fa * w.asDiagonal() * fb.transpose();
  }
  Eigen::MatrixXd out(a.rows(), b.rows());
  parallel_for(static_cast<std::size_t>(a.rows()), workers, [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < b.rows(); ++j) out(r, j) = spec(a.row(r), b.row(j));
  });
  return out;
}

void check_distinct(const Points& X, double tol) {
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = i + 1; j < X.rows(); ++j)
      if ((X.row(i) - X.row(j)).norm() <= tol)
        throw DuplicatePointsError(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
}

struct GramMatrix::Cache {
  std::once_flag once;
  SymmetricEigen eigen;
};

GramMatrix::GramMatrix(Eigen::MatrixXd raw) : raw_(std::move(raw)), cache_(std::make_shared<Cache>()) {
  if (raw_.rows() != raw_.cols()) throw ConfigError("GramMatrix: matrix is not square");
}

const SymmetricEigen& GramMatrix::eigen() const {
  std::call_once(cache_->once, [this] { cache_->eigen = SymmetricEigen::compute(raw_); });
  return cache_->eigen;
}

bool GramMatrix::is_psd() const {
  const auto& e = eigen();
  if (e.size() == 0) return true;
  return e.min_value() >= -1e-10 * std::max(std::abs(e.max_value()), 1e-300);
}

double GramMatrix::symmetry_error() const { return (raw_ - raw_.transpose()).cwiseAbs().maxCoeff(); }

void GramMatrix::write_csv(std::ostream& os) const {
  const auto old = os.precision(17);
  for (Eigen::Index i = 0; i < raw_.rows(); ++i) {
    for (Eigen::Index j = 0; j < raw_.cols(); ++j) {
      if (j) os << ',';
      os << raw_(i, j);
    }
    os << '\n';
  }
  os.precision(old);
}

GramMatrix gram(const KernelSpec& spec, const Points& X, unsigned workers) {
  if (X.rows() == 0) throw ConfigError("gram: empty point set");
  check_distinct(X);
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd raw(n, n);
  if (const auto* p = std::get_if<PeriodicFourier>(&spec.family())) {
    const Eigen::MatrixXd scaled = p->features(X) * p->feature_weights().cwiseSqrt().asDiagonal();
    raw.setZero();
    raw.selfadjointView<Eigen::Lower>().rankUpdate(scaled);
  } else {
    parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t ii) {
      const auto i = static_cast<Eigen::Index>(ii);
      for (Eigen::Index j = 0; j <= i; ++j) raw(i, j) = spec(X.row(i), X.row(j));
    });
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) raw(i, j) = raw(j, i);
  return GramMatrix(std::move(raw));
}

// ------------------------------------------------------------------ holder

HolderEstimate estimate_holder(const KernelSpec& spec, const Domain& domain, std::size_t probes,
                               std::uint64_t seed) {
  if (probes < 100) throw ConfigError("estimate_holder: need at least 100 probes");
  Rng rng(seed);
  std::uniform_real_distribution<double> log_step(-7.0, -1.0);
  std::vector<double> dist, diff;
  dist.reserve(probes);
  diff.reserve(probes);
  HolderEstimate est;
  est.in_argument = spec.is_dot_product();

  if (est.in_argument) {
    if (domain.kind() != DomainKind::sphere)
      throw ConfigError("estimate_holder: dot-product kernels live on a sphere domain");
    for (std::size_t p = 0; p < probes; ++p) {
      const double sign = (p % 2 == 0) ? 1.0 : -1.0;
      const double h = std::pow(10.0, log_step(rng));
      const double t1 = sign, t2 = sign * (1.0 - h);
      dist.push_back(h);
      diff.push_back(std::abs(spec.profile(t1) - spec.profile(t2)));
    }
  } else {
    const int d = domain.dim();
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t p = 0; p < probes; ++p) {
      const Points base = sample_iid(domain, 2, derive_seed(seed, {p}));
      const double h = std::pow(10.0, log_step(rng));
      Eigen::RowVectorXd dir(2 * d);
      for (int c = 0; c < 2 * d; ++c) dir(c) = normal(rng);
      dir *= h / dir.norm();
      Eigen::RowVectorXd y1 = base.row(0) + dir.head(d);
      Eigen::RowVectorXd y2 = base.row(1) + dir.tail(d);
      if (domain.kind() == DomainKind::sphere) {
        y1.normalize();
        y2.normalize();
      }
      Eigen::RowVectorXd delta(2 * d);
      delta << base.row(0) - y1, base.row(1) - y2;
      dist.push_back(delta.norm());
      diff.push_back(std::abs(spec(base.row(0), base.row(1)) - spec(y1, y2)));
    }
  }

  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] > 1e-10 && diff[i] > 0.0) {
      lx.push_back(std::log(dist[i]));
      ly.push_back(std::log(diff[i]));
    }
  }
  const bool any_separated = std::any_of(dist.begin(), dist.end(), [](double v) { return v > 1e-10; });
  if (!any_separated) throw NumericalError("estimate_holder: degenerate probe set (all distances below 1e-10)");
  est.probes = lx.size();
  if (lx.size() < 10) {
    // Kernel constant along every probe: Lipschitz with constant 0.
    est.exponent = 1.0;
    est.constant = 0.0;
    return est;
  }
  const LineFit fit = fit_line(lx, ly);
  est.exponent = std::min(fit.slope, 1.5);
  est.residual = fit.rms_residual;
  for (std::size_t i = 0; i < dist.size(); ++i)
    if (dist[i] > 1e-10) est.constant = std::max(est.constant, diff[i] / std::pow(dist[i], est.exponent));
  return est;
}

}  // namespace kilab
