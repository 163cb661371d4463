#include "kilab/spectral.hpp"

#include <algorithm>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "kilab/errors.hpp"
#include "kilab/orthopoly.hpp"
#include "kilab/stats.hpp"

namespace kilab {

namespace {

// Real Fourier basis on the torus, sorted by eigenvalue.
class FourierSystem final : public EigenfunctionSystem {
 public:
  struct Mode {
    std::vector<int> freq;
    int type;  // 0 constant, 1 cosine, 2 sine
    double eigenvalue;
  };

  explicit FourierSystem(std::vector<Mode> modes) : modes_(std::move(modes)) {}

  std::size_t count() const override { return modes_.size(); }

  double weighted_sum(PointRef x, PointRef y, double alpha, std::size_t truncation) const override {
    const std::size_t n = std::min(truncation, modes_.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& m = modes_[i];
      const double w = std::pow(m.eigenvalue, alpha);
      if (m.type == 0) {
        sum += w;
        continue;
      }
      double px = 0.0, py = 0.0;
      for (std::size_t c = 0; c < m.freq.size(); ++c) {
        px += m.freq[c] * x(static_cast<Eigen::Index>(c));
        py += m.freq[c] * y(static_cast<Eigen::Index>(c));
      }
      sum += w * 2.0 * (m.type == 1 ? std::cos(px) * std::cos(py) : std::sin(px) * std::sin(py));
    }
    return sum;
  }

 private:
  std::vector<Mode> modes_;
};

// Spherical harmonic blocks via the addition theorem
// sum_l Y_{n,l}(x) Y_{n,l}(y) = a_n P_n(<x,y>).
class SphereBlockSystem final : public EigenfunctionSystem {
 public:
  SphereBlockSystem(std::vector<SpectrumBlock> sorted_blocks, int dim)
      : blocks_(std::move(sorted_blocks)), dim_(dim) {
    for (const auto& b : blocks_) max_degree_ = std::max(max_degree_, b.degree);
    for (const auto& b : blocks_) total_ += static_cast<std::size_t>(std::llround(b.multiplicity));
  }

  std::size_t count() const override { return total_; }

  double weighted_sum(PointRef x, PointRef y, double alpha, std::size_t truncation) const override {
    std::vector<double> legendre(max_degree_ + 1);
    sphere_legendre_all(dim_, std::clamp(x.dot(y), -1.0, 1.0), legendre);
    double sum = 0.0;
    std::size_t used = 0;
    for (const auto& b : blocks_) {
      const auto mult = static_cast<std::size_t>(std::llround(b.multiplicity));
      if (used + mult > truncation) break;
      used += mult;
      sum += std::pow(b.eigenvalue, alpha) * b.multiplicity * legendre[b.degree];
    }
    return sum;
  }

 private:
  std::vector<SpectrumBlock> blocks_;
  int dim_;
  int max_degree_ = 0;
  std::size_t total_ = 0;
};

std::vector<double> project_profile(const KernelSpec& spec, int d, int n_max, int nodes, ProjectionRule rule) {
  std::vector<double> mu(n_max + 1, 0.0);
  std::vector<double> legendre(n_max + 1);
  double mass = 0.0;
  if (rule == ProjectionRule::angular) {
    const GaussRule gl = gauss_gegenbauer(nodes, 0.0);
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
      const double theta = 0.5 * std::numbers::pi * (gl.nodes[i] + 1.0);
      const double t = std::cos(theta);
      const double w = gl.weights[i] * std::pow(std::sin(theta), d - 2);
      const double f = spec.profile(t);
      sphere_legendre_all(d, t, legendre);
      mass += w;
      for (int n = 0; n <= n_max; ++n) mu[n] += w * f * legendre[n];
    }
  } else {
    const GaussRule gj = gauss_gegenbauer(nodes, 0.5 * (d - 3));
    for (std::size_t i = 0; i < gj.nodes.size(); ++i) {
      const double t = gj.nodes[i];
      const double f = spec.profile(t);
      sphere_legendre_all(d, t, legendre);
      mass += gj.weights[i];
      for (int n = 0; n <= n_max; ++n) mu[n] += gj.weights[i] * f * legendre[n];
    }
  }
  for (double& v : mu) v /= mass;
  return mu;
}

}  // namespace

// ---------------------------------------------------------------- the model

SpectrumModel SpectrumModel::from_list(std::vector<double> eigenvalues) {
  for (double v : eigenvalues)
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("spectrum: eigenvalues must be finite and >= 0");
  std::sort(eigenvalues.begin(), eigenvalues.end(), std::greater<>());
  SpectrumModel m;
  m.kind_ = Kind::explicit_list;
  m.values_ = std::move(eigenvalues);
  return m;
}

SpectrumModel SpectrumModel::power_law(double c, double beta, std::size_t truncation) {
  if (!(c > 0.0)) throw ConfigError("power-law spectrum: c must be positive");
  if (!(beta > 0.0)) throw ConfigError("power-law spectrum: beta must be positive");
  if (truncation < 1) throw ConfigError("power-law spectrum: truncation must be >= 1");
  SpectrumModel m;
  m.kind_ = Kind::closed_form;
  m.values_.resize(truncation);
  for (std::size_t i = 0; i < truncation; ++i) m.values_[i] = c * std::pow(static_cast<double>(i + 1), -beta);
  m.rule_ = [c, beta](double x) { return c * std::pow(x, -beta); };
  m.power_law_ = std::make_pair(c, beta);
  return m;
}

SpectrumModel SpectrumModel::from_blocks(std::vector<SpectrumBlock> blocks, int sphere_dim, std::size_t flatten_limit) {
  double max_mu = 0.0;
  for (const auto& b : blocks) {
    if (!std::isfinite(b.eigenvalue)) throw NumericalError("block spectrum: non-finite eigenvalue");
    max_mu = std::max(max_mu, b.eigenvalue);
  }
  const double zero_tol = 1e-12 * max_mu;
  std::vector<SpectrumBlock> nonzero;
  for (auto& b : blocks) {
    if (b.eigenvalue < -zero_tol)
      throw ConfigError("block spectrum: negative eigenvalue " + std::to_string(b.eigenvalue) + " at degree " +
                        std::to_string(b.degree) + "; the profile is not positive definite on the sphere");
    if (std::abs(b.eigenvalue) <= zero_tol) {
      b.eigenvalue = 0.0;
      continue;
    }
    nonzero.push_back(b);
  }
  std::stable_sort(nonzero.begin(), nonzero.end(),
                   [](const SpectrumBlock& a, const SpectrumBlock& b) { return a.eigenvalue > b.eigenvalue; });
  SpectrumModel m;
  m.kind_ = Kind::block;
  m.sphere_dim_ = sphere_dim;
  for (const auto& b : nonzero) {
    const auto mult = static_cast<std::size_t>(std::llround(b.multiplicity));
    if (m.values_.size() + mult > flatten_limit) break;
    m.values_.insert(m.values_.end(), mult, b.eigenvalue);
  }
  m.blocks_ = std::move(blocks);
  m.eigenfunctions_ = std::make_shared<SphereBlockSystem>(std::move(nonzero), sphere_dim);
  return m;
}

double SpectrumModel::trace() const {
  // Pairwise-stable: sum smallest first.
  double t = 0.0;
  for (auto it = values_.rbegin(); it != values_.rend(); ++it) t += *it;
  return t;
}

// ---------------------------------------------------------------- spectra

SpectrumModel exact_spectrum_torus(const PeriodicFourier& kernel) {
  std::vector<FourierSystem::Mode> modes;
  for (std::size_t k = 0; k < kernel.frequencies().size(); ++k) {
    const double c = kernel.coefficients()[k];
    if (c < 0.0) throw ConfigError("exact_spectrum_torus: negative coefficient; kernel is not PSD");
    if (c == 0.0) continue;
    const auto& m = kernel.frequencies()[k];
    const bool zero = std::all_of(m.begin(), m.end(), [](int v) { return v == 0; });
    if (zero) {
      modes.push_back({m, 0, c});
    } else {
      modes.push_back({m, 1, c});
      modes.push_back({m, 2, c});
    }
  }
  std::stable_sort(modes.begin(), modes.end(),
                   [](const auto& a, const auto& b) { return a.eigenvalue > b.eigenvalue; });
  std::vector<double> values;
  values.reserve(modes.size());
  for (const auto& m : modes) values.push_back(m.eigenvalue);
  auto model = SpectrumModel::from_list(std::move(values));
  model.set_eigenfunctions(std::make_shared<FourierSystem>(std::move(modes)));
  return model;
}

SpectrumModel dot_product_spectrum(const KernelSpec& spec, int d, int n_max, int quad_res, ProjectionRule rule) {
  if (!spec.is_dot_product())
    throw ConfigError("dot_product_spectrum: kernel '" + spec.family_name() + "' is not a dot-product kernel");
  if (d < 3) throw ConfigError("dot_product_spectrum: sphere ambient dimension must be >= 3");
  if (n_max < 8) throw ConfigError("dot_product_spectrum: n_max must be >= 8");
  if (quad_res < n_max + 1) throw ConfigError("dot_product_spectrum: quad_res must exceed n_max");

  const auto coarse = project_profile(spec, d, n_max, quad_res, rule);
  const auto fine = project_profile(spec, d, n_max, 2 * quad_res, rule);
  double scale = 0.0;
  for (double v : fine) scale += std::abs(v);
  for (int n = 0; n <= n_max; ++n) {
    const double diff = std::abs(coarse[n] - fine[n]);
    if (diff > 1e-6 * std::abs(fine[n]) + 1e-14 * scale)
      throw QuadratureNonConvergence("dot_product_spectrum: block " + std::to_string(n) +
                                     " changed by " + std::to_string(diff) +
                                     " between quadrature resolutions; increase quad_res above " +
                                     std::to_string(quad_res));
  }
  std::vector<SpectrumBlock> blocks;
  for (int n = 0; n <= n_max; ++n) blocks.push_back({n, fine[n], harmonic_multiplicity(n, d)});
  return SpectrumModel::from_blocks(std::move(blocks), d);
}

SpectrumModel empirical_spectrum(const GramMatrix& gram) {
  const std::size_t n = gram.n();
  if (n == 0) throw ConfigError("empirical_spectrum: empty Gram matrix");
  const auto& eig = gram.eigen();
  SpectrumModel m;
  m.kind_ = SpectrumModel::Kind::empirical;
  m.values_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = eig.values(static_cast<Eigen::Index>(n - 1 - i)) / static_cast<double>(n);
    if (v < 0.0) {
      v = 0.0;
      ++m.clipped_;
    }
    m.values_[i] = v;
  }
  m.window_ = {std::min<std::size_t>(5, n), std::min(n, std::max<std::size_t>(5, n / 10))};
  return m;
}

DecayFit fit_decay(const SpectrumModel& spectrum, std::size_t i_min, std::size_t i_max) {
  if (i_min < 1 || i_max <= i_min) throw ConfigError("fit_decay: need 1 <= i_min < i_max");
  const auto& v = spectrum.eigenvalues();
  std::vector<double> idx, val;
  for (std::size_t i = i_min; i <= std::min(i_max, v.size()); ++i) {
    if (v[i - 1] > 0.0) {
      idx.push_back(static_cast<double>(i));
      val.push_back(v[i - 1]);
    }
  }
  if (idx.size() < 5) throw NumericalError("fit_decay: fewer than 5 positive eigenvalues in the index range");
  const LineFit fit = fit_loglog(idx, val);
  return {-fit.slope, std::exp(fit.intercept), fit.r2, i_min, std::min(i_max, v.size()), idx.size()};
}

EffectiveDimension effective_dimension(const SpectrumModel& spectrum, double lambda, double p) {
  if (!(lambda > 0.0)) throw ConfigError("effective_dimension: lambda must be positive");
  if (!(p >= 1.0)) throw ConfigError("effective_dimension: p must be >= 1");
  EffectiveDimension out;
  const auto& v = spectrum.eigenvalues();
  for (auto it = v.rbegin(); it != v.rend(); ++it) out.head += std::pow(*it / (*it + lambda), p);
  if (spectrum.has_rule()) {
    const auto& rule = spectrum.rule();
    const double start = static_cast<double>(v.size()) + 0.5;
    auto term = [&](double x) {
      const double r = rule(x);
      return std::pow(r / (r + lambda), p);
    };
    boost::math::quadrature::exp_sinh<double> integrator;
    const double tail = integrator.integrate([&](double u) { return term(start + u); });
    out.tail = std::isfinite(tail) ? tail : std::numeric_limits<double>::infinity();
  }
  out.value = out.head + out.tail;
  out.tail_warning = out.tail > 0.01 * out.head;
  return out;
}

EmbeddingReport embedding_norm(const SpectrumModel& spectrum, double alpha, const QuadratureGrid& grid,
                               std::size_t truncation) {
  const auto* system = spectrum.eigenfunctions();
  if (!system) throw ConfigError("embedding_norm: unsupported spectrum (no eigenfunction evaluator)");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("embedding_norm: alpha must lie in (0, 1]");
  if (truncation < 100) throw ConfigError("embedding_norm: truncation must be >= 100");
  if (grid.size() == 0) throw ConfigError("embedding_norm: empty grid");
  EmbeddingReport rep;
  rep.alpha = alpha;
  rep.truncation = truncation;
  rep.grid_nodes = grid.size();
  rep.value = -std::numeric_limits<double>::infinity();
  rep.min_over_grid = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < grid.nodes.rows(); ++j) {
    const double s = system->weighted_sum(grid.nodes.row(j), grid.nodes.row(j), alpha, truncation);
    rep.value = std::max(rep.value, s);
    rep.min_over_grid = std::min(rep.min_over_grid, s);
  }
  rep.kappa2 = spectrum.trace();
  return rep;
}

std::vector<EmbeddingReport> embedding_divergence_scan(const SpectrumModel& spectrum, double alpha,
                                                       const QuadratureGrid& grid,
                                                       const std::vector<std::size_t>& truncations) {
  std::vector<EmbeddingReport> out;
  for (auto t : truncations) out.push_back(embedding_norm(spectrum, alpha, grid, t));
  return out;
}

double interp_space_norm(const SpectrumModel& spectrum, const std::vector<double>& coeffs, double s) {
  if (!(s >= 0.0)) throw ConfigError("interp_space_norm: s must be >= 0");
  const auto& v = spectrum.eigenvalues();
  if (coeffs.size() > v.size())
    throw ConfigError("interp_space_norm: more coefficients than eigenvalues in the model");
  const double log_max = std::log(std::numeric_limits<double>::max());
  double sum = 0.0;
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    if (coeffs[i] == 0.0) continue;
    if (s == 0.0) {
      sum += coeffs[i] * coeffs[i];
      continue;
    }
    if (v[i] <= 0.0 || -s * std::log(v[i]) > log_max - 1.0)
      throw NumericalError("interp_space_norm: lambda_" + std::to_string(i + 1) + "^{-s} overflows");
    sum += coeffs[i] * coeffs[i] * std::pow(v[i], -s);
  }
  if (!std::isfinite(sum)) throw NumericalError("interp_space_norm: sum overflows");
  return std::sqrt(sum);
}

double mercer_sum(const SpectrumModel& spectrum, PointRef x, PointRef y, std::size_t truncation) {
  const auto* system = spectrum.eigenfunctions();
  if (!system) throw ConfigError("mercer_sum: unsupported spectrum (no eigenfunction evaluator)");
  return system->weighted_sum(x, y, 1.0, truncation);
}

}  // namespace kilab
