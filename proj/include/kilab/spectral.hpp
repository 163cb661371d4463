#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "kilab/geometry.hpp"
#include "kilab/kernels.hpp"

namespace kilab {

/// Orthonormal eigenfunctions in L2(mu), ordered to match the eigenvalue
/// sequence of the owning SpectrumModel.
class EigenfunctionSystem {
 public:
  virtual ~EigenfunctionSystem() = default;
  /// Number of eigenfunctions available.
  virtual std::size_t count() const = 0;
  /// sum_{i < truncation} lambda_i^alpha e_i(x) e_i(y). Block systems only
  /// include whole blocks that fit inside the truncation.
  virtual double weighted_sum(PointRef x, PointRef y, double alpha, std::size_t truncation) const = 0;
};

/// One eigenspace of a dot-product kernel: eigenvalue mu_n of the degree-n
/// spherical harmonics, with multiplicity a_n.
struct SpectrumBlock {
  int degree = 0;
  double eigenvalue = 0.0;
  double multiplicity = 1.0;
};

struct DecayFit {
  double beta = 0.0;
  double c = 0.0;
  double r2 = 0.0;
  std::size_t i_min = 0;
  std::size_t i_max = 0;
  std::size_t points = 0;
};

class SpectrumModel {
 public:
  enum class Kind { explicit_list, closed_form, block, empirical };

  /// Sorts descending; entries must be >= 0.
  static SpectrumModel from_list(std::vector<double> eigenvalues);
  /// lambda_i = c * i^{-beta}; `truncation` terms are materialized and the
  /// remainder is handled analytically where supported.
  static SpectrumModel power_law(double c, double beta, std::size_t truncation);
  /// Block spectrum; zero blocks are kept in blocks() but not flattened.
  static SpectrumModel from_blocks(std::vector<SpectrumBlock> blocks, int sphere_dim,
                                   std::size_t flatten_limit = 10'000'000);

  Kind kind() const { return kind_; }
  /// Non-increasing, flattened sequence (1-based index i is element i-1).
  const std::vector<double>& eigenvalues() const { return values_; }
  std::size_t size() const { return values_.size(); }
  const std::vector<SpectrumBlock>& blocks() const { return blocks_; }
  int sphere_dim() const { return sphere_dim_; }
  /// Continuous extension x -> lambda(x) of a closed-form sequence.
  const std::function<double(double)>& rule() const { return rule_; }
  bool has_rule() const { return static_cast<bool>(rule_); }
  /// Parameters of a power-law closed form.
  std::optional<std::pair<double, double>> power_law_params() const { return power_law_; }

  const EigenfunctionSystem* eigenfunctions() const { return eigenfunctions_.get(); }
  void set_eigenfunctions(std::shared_ptr<const EigenfunctionSystem> e) { eigenfunctions_ = std::move(e); }

  const std::optional<DecayFit>& decay() const { return decay_; }
  void set_decay(DecayFit fit) { decay_ = fit; }

  /// Empirical spectra: number of negative eigenvalues clipped to zero, and
  /// the index window in which estimates are trusted.
  std::size_t clipped() const { return clipped_; }
  std::pair<std::size_t, std::size_t> validity_window() const { return window_; }

  double trace() const;

 private:
  friend SpectrumModel empirical_spectrum(const GramMatrix& gram);
  Kind kind_ = Kind::explicit_list;
  std::vector<double> values_;
  std::vector<SpectrumBlock> blocks_;
  int sphere_dim_ = 0;
  std::function<double(double)> rule_;
  std::optional<std::pair<double, double>> power_law_;
  std::shared_ptr<const EigenfunctionSystem> eigenfunctions_;
  std::optional<DecayFit> decay_;
  std::size_t clipped_ = 0;
  std::pair<std::size_t, std::size_t> window_{1, 0};
};

/// Eigenvalues are the Fourier coefficients sorted descending (each nonzero
/// frequency pair contributes a cos and a sin eigenfunction); zero
/// coefficients are dropped.
SpectrumModel exact_spectrum_torus(const PeriodicFourier& kernel);

enum class ProjectionRule {
  /// Gauss-Legendre in theta after t = cos(theta); exponential convergence
  /// for profiles with sqrt(1 - t^2) endpoint behaviour.
  angular,
  /// Gauss-Jacobi in t with weight (1 - t^2)^{(d-3)/2}.
  gauss_jacobi,
};

/// Blocks mu_n, n = 0..n_max, by projecting the profile onto the normalized
/// Legendre polynomials of dimension d; checked against a rule with twice the
/// nodes.
SpectrumModel dot_product_spectrum(const KernelSpec& spec, int d, int n_max, int quad_res,
                                   ProjectionRule rule = ProjectionRule::angular);

/// Eigenvalues of K(X,X)/n; negatives clipped to zero and counted.
SpectrumModel empirical_spectrum(const GramMatrix& gram);

/// Least-squares slope of log lambda_i against log i over [i_min, i_max]
/// (1-based, inclusive, zeros skipped).
DecayFit fit_decay(const SpectrumModel& spectrum, std::size_t i_min, std::size_t i_max);

struct EffectiveDimension {
  double value = 0.0;
  double head = 0.0;
  double tail = 0.0;
  bool tail_warning = false;
};

/// N_p(lambda) = sum_i (lambda_i / (lambda_i + lambda))^p.
EffectiveDimension effective_dimension(const SpectrumModel& spectrum, double lambda, double p);

struct EmbeddingReport {
  double alpha = 1.0;
  double value = 0.0;  // truncated estimate of M_alpha^2 = ess sup sum lambda_i^alpha e_i(x)^2
  double min_over_grid = 0.0;
  std::size_t truncation = 0;
  std::size_t grid_nodes = 0;
  double kappa2 = 0.0;
};

EmbeddingReport embedding_norm(const SpectrumModel& spectrum, double alpha, const QuadratureGrid& grid,
                               std::size_t truncation);

/// Partial sums of the embedding norm at several truncations. A sequence that
/// keeps growing is evidence that [H]^alpha does not embed in L-infinity.
std::vector<EmbeddingReport> embedding_divergence_scan(const SpectrumModel& spectrum, double alpha,
                                                       const QuadratureGrid& grid,
                                                       const std::vector<std::size_t>& truncations);

/// ||f||_{[H]^s} = (sum b_i^2 lambda_i^{-s})^{1/2} for f = sum b_i e_i.
double interp_space_norm(const SpectrumModel& spectrum, const std::vector<double>& coeffs, double s);

/// sum_{i < truncation} lambda_i e_i(x) e_i(y).
double mercer_sum(const SpectrumModel& spectrum, PointRef x, PointRef y, std::size_t truncation);

}  // namespace kilab
