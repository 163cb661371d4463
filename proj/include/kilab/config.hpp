#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kilab/geometry.hpp"
#include "kilab/kernels.hpp"
#include "kilab/spectral.hpp"

namespace kilab {

using Json = nlohmann::ordered_json;

/// a cos(<m, x>) + b sin(<m, x>) on the torus; on the unit cube the phase
/// is 2 pi <m, x>.
struct FourierTerm {
  std::vector<int> m;
  double cos_coef = 0.0;
  double sin_coef = 0.0;
};

/// c P_n(<u, x>) with P_n the dimension-d Legendre polynomial, P_n(1) = 1.
struct ZonalTerm {
  std::vector<double> direction;
  int degree = 0;
  double coef = 0.0;
};

/// Regression function given by a finite expansion in an orthogonal basis
/// of L2(mu), so its L2 norm is available in closed form.
class Truth {
 public:
  static Truth fourier(const Domain& domain, std::vector<FourierTerm> terms);
  static Truth zonal(const Domain& domain, std::vector<ZonalTerm> terms);
  /// sin(x1) + 0.5 cos(2 x1) style default for the domain.
  static Truth default_for(const Domain& domain);

  double operator()(PointRef x) const;
  Eigen::VectorXd evaluate(const Points& X) const;
  double l2_norm_squared() const { return l2_sq_; }
  /// sup |f| <= sum of |coefficients|.
  double sup_bound() const { return sup_; }
  bool is_zonal() const { return zonal_; }
  const std::vector<FourierTerm>& fourier_terms() const { return fourier_; }
  const std::vector<ZonalTerm>& zonal_terms() const { return zonal_terms_; }
  const Domain& domain() const { return domain_; }

 private:
  Truth() : domain_(Domain::torus(1)) {}
  Domain domain_;
  bool zonal_ = false;
  double freq_scale_ = 1.0;
  std::vector<FourierTerm> fourier_;
  std::vector<ZonalTerm> zonal_terms_;
  double l2_sq_ = 0.0;
  double sup_ = 0.0;
};

enum class NoiseModel { gaussian, rademacher };

struct NoiseConfig {
  NoiseModel model = NoiseModel::gaussian;
  double sigma = 0.5;
};

/// Draws n noise values with standard deviation sigma.
Eigen::VectorXd draw_noise(const NoiseConfig& noise, std::size_t n, std::uint64_t seed);

enum class IntegrationMethod { quadrature, monte_carlo, exact };

struct IntegrationConfig {
  IntegrationMethod method = IntegrationMethod::quadrature;
  int resolution = 0;     // quadrature; 0 selects a domain default
  std::size_t nodes = 0;  // monte_carlo
};

/// Either an explicit list or n^{min_exponent} .. n^{max_exponent}.
struct LambdaGrid {
  std::vector<double> values;
  std::optional<double> min_exponent;
  double max_exponent = -0.25;
  std::size_t count = 30;
  bool explicit_values() const { return !values.empty(); }
  std::vector<double> resolve(std::size_t n) const;
};

struct NtkConfig {
  std::vector<int> widths{256, 1024, 4096};
  double eta = 2.5;
  std::size_t steps = 60000;
  double tolerance = 1e-8;
  bool write_traces = true;
};

struct ConcentrationConfig {
  std::size_t n = 500;
  std::size_t trials = 1000;
  double delta = 0.05;
  /// Overrides the truth's sup bound M when set; must dominate sup |f|.
  std::optional<double> sup_bound;
};

struct SpectrumConfig {
  int n_max = 64;
  int quad_res = 128;
  std::size_t empirical_n = 0;  // 0: largest entry of n_grid
  /// Empirical fit window [lo, hi] (1-based); default [5, max(5, n/10)].
  std::optional<std::pair<std::size_t, std::size_t>> window;
};

struct ExperimentConfig {
  KernelSpec kernel;
  Domain domain = Domain::torus(1);
  Truth truth = Truth::default_for(Domain::torus(1));
  NoiseConfig noise;
  std::vector<std::size_t> n_grid{64, 128, 256, 512, 1024, 2048};
  LambdaGrid lambda_grid;
  std::size_t seeds = 20;
  std::uint64_t seed = 0;
  IntegrationConfig integration;
  std::string output_dir = "out";
  bool contrast = false;
  double exponent_floor = -0.2;
  /// Noiseless contrast runs pass when the exponent is below this.
  double contrast_ceiling = -0.5;
  std::optional<double> beta;
  bool compute_variance = true;
  std::size_t noise_redraws = 0;
  std::size_t bootstrap = 200;
  NtkConfig ntk;
  ConcentrationConfig concentration;
  SpectrumConfig spectrum;
  unsigned workers = 0;
  bool timing = false;
  std::vector<std::string> warnings;

  /// Decay exponent from the config override or the kernel's closed form.
  std::optional<double> resolved_beta() const;
};

Json kernel_to_json(const KernelSpec& spec);
KernelSpec kernel_from_json(const Json& j);
Json domain_to_json(const Domain& domain);
Domain domain_from_json(const Json& j);
Json truth_to_json(const Truth& truth);
Truth truth_from_json(const Json& j, const Domain& domain);
Json config_to_json(const ExperimentConfig& config);

/// Parses and range-checks; every default is filled in. `verb` enables
/// verb-specific checks (sigma > 0 outside contrast mode for scaling runs).
ExperimentConfig parse_config(const Json& j, const std::string& verb = "");
/// Reads, parses and validates a config file. Error messages name the
/// offending field (or the path, for unreadable files).
ExperimentConfig load_config(const std::filesystem::path& path, const std::string& verb = "");
/// load_config, then writes resolved_config.json into the output directory.
ExperimentConfig validate_config(const std::filesystem::path& path, const std::string& verb = "");
void write_resolved_config(const ExperimentConfig& config);

Json spectrum_to_json(const SpectrumModel& spectrum);

}  // namespace kilab
