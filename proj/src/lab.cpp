#include "kilab/lab.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "kilab/errors.hpp"
#include "kilab/ntk.hpp"
#include "kilab/parallel.hpp"
#include "kilab/random.hpp"
#include "kilab/spectral.hpp"
#include "kilab/stats.hpp"
#include "kilab/variance.hpp"

namespace kilab {

namespace {

std::pair<std::size_t, std::size_t> fit_window(const ExperimentConfig& c, const SpectrumModel& emp) {
  if (!c.spectrum.window) return emp.validity_window();
  return {c.spectrum.window->first, std::min(c.spectrum.window->second, emp.size())};
}

constexpr std::size_t kMaxResamples = 3;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

class Stopwatch {
 public:
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// One training sample that admits interpolation.
struct Draw {
  Points X;
  Eigen::VectorXd f_star;
  Eigen::VectorXd Y;
  GramMatrix gram;
  Eigen::VectorXd dual;
  std::size_t attempt = 0;
};

std::optional<Draw> draw_interpolation(const ExperimentConfig& c, const KernelSpec& spec, std::size_t n,
                                       std::size_t s, std::vector<std::string>& failures) {
  for (std::size_t attempt = 0; attempt <= kMaxResamples; ++attempt) {
    Draw d;
    d.attempt = attempt;
    d.X = sample_iid(c.domain, n, derive_seed(c.seed, {tag(Stream::inputs), n, s, attempt}));
    d.f_star = c.truth.evaluate(d.X);
    d.Y = d.f_star + draw_noise(c.noise, n, derive_seed(c.seed, {tag(Stream::noise), n, s, attempt, 0}));
    try {
      d.gram = gram(spec, d.X);
      d.dual = solve_dual(d.gram, d.Y, 0.0);
      return d;
    } catch (const InterpolationInfeasible& e) {
      failures.push_back(e.what());
    } catch (const DuplicatePointsError& e) {
      failures.push_back(e.what());
    }
  }
  return std::nullopt;
}

double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

std::vector<double> as_vector(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

}  // namespace

QuadratureGrid integration_grid(const ExperimentConfig& config) {
  if (config.integration.method == IntegrationMethod::monte_carlo)
    return monte_carlo_grid(config.domain, config.integration.nodes,
                            derive_seed(config.seed, {tag(Stream::integration)}));
  return quadrature(config.domain, config.integration.resolution);
}

ExponentFit fit_exponent(const std::vector<std::size_t>& n, const std::vector<std::vector<double>>& values,
                         std::size_t bootstrap, std::uint64_t seed) {
  if (n.size() != values.size()) throw ConfigError("fit_exponent: n and values differ in length");
  ExponentFit out;
  for (std::size_t k = 0; k < n.size(); ++k) {
    if (values[k].empty()) continue;
    const double m = median(values[k]);
    if (!(m > 0.0)) continue;
    out.n.push_back(n[k]);
    out.medians.push_back(m);
  }
  if (out.n.size() < 2) throw ConfigError("fit_exponent: need positive medians at two or more sample sizes");
  const auto xs = as_vector(out.n);
  const LineFit f = fit_loglog(xs, out.medians);
  out.exponent = f.slope;
  out.intercept = f.intercept;
  out.r2 = f.r2;
  out.band_low = out.band_high = f.slope;
  if (bootstrap > 0) {
    Rng rng(derive_seed(seed, {tag(Stream::bootstrap)}));
    std::vector<double> slopes;
    slopes.reserve(bootstrap);
    for (std::size_t b = 0; b < bootstrap; ++b) {
      std::vector<double> bx, by;
      for (std::size_t k = 0; k < n.size(); ++k) {
        const auto& v = values[k];
        if (v.empty()) continue;
        std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
        std::vector<double> resample(v.size());
        for (auto& r : resample) r = v[pick(rng)];
        const double m = median(std::move(resample));
        if (m > 0.0) {
          bx.push_back(static_cast<double>(n[k]));
          by.push_back(m);
        }
      }
      if (bx.size() >= 2) slopes.push_back(fit_loglog(bx, by).slope);
    }
    if (!slopes.empty()) {
      out.band_low = quantile(slopes, 0.025);
      out.band_high = quantile(slopes, 0.975);
    }
  }
  return out;
}

// ---------------------------------------------------------------- interpolation scaling

ScalingReport run_interpolation_scaling(const ExperimentConfig& c, unsigned workers) {
  workers = worker_count(workers ? workers : c.workers);
  const QuadratureGrid grid = integration_grid(c);
  const Eigen::VectorXd truth_on_grid = c.truth.evaluate(grid.nodes);
  const double sigma2 = c.noise.sigma * c.noise.sigma;
  const auto* periodic = std::get_if<PeriodicFourier>(&c.kernel.family());

  struct Conditional {
    double mean = 0.0;
    double stderr_ = 0.0;
    double v0 = 0.0;
    bool passed = false;
  };
  struct Cell {
    std::size_t n = 0, seed = 0;
    bool ok = false;
    std::vector<std::string> failures;
    std::size_t attempt = 0;
    double risk = kNan, variance = kNan, ms = 0.0, min_eigenvalue = kNan;
    std::optional<Conditional> conditional;
  };
  std::vector<Cell> cells;
  for (std::size_t n : c.n_grid)
    for (std::size_t s = 0; s < c.seeds; ++s) {
      Cell cell;
      cell.n = n;
      cell.seed = s;
      cells.push_back(std::move(cell));
    }

  parallel_for(cells.size(), workers, [&](std::size_t idx) {
    Cell& cell = cells[idx];
    Stopwatch clock;
    auto draw = draw_interpolation(c, c.kernel, cell.n, cell.seed, cell.failures);
    if (!draw) return;
    cell.ok = true;
    cell.attempt = draw->attempt;
    cell.min_eigenvalue = draw->gram.eigen().min_value() / static_cast<double>(cell.n);
    const Eigen::MatrixXd cross = cross_gram(c.kernel, grid.nodes, draw->X);  // R x n
    cell.risk = excess_risk(cross * draw->dual, truth_on_grid, grid);
    std::optional<VarianceIntegrator> integ;
    if (c.compute_variance || c.noise_redraws > 0) {
      integ = (c.integration.method == IntegrationMethod::exact && periodic)
                  ? VarianceIntegrator::from_mercer(draw->gram, *periodic, draw->X)
                  : VarianceIntegrator::from_cross(draw->gram, cross.transpose(), grid);
      cell.variance = integ->value(sigma2, 0.0);
    }
    if (c.noise_redraws > 0) {
      std::vector<double> risks;
      for (std::size_t r = 0; r < c.noise_redraws; ++r) {
        const Eigen::VectorXd y =
            draw->f_star + draw_noise(c.noise, cell.n,
                                      derive_seed(c.seed, {tag(Stream::noise), cell.n, cell.seed, draw->attempt, r + 1}));
        risks.push_back(excess_risk(cross * solve_dual(draw->gram, y, 0.0), truth_on_grid, grid));
      }
      Conditional cond;
      cond.mean = mean(risks);
      cond.stderr_ = risks.size() > 1 ? stddev(risks) / std::sqrt(static_cast<double>(risks.size())) : 0.0;
      cond.v0 = cell.variance;
      cond.passed = cond.mean >= cond.v0 - 3.0 * cond.stderr_;
      cell.conditional = cond;
    }
    cell.ms = clock.ms();
  });

  ScalingReport report;
  report.experiment = "interpolation_scaling";
  report.config = config_to_json(c);
  report.warnings = c.warnings;
  Json failures = Json::array();
  Json conditional = Json::array();
  bool conditional_ok = true;
  std::map<std::size_t, std::vector<double>> risks, variances;
  std::size_t resampled = 0;
  for (const auto& cell : cells) {
    if (!cell.ok) {
      failures.push_back({{"n", cell.n}, {"seed", cell.seed}, {"reasons", cell.failures}});
      continue;
    }
    if (cell.attempt > 0) ++resampled;
    report.records.push_back({cell.n, 0.0, cell.seed, cell.risk, cell.variance, c.timing ? cell.ms : 0.0});
    risks[cell.n].push_back(cell.risk);
    if (std::isfinite(cell.variance)) variances[cell.n].push_back(cell.variance);
    if (cell.conditional) {
      const auto& k = *cell.conditional;
      conditional.push_back({{"n", cell.n}, {"seed", cell.seed}, {"mean_risk", k.mean}, {"stderr", k.stderr_},
                             {"variance_0", k.v0}, {"passed", k.passed}});
      conditional_ok = conditional_ok && k.passed;
    }
  }
  if (report.records.empty()) {
    std::string reason = "no draw could be interpolated";
    if (!cells.empty() && !cells.front().failures.empty()) reason += " (" + cells.front().failures.front() + ")";
    throw NumericalError(reason);
  }
  report.summary["failures"] = failures;
  report.summary["resampled_draws"] = resampled;
  report.summary["sigma"] = c.noise.sigma;
  report.summary["contrast"] = c.contrast;
  report.summary["integration"] = {{"method", grid.monte_carlo ? "monte_carlo" : "quadrature"}, {"nodes", grid.size()}};

  std::vector<std::size_t> ns;
  std::vector<std::vector<double>> per_n;
  for (auto& [n, v] : risks) {
    ns.push_back(n);
    per_n.push_back(v);
  }
  Json medians = Json::array();
  for (std::size_t k = 0; k < ns.size(); ++k) {
    Json m = {{"n", ns[k]}, {"median_risk", median(per_n[k])}, {"seeds", per_n[k].size()}};
    if (variances.count(ns[k])) m["median_variance_0"] = median(variances[ns[k]]);
    medians.push_back(m);
  }
  report.summary["per_n"] = medians;

  const bool noiseless = c.noise.sigma == 0.0;
  bool passed = !ns.empty();
  std::string verdict;
  if (ns.size() >= 2) {
    report.fit = fit_exponent(ns, per_n, c.bootstrap, c.seed);
    const auto& f = *report.fit;
    const std::string band = "[" + fmt(f.band_low) + ", " + fmt(f.band_high) + "]";
    if (noiseless) {
      passed = f.exponent < c.contrast_ceiling;
      verdict = std::string(passed ? "noiseless contrast: risk decays" : "noiseless contrast: risk does not decay fast") +
                " with fitted exponent " + fmt(f.exponent) + " (bootstrap band " + band + ", ceiling " +
                fmt(c.contrast_ceiling) + ")";
    } else {
      passed = f.exponent > c.exponent_floor;
      verdict = std::string(passed ? "consistent with" : "not consistent with") +
                " a noise floor: fitted exponent of median risk " + fmt(f.exponent) + " (bootstrap band " + band +
                ") against floor " + fmt(c.exponent_floor) + " over n in [" + std::to_string(f.n.front()) + ", " +
                std::to_string(f.n.back()) + "]";
    }
    if (!noiseless) report.summary["floor_ratio"] = f.medians.back() / (c.noise.sigma * c.noise.sigma);
  } else {
    verdict = "single sample size: no exponent fitted";
  }
  if (!conditional.empty()) {
    report.summary["conditional"] = conditional;
    report.summary["conditional_passed"] = conditional_ok;
    passed = passed && conditional_ok;
    verdict += conditional_ok ? "; conditional bound mean risk >= V(0) - 3 stderr held in every cell"
                              : "; conditional bound violated in at least one cell";
  }
  report.passed = passed;
  report.verdict = verdict;

  Plot plot{"risk_vs_n", "Excess risk of interpolation", "n", "excess risk", {}, std::nullopt};
  PlotSeries all{"per seed", {}, {}, false}, med{"median", {}, {}, true}, var{"median V(0)", {}, {}, true};
  for (const auto& r : report.records) {
    all.x.push_back(static_cast<double>(r.n));
    all.y.push_back(r.risk);
  }
  for (std::size_t k = 0; k < ns.size(); ++k) {
    med.x.push_back(static_cast<double>(ns[k]));
    med.y.push_back(median(per_n[k]));
    if (variances.count(ns[k])) {
      var.x.push_back(static_cast<double>(ns[k]));
      var.y.push_back(median(variances[ns[k]]));
    }
  }
  plot.series = {all, med};
  if (!var.x.empty()) plot.series.push_back(var);
  if (report.fit) plot.fit = LineFit{report.fit->exponent, report.fit->intercept, report.fit->r2, 0.0, ns.size()};
  report.plots.push_back(plot);
  return report;
}

// ---------------------------------------------------------------- variance scaling

ScalingReport run_variance_scaling(const ExperimentConfig& c, unsigned workers) {
  workers = worker_count(workers ? workers : c.workers);
  if (!(c.noise.sigma > 0.0)) throw ConfigError("config field 'noise.sigma': must be > 0 for variance runs");
  const double sigma2 = c.noise.sigma * c.noise.sigma;
  const auto* periodic = std::get_if<PeriodicFourier>(&c.kernel.family());
  const bool exact = c.integration.method == IntegrationMethod::exact && periodic;
  const QuadratureGrid grid = exact ? QuadratureGrid{} : integration_grid(c);
  std::optional<SpectrumModel> spectrum;
  if (periodic) spectrum = exact_spectrum_torus(*periodic);

  struct Cell {
    std::size_t n = 0, seed = 0;
    std::vector<double> lambdas;
    VarianceCurve curve;
    LineFit slope;
    double beta = kNan, spread = kNan, ratio_min = kNan, ratio_max = kNan;
    double theory_min = kNan, theory_max = kNan;
    bool beta_fitted = false;
    double ms = 0.0;
  };
  std::vector<Cell> cells;
  for (std::size_t n : c.n_grid)
    for (std::size_t s = 0; s < c.seeds; ++s) {
      Cell cell;
      cell.n = n;
      cell.seed = s;
      cell.lambdas = c.lambda_grid.resolve(n);
      if (cell.lambdas.empty()) throw ConfigError("config field 'lambda_grid': empty grid");
      cells.push_back(std::move(cell));
    }

  parallel_for(cells.size(), workers, [&](std::size_t idx) {
    Cell& cell = cells[idx];
    Stopwatch clock;
    Points X;
    GramMatrix g;
    for (std::size_t attempt = 0;; ++attempt) {
      X = sample_iid(c.domain, cell.n, derive_seed(c.seed, {tag(Stream::inputs), cell.n, cell.seed, attempt}));
      try {
        g = gram(c.kernel, X);
        break;
      } catch (const DuplicatePointsError&) {
        if (attempt >= kMaxResamples) throw;
      }
    }
    const auto integ = exact ? VarianceIntegrator::from_mercer(g, *periodic, X)
                             : VarianceIntegrator::from_grid(g, c.kernel, X, grid);
    cell.curve = variance_curve(integ, sigma2, cell.lambdas);
    std::vector<double> v;
    for (const auto& e : cell.curve.entries) v.push_back(e.value);
    cell.slope = fit_loglog(cell.lambdas, v);
    if (auto b = c.resolved_beta()) {
      cell.beta = *b;
    } else {
      const auto emp = empirical_spectrum(g);
      const auto [lo, hi] = fit_window(c, emp);
      cell.beta = fit_decay(emp, lo, hi).beta;
      cell.beta_fitted = true;
    }
    const double nn = static_cast<double>(cell.n);
    std::vector<double> ratios;
    for (std::size_t k = 0; k < v.size(); ++k) ratios.push_back(v[k] * nn * std::pow(cell.lambdas[k], 1.0 / cell.beta) / sigma2);
    cell.ratio_min = *std::min_element(ratios.begin(), ratios.end());
    cell.ratio_max = *std::max_element(ratios.begin(), ratios.end());
    cell.spread = cell.ratio_max / cell.ratio_min;
    if (spectrum) {
      std::vector<double> t;
      for (std::size_t k = 0; k < v.size(); ++k)
        t.push_back(v[k] / theoretical_variance(*spectrum, sigma2, cell.n, cell.lambdas[k]));
      cell.theory_min = *std::min_element(t.begin(), t.end());
      cell.theory_max = *std::max_element(t.begin(), t.end());
    }
    cell.ms = clock.ms();
  });

  ScalingReport report;
  report.experiment = "variance_scaling";
  report.config = config_to_json(c);
  report.warnings = c.warnings;
  Json per_cell = Json::array();
  bool passed = true;
  const double slope_tolerance = 0.05, spread_limit = 5.0;
  std::map<std::size_t, std::vector<double>> slopes;
  double beta_used = kNan;
  for (const auto& cell : cells) {
    for (const auto& e : cell.curve.entries)
      report.records.push_back({cell.n, e.lambda, cell.seed, kNan, e.value, c.timing ? cell.ms / cell.curve.entries.size() : 0.0});
    const double target = -1.0 / cell.beta;
    const bool slope_ok = std::abs(cell.slope.slope - target) <= slope_tolerance;
    const bool spread_ok = cell.spread < spread_limit;
    passed = passed && slope_ok && spread_ok;
    beta_used = cell.beta;
    slopes[cell.n].push_back(cell.slope.slope);
    Json j = {{"n", cell.n},           {"seed", cell.seed},           {"slope", cell.slope.slope},
              {"r2", cell.slope.r2},   {"target_slope", target},      {"slope_ok", slope_ok},
              {"ratio_min", cell.ratio_min}, {"ratio_max", cell.ratio_max}, {"ratio_spread", cell.spread},
              {"spread_ok", spread_ok}, {"beta", cell.beta},          {"beta_fitted", cell.beta_fitted},
              {"integration", cell.curve.integration}};
    if (std::isfinite(cell.theory_min)) j["theory_ratio"] = {cell.theory_min, cell.theory_max};
    per_cell.push_back(j);
    if (cell.seed == 0)
      report.tables.push_back(variance_curve_table(cell.curve, "variance_curve_n" + std::to_string(cell.n)));
  }
  Json per_n = Json::array();
  for (const auto& [n, s] : slopes) per_n.push_back({{"n", n}, {"median_slope", median(s)}});
  report.summary["cells"] = per_cell;
  report.summary["per_n"] = per_n;
  report.summary["beta"] = beta_used;
  report.summary["slope_tolerance"] = slope_tolerance;
  report.summary["spread_limit"] = spread_limit;
  report.passed = passed && !cells.empty();
  report.verdict = std::string(report.passed ? "consistent with" : "not consistent with") +
                   " V(lambda) ~ lambda^{-1/beta} / n: every sweep has slope within " + fmt(slope_tolerance) +
                   " of " + fmt(-1.0 / beta_used) + " and ratio spread below " + fmt(spread_limit);

  Plot plot{"variance_vs_lambda", "Variance term V(lambda)", "lambda", "V(lambda)", {}, std::nullopt};
  for (const auto& cell : cells) {
    if (cell.seed != 0) continue;
    PlotSeries s{"n = " + std::to_string(cell.n), cell.lambdas, {}, true};
    for (const auto& e : cell.curve.entries) s.y.push_back(e.value);
    plot.series.push_back(std::move(s));
    plot.fit = cell.slope;
  }
  report.plots.push_back(plot);
  return report;
}

// ---------------------------------------------------------------- seminorm concentration

SeminormBounds seminorm_bounds(double l2_norm_squared, double sup_bound, std::size_t n, double delta) {
  if (n == 0) throw ConfigError("seminorm_bounds: n must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("seminorm_bounds: delta must lie in (0, 1)");
  const double t = 5.0 * sup_bound * sup_bound / (3.0 * static_cast<double>(n)) * std::log(2.0 / delta);
  return {0.5 * l2_norm_squared - t, 1.5 * l2_norm_squared + t};
}

double empirical_inner_product(const Eigen::VectorXd& f_values, const Eigen::VectorXd& g_values) {
  if (f_values.size() != g_values.size() || f_values.size() == 0)
    throw ConfigError("empirical_inner_product: value vectors must be nonempty and equally long");
  return f_values.dot(g_values) / static_cast<double>(f_values.size());
}

double empirical_inner_product(const RegressionFunction& f, const RegressionFunction& g, const Points& X) {
  Eigen::VectorXd fv(X.rows()), gv(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    fv(i) = f(X.row(i));
    gv(i) = g(X.row(i));
  }
  return empirical_inner_product(fv, gv);
}

ScalingReport run_seminorm_concentration(const ExperimentConfig& c) {
  const auto& cc = c.concentration;
  const double l2 = c.truth.l2_norm_squared();
  const double M = cc.sup_bound.value_or(c.truth.sup_bound());
  const SeminormBounds bounds = seminorm_bounds(l2, M, cc.n, cc.delta);
  const RegressionFunction f = [&](PointRef x) { return c.truth(x); };

  ScalingReport report;
  report.experiment = "seminorm_concentration";
  report.config = config_to_json(c);
  report.warnings = c.warnings;
  Table trials{"trials", {"trial", "seminorm_sq", "lower", "upper", "holds"}, {}};
  std::size_t holds = 0;
  bool identity_exact = true;
  double relation_error = 0.0;
  PlotSeries series{"||f||_n^2", {}, {}, false};
  for (std::size_t t = 0; t < cc.trials; ++t) {
    const Points X = sample_iid(c.domain, cc.n, derive_seed(c.seed, {tag(Stream::inputs), cc.n, t}));
    const Eigen::VectorXd fv = c.truth.evaluate(X);
    const double seminorm_sq = empirical_inner_product(fv, fv);
    const bool ok = seminorm_sq >= bounds.lower && seminorm_sq <= bounds.upper;
    holds += ok;
    trials.rows.push_back({std::to_string(t), format_number(seminorm_sq), format_number(bounds.lower),
                           format_number(bounds.upper), ok ? "1" : "0"});
    series.x.push_back(static_cast<double>(t + 1));
    series.y.push_back(seminorm_sq);

    // <f, g>_n with g = k(., x_0): the sample formula, and T_X f evaluated at x_0.
    const Eigen::RowVectorXd x0 = X.row(0);
    const RegressionFunction g = [&](PointRef x) { return c.kernel(x, x0); };
    const double from_functions = empirical_inner_product(f, g, X);
    Eigen::VectorXd gv(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) gv(i) = c.kernel(X.row(i), x0);
    const double from_values = empirical_inner_product(fv, gv);
    identity_exact = identity_exact && from_functions == from_values;
    double tx = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) tx += fv(i) * c.kernel(x0, X.row(i));
    tx /= static_cast<double>(X.rows());
    relation_error = std::max(relation_error, std::abs(tx - from_values) / std::max(std::abs(tx), 1e-300));
  }
  const double frequency = static_cast<double>(holds) / static_cast<double>(cc.trials);
  report.tables.push_back(std::move(trials));
  report.summary["n"] = cc.n;
  report.summary["trials"] = cc.trials;
  report.summary["delta"] = cc.delta;
  report.summary["l2_norm_squared"] = l2;
  report.summary["sup_bound"] = M;
  report.summary["lower"] = bounds.lower;
  report.summary["upper"] = bounds.upper;
  report.summary["frequency"] = frequency;
  report.summary["identity_bit_exact"] = identity_exact;
  report.summary["relation_max_relative_error"] = relation_error;
  report.passed = frequency >= 1.0 - cc.delta && identity_exact;
  report.verdict = "two-sided semi-norm bound held in " + fmt(100.0 * frequency) + "% of " +
                   std::to_string(cc.trials) + " trials (required " + fmt(100.0 * (1.0 - cc.delta)) + "%)" +
                   (identity_exact ? "; inner-product identity exact" : "; inner-product identity FAILED");
  report.plots.push_back({"seminorm_trials", "Empirical semi-norm per trial", "trial", "||f||_n^2", {series}, std::nullopt});
  return report;
}

// ---------------------------------------------------------------- NTK pipeline

ScalingReport run_ntk_pipeline(const ExperimentConfig& c, unsigned workers) {
  workers = worker_count(workers ? workers : c.workers);
  if (c.domain.kind() != DomainKind::sphere) throw ConfigError("config field 'domain.kind': ntk runs need a sphere domain");
  const KernelSpec ntk = KernelSpec::ntk2();
  const QuadratureGrid grid = integration_grid(c);
  const Eigen::VectorXd truth_on_grid = c.truth.evaluate(grid.nodes);
  const double sigma2 = c.noise.sigma * c.noise.sigma;

  struct Net {
    int width = 0;
    double nn_risk = kNan, gap = kNan, final_loss = kNan, ms = 0.0;
    std::size_t steps = 0, halvings = 0;
    bool converged = false, triangle_ok = false;
    TrainTrace trace;
  };
  struct Cell {
    std::size_t n = 0, seed = 0;
    bool ok = false;
    std::vector<std::string> failures;
    double ntk_risk = kNan, variance = kNan, max_abs_y = kNan, ms = 0.0;
    std::vector<Net> nets;
  };
  std::vector<Cell> cells;
  for (std::size_t n : c.n_grid)
    for (std::size_t s = 0; s < c.seeds; ++s) {
      Cell cell;
      cell.n = n;
      cell.seed = s;
      cells.push_back(std::move(cell));
    }

  parallel_for(cells.size(), workers, [&](std::size_t idx) {
    Cell& cell = cells[idx];
    Stopwatch clock;
    auto draw = draw_interpolation(c, ntk, cell.n, cell.seed, cell.failures);
    if (!draw) return;
    cell.ok = true;
    cell.max_abs_y = max_abs(draw->Y);
    const Eigen::MatrixXd cross = cross_gram(ntk, grid.nodes, draw->X);
    const Eigen::VectorXd ntk_pred = cross * draw->dual;
    cell.ntk_risk = excess_risk(ntk_pred, truth_on_grid, grid);
    if (c.compute_variance) cell.variance = VarianceIntegrator::from_cross(draw->gram, cross.transpose(), grid).value(sigma2, 0.0);
    cell.ms = clock.ms();
    for (int m : c.ntk.widths) {
      Stopwatch net_clock;
      Net net;
      net.width = m;
      const auto init = init_symmetric(
          m, c.domain.dim(), derive_seed(c.seed, {tag(Stream::network), cell.n, cell.seed, static_cast<std::uint64_t>(m)}));
      TrainOptions opt;
      opt.eta = c.ntk.eta;
      opt.steps = c.ntk.steps;
      opt.tolerance = c.ntk.tolerance;
      net.trace = train_gd(init, draw->X, draw->Y, opt);
      const Eigen::VectorXd nn_pred = net.trace.final_state.forward(grid.nodes);
      net.nn_risk = excess_risk(nn_pred, truth_on_grid, grid);
      net.gap = (nn_pred - ntk_pred).cwiseAbs().maxCoeff();
      net.final_loss = net.trace.loss_history.back();
      net.steps = net.trace.steps_taken;
      net.halvings = net.trace.halvings.size();
      net.converged = net.trace.converged;
      // ||f_NN - f*|| <= ||f_NTK - f*|| + sup gap, in L2(mu).
      const double bound = net.gap * net.gap + 2.0 * net.gap * std::sqrt(cell.ntk_risk);
      net.triangle_ok = std::abs(net.nn_risk - cell.ntk_risk) <= bound * (1.0 + 1e-9) + 1e-15;
      net.ms = net_clock.ms();
      if (!c.ntk.write_traces) net.trace.loss_history.clear();
      cell.nets.push_back(std::move(net));
    }
  });

  ScalingReport report;
  report.experiment = "ntk_pipeline";
  report.config = config_to_json(c);
  report.warnings = c.warnings;
  Table table{"ntk_records",
              {"n", "width", "seed", "nn_risk", "ntk_risk", "sup_gap", "max_abs_y", "final_loss", "steps", "converged",
               "halvings", "wallclock_ms"},
              {}};
  Json failures = Json::array();
  std::map<std::size_t, std::vector<double>> ntk_risks;
  std::map<std::pair<std::size_t, int>, std::vector<double>> gaps, nn_risks;
  std::map<std::size_t, std::vector<double>> max_y;
  bool triangle_ok = true;
  for (auto& cell : cells) {
    if (!cell.ok) {
      failures.push_back({{"n", cell.n}, {"seed", cell.seed}, {"reasons", cell.failures}});
      continue;
    }
    report.records.push_back({cell.n, 0.0, cell.seed, cell.ntk_risk, cell.variance, c.timing ? cell.ms : 0.0});
    ntk_risks[cell.n].push_back(cell.ntk_risk);
    max_y[cell.n].push_back(cell.max_abs_y);
    for (auto& net : cell.nets) {
      table.rows.push_back({std::to_string(cell.n), std::to_string(net.width), std::to_string(cell.seed),
                            format_number(net.nn_risk), format_number(cell.ntk_risk), format_number(net.gap),
                            format_number(cell.max_abs_y), format_number(net.final_loss), std::to_string(net.steps),
                            net.converged ? "1" : "0", std::to_string(net.halvings),
                            format_number(c.timing ? net.ms : 0.0)});
      gaps[{cell.n, net.width}].push_back(net.gap);
      nn_risks[{cell.n, net.width}].push_back(net.nn_risk);
      triangle_ok = triangle_ok && net.triangle_ok;
      if (c.ntk.write_traces) {
        const std::string stem = "traces/trace_n" + std::to_string(cell.n) + "_m" + std::to_string(net.width) + "_s" +
                                 std::to_string(cell.seed);
        Table t{stem, {"step", "loss"}, {}};
        t.rows.reserve(net.trace.loss_history.size());
        for (std::size_t k = 0; k < net.trace.loss_history.size(); ++k)
          t.rows.push_back({std::to_string(k), format_number(net.trace.loss_history[k])});
        report.tables.push_back(std::move(t));
        Json echo = {{"n", cell.n}, {"width", net.width}, {"seed", cell.seed}, {"ntk", report.config["ntk"]}};
        report.documents.emplace_back(stem, trace_json(net.trace, net.gap, echo));
      }
    }
  }
  report.tables.insert(report.tables.begin(), std::move(table));

  Json per_n = Json::array();
  bool decreasing = true, small_gap = true;
  for (const auto& [n, r] : ntk_risks) {
    Json widths = Json::array();
    double previous = std::numeric_limits<double>::infinity();
    bool mono = true;
    double last_ratio = kNan;
    const double median_max_y = median(max_y[n]);
    for (int m : c.ntk.widths) {
      const auto& g = gaps[{n, m}];
      if (g.empty()) continue;
      const double mg = median(g);
      mono = mono && mg < previous;
      previous = mg;
      last_ratio = mg / median_max_y;
      widths.push_back({{"width", m}, {"median_sup_gap", mg}, {"median_nn_risk", median(nn_risks[{n, m}])}});
    }
    decreasing = decreasing && mono;
    small_gap = small_gap && last_ratio < 0.1;
    per_n.push_back({{"n", n}, {"median_ntk_risk", median(r)}, {"median_max_abs_y", median_max_y},
                     {"widths", widths}, {"gap_decreasing", mono}, {"gap_ratio_at_largest_width", last_ratio}});
  }
  report.summary["failures"] = failures;
  report.summary["per_n"] = per_n;
  report.summary["gap_decreasing"] = decreasing;
  report.summary["gap_below_tenth_of_max_y"] = small_gap;
  report.summary["triangle_bound_ok"] = triangle_ok;
  report.summary["sigma"] = c.noise.sigma;

  std::vector<std::size_t> ns;
  std::vector<std::vector<double>> per;
  for (auto& [n, r] : ntk_risks) {
    ns.push_back(n);
    per.push_back(r);
  }
  if (ns.size() >= 2) report.fit = fit_exponent(ns, per, c.bootstrap, c.seed);
  report.passed = !ns.empty() && decreasing && small_gap && triangle_ok;
  report.verdict = std::string(report.passed ? "consistent with" : "not consistent with") +
                   " network predictions approaching NTK interpolation as the width grows (median sup gap " +
                   (decreasing ? "decreasing" : "not decreasing") + " in width; " +
                   (small_gap ? "below" : "not below") + " 0.1 max|y| at the largest width)";
  if (report.fit) report.verdict += "; NTK risk exponent in n " + fmt(report.fit->exponent);

  Plot gap_plot{"sup_gap_vs_width", "sup |f_NN - f_NTK|", "width m", "median sup gap", {}, std::nullopt};
  for (const auto& n : ns) {
    PlotSeries s{"n = " + std::to_string(n), {}, {}, true};
    for (int m : c.ntk.widths)
      if (!gaps[{n, m}].empty()) {
        s.x.push_back(m);
        s.y.push_back(median(gaps[{n, m}]));
      }
    gap_plot.series.push_back(std::move(s));
  }
  report.plots.push_back(gap_plot);
  Plot risk_plot{"risk_vs_n", "NTK interpolation risk", "n", "excess risk", {}, std::nullopt};
  PlotSeries med{"median NTK risk", as_vector(ns), {}, true};
  for (const auto& r : per) med.y.push_back(median(r));
  risk_plot.series.push_back(med);
  if (report.fit) risk_plot.fit = LineFit{report.fit->exponent, report.fit->intercept, report.fit->r2, 0.0, ns.size()};
  report.plots.push_back(risk_plot);
  return report;
}

// ---------------------------------------------------------------- spectra

namespace {

struct AnalyticSpectrum {
  std::optional<SpectrumModel> model;
  std::string source;
};

AnalyticSpectrum analytic_spectrum(const ExperimentConfig& c) {
  if (const auto* p = std::get_if<PeriodicFourier>(&c.kernel.family()))
    return {exact_spectrum_torus(*p), "fourier_coefficients"};
  if (c.kernel.is_dot_product() && c.domain.kind() == DomainKind::sphere && c.domain.dim() >= 3)
    return {dot_product_spectrum(c.kernel, c.domain.dim(), c.spectrum.n_max, c.spectrum.quad_res),
            "legendre_projection"};
  return {std::nullopt, ""};
}

std::optional<DecayFit> fit_full(const SpectrumModel& s) {
  std::size_t positive = 0;
  for (double v : s.eigenvalues()) positive += v > 0.0;
  if (positive < 10) return std::nullopt;
  return fit_decay(s, 5, s.size());
}

std::size_t empirical_size(const ExperimentConfig& c, std::size_t fallback) {
  if (c.spectrum.empirical_n) return c.spectrum.empirical_n;
  return std::max<std::size_t>(fallback, 32);
}

}  // namespace

ScalingReport run_spectrum(const ExperimentConfig& c, unsigned workers) {
  workers = worker_count(workers ? workers : c.workers);
  ScalingReport report;
  report.experiment = "spectrum";
  report.config = config_to_json(c);
  report.warnings = c.warnings;
  const auto expected = c.resolved_beta();
  if (expected) report.summary["expected_beta"] = *expected;

  Plot plot{"eigenvalues", "Eigenvalue decay", "index i", "lambda_i", {}, std::nullopt};
  auto analytic = analytic_spectrum(c);
  std::optional<double> beta_analytic, beta_empirical;
  if (analytic.model) {
    auto& s = *analytic.model;
    if (auto f = fit_full(s)) {
      s.set_decay(*f);
      beta_analytic = f->beta;
      report.tables.push_back(decay_fit_table(s, *f, "decay_fit"));
      plot.fit = LineFit{-f->beta, std::log(f->c), f->r2, 0.0, f->points};
    }
    Json sj = spectrum_to_json(s);
    sj["source"] = analytic.source;
    report.summary["analytic"] = sj;
    Table t{"spectrum", {"i", "lambda_i"}, {}};
    PlotSeries ps{"analytic", {}, {}, false};
    for (std::size_t i = 0; i < s.size(); ++i) {
      t.rows.push_back({std::to_string(i + 1), format_number(s.eigenvalues()[i])});
      ps.x.push_back(static_cast<double>(i + 1));
      ps.y.push_back(s.eigenvalues()[i]);
    }
    report.tables.push_back(std::move(t));
    plot.series.push_back(std::move(ps));

    Json eff = Json::array();
    for (double lam : logspace(1e-6, 1e-2, 9)) {
      const auto e1 = effective_dimension(s, lam, 1.0);
      const auto e2 = effective_dimension(s, lam, 2.0);
      eff.push_back({{"lambda", lam}, {"N1", e1.value}, {"N2", e2.value}, {"tail_warning", e1.tail_warning}});
    }
    report.summary["effective_dimension"] = eff;
  }

  const std::size_t n = empirical_size(c, c.n_grid.back());
  const Points X = sample_iid(c.domain, n, derive_seed(c.seed, {tag(Stream::inputs), n, 0, 0}));
  const GramMatrix g = gram(c.kernel, X, workers);
  auto emp = empirical_spectrum(g);
  const auto [lo, hi] = fit_window(c, emp);
  if (hi > lo + 4) {
    const auto f = fit_decay(emp, lo, hi);
    emp.set_decay(f);
    beta_empirical = f.beta;
    report.tables.push_back(decay_fit_table(emp, f, "empirical_decay_fit"));
  }
  report.summary["empirical"] = spectrum_to_json(emp);
  report.summary["empirical"]["n"] = n;
  Table et{"empirical_spectrum", {"i", "lambda_i"}, {}};
  PlotSeries es{"empirical (n = " + std::to_string(n) + ")", {}, {}, false};
  for (std::size_t i = 0; i < emp.size(); ++i) {
    et.rows.push_back({std::to_string(i + 1), format_number(emp.eigenvalues()[i])});
    es.x.push_back(static_cast<double>(i + 1));
    es.y.push_back(emp.eigenvalues()[i]);
  }
  report.tables.push_back(std::move(et));
  plot.series.push_back(std::move(es));
  report.plots.push_back(plot);

  if (beta_analytic) report.summary["beta_hat_analytic"] = *beta_analytic;
  if (beta_empirical) report.summary["beta_hat_empirical"] = *beta_empirical;
  bool passed = beta_analytic || beta_empirical;
  std::string verdict;
  if (expected) {
    const double tol = 0.2;
    if (beta_analytic) passed = passed && std::abs(*beta_analytic - *expected) <= tol;
    if (beta_empirical) passed = passed && std::abs(*beta_empirical - *expected) <= tol;
    verdict = std::string(passed ? "consistent with" : "not consistent with") + " decay exponent beta = " +
              fmt(*expected) + " within " + fmt(tol);
  } else {
    verdict = "no closed-form decay exponent for this kernel/domain; fitted values reported";
  }
  if (beta_analytic) verdict += "; analytic fit " + fmt(*beta_analytic);
  if (beta_empirical) verdict += "; empirical fit " + fmt(*beta_empirical);
  report.passed = passed;
  report.verdict = verdict;
  return report;
}

Json kernel_info(const ExperimentConfig& c, std::ostream& text) {
  Json j;
  j["kernel"] = kernel_to_json(c.kernel);
  j["domain"] = domain_to_json(c.domain);
  j["kappa2"] = c.kernel.kappa2();
  text << "kernel      " << c.kernel.family_name() << " on " << c.domain.describe() << "\n";
  text << "kappa^2     " << fmt(c.kernel.kappa2(), 8) << "\n";
  if (const auto& h = c.kernel.holder()) {
    j["holder_known"] = {{"exponent", h->exponent}, {"constant", h->constant}, {"in_argument", h->in_argument}};
    text << "holder      s = " << fmt(h->exponent) << ", L = " << fmt(h->constant)
         << (h->in_argument ? " (in <x,y>)" : "") << "\n";
  }
  const auto est = estimate_holder(c.kernel, c.domain, 400, derive_seed(c.seed, {tag(Stream::probes)}));
  j["holder_estimate"] = {{"exponent", est.exponent}, {"constant", est.constant}, {"residual", est.residual},
                          {"probes", est.probes}, {"in_argument", est.in_argument}};
  text << "holder est  s_hat = " << fmt(est.exponent) << ", L_hat = " << fmt(est.constant) << " (" << est.probes
       << " probes)\n";

  const auto beta = c.resolved_beta();
  if (beta) {
    j["beta"] = *beta;
    text << "beta        " << fmt(*beta) << "\n";
  }
  auto analytic = analytic_spectrum(c);
  std::optional<DecayFit> fit;
  if (analytic.model) {
    const auto& s = *analytic.model;
    fit = fit_full(s);
    if (!s.blocks().empty()) {
      Json blocks = Json::array();
      text << "\n  degree      eigenvalue  multiplicity\n";
      for (std::size_t k = 0; k < std::min<std::size_t>(20, s.blocks().size()); ++k) {
        const auto& b = s.blocks()[k];
        blocks.push_back({{"degree", b.degree}, {"eigenvalue", b.eigenvalue}, {"multiplicity", b.multiplicity}});
        text << "  " << std::setw(6) << b.degree << "  " << std::setw(14) << fmt(b.eigenvalue, 6) << "  "
             << std::setw(12) << b.multiplicity << "\n";
      }
      j["blocks"] = blocks;
    } else {
      std::vector<double> top(s.eigenvalues().begin(), s.eigenvalues().begin() + std::min<std::size_t>(20, s.size()));
      j["eigenvalues"] = top;
      text << "\n       i      eigenvalue\n";
      for (std::size_t i = 0; i < top.size(); ++i) text << "  " << std::setw(6) << i + 1 << "  " << fmt(top[i], 6) << "\n";
    }
  } else {
    const std::size_t n = c.spectrum.empirical_n ? c.spectrum.empirical_n : 512;
    const Points X = sample_iid(c.domain, n, derive_seed(c.seed, {tag(Stream::inputs), n, 0, 0}));
    const auto emp = empirical_spectrum(gram(c.kernel, X));
    const auto [lo, hi] = fit_window(c, emp);
    if (hi > lo + 4) fit = fit_decay(emp, lo, hi);
    std::vector<double> top(emp.eigenvalues().begin(), emp.eigenvalues().begin() + std::min<std::size_t>(20, emp.size()));
    j["eigenvalues"] = top;
    j["empirical_n"] = n;
    text << "\n  empirical spectrum (n = " << n << ")\n       i      eigenvalue\n";
    for (std::size_t i = 0; i < top.size(); ++i) text << "  " << std::setw(6) << i + 1 << "  " << fmt(top[i], 6) << "\n";
  }
  if (fit) {
    j["beta_hat"] = fit->beta;
    j["beta_hat_fit"] = {{"c", fit->c}, {"r2", fit->r2}, {"i_min", fit->i_min}, {"i_max", fit->i_max}};
    text << "\nbeta_hat    " << fmt(fit->beta) << " (indices " << fit->i_min << ".." << fit->i_max << ", r2 "
         << fmt(fit->r2) << ")\n";
  }
  return j;
}

}  // namespace kilab
