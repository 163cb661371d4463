#include "kilab/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "kilab/errors.hpp"
#include "kilab/orthopoly.hpp"
#include "kilab/random.hpp"

namespace kilab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
  throw ConfigError("config field '" + field + "': " + what);
}

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void require_object(const Json& j, const std::string& field) {
  if (!j.is_object()) field_error(field.empty() ? "<root>" : field, "expected an object");
}

void reject_unknown(const Json& j, const std::string& prefix, std::initializer_list<const char*> allowed) {
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) field_error(join(prefix, it.key()), "unknown field");
}

template <class T>
T read(const Json& j, const std::string& key, const std::string& prefix, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    field_error(join(prefix, key), "wrong type");
  }
}

template <class T>
T require(const Json& j, const std::string& key, const std::string& prefix) {
  if (!j.contains(key)) field_error(join(prefix, key), "missing");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    field_error(join(prefix, key), "wrong type");
  }
}

double positive(double v, const std::string& field) {
  if (!(v > 0.0) || !std::isfinite(v)) field_error(field, "must be a positive number");
  return v;
}

// Canonical representative of {m, -m}: first nonzero entry positive.
std::pair<std::vector<int>, int> canonical(std::vector<int> m) {
  for (int v : m) {
    if (v > 0) return {m, 1};
    if (v < 0) {
      for (int& x : m) x = -x;
      return {m, -1};
    }
  }
  return {m, 0};
}

}  // namespace

// ---------------------------------------------------------------- Truth

Truth Truth::fourier(const Domain& domain, std::vector<FourierTerm> terms) {
  if (domain.kind() == DomainKind::sphere) throw ConfigError("truth: Fourier terms need a torus or cube domain");
  if (terms.empty()) throw ConfigError("truth: no terms");
  Truth t;
  t.domain_ = domain;
  t.freq_scale_ = domain.kind() == DomainKind::cube ? kTwoPi : 1.0;
  // Merge m and -m so that the L2 norm is a plain sum of squares.
  std::map<std::vector<int>, std::pair<double, double>> merged;
  for (const auto& term : terms) {
    if (static_cast<int>(term.m.size()) != domain.dim())
      throw ConfigError("truth: frequency has " + std::to_string(term.m.size()) + " entries, domain dimension is " +
                        std::to_string(domain.dim()));
    auto [rep, sign] = canonical(term.m);
    auto& slot = merged[rep];
    slot.first += term.cos_coef;
    slot.second += sign == 0 ? 0.0 : sign * term.sin_coef;
  }
  for (const auto& [m, ab] : merged) {
    const bool zero = std::all_of(m.begin(), m.end(), [](int v) { return v == 0; });
    t.fourier_.push_back({m, ab.first, zero ? 0.0 : ab.second});
    t.l2_sq_ += zero ? ab.first * ab.first : 0.5 * (ab.first * ab.first + ab.second * ab.second);
    t.sup_ += zero ? std::abs(ab.first) : std::hypot(ab.first, ab.second);
  }
  return t;
}

Truth Truth::zonal(const Domain& domain, std::vector<ZonalTerm> terms) {
  if (domain.kind() != DomainKind::sphere) throw ConfigError("truth: zonal terms need a sphere domain");
  if (terms.empty()) throw ConfigError("truth: no terms");
  const int d = domain.dim();
  Truth t;
  t.domain_ = domain;
  t.zonal_ = true;
  for (auto term : terms) {
    if (static_cast<int>(term.direction.size()) != d)
      throw ConfigError("truth: zonal direction has " + std::to_string(term.direction.size()) +
                        " entries, domain dimension is " + std::to_string(d));
    if (term.degree < 0) throw ConfigError("truth: zonal degree must be >= 0");
    double norm = 0.0;
    for (double v : term.direction) norm += v * v;
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) throw ConfigError("truth: zonal direction must be nonzero");
    for (double& v : term.direction) v /= norm;
    t.zonal_terms_.push_back(term);
    t.sup_ += std::abs(term.coef);
  }
  // <P_n(<u,.>), P_n(<v,.>)> = P_n(<u,v>) / a_n; different degrees are orthogonal.
  for (const auto& a : t.zonal_terms_)
    for (const auto& b : t.zonal_terms_) {
      if (a.degree != b.degree) continue;
      double uv = 0.0;
      for (int k = 0; k < d; ++k) uv += a.direction[k] * b.direction[k];
      uv = std::clamp(uv, -1.0, 1.0);
      t.l2_sq_ += a.coef * b.coef * sphere_legendre(a.degree, d, uv) / harmonic_multiplicity(a.degree, d);
    }
  return t;
}

Truth Truth::default_for(const Domain& domain) {
  const int d = domain.dim();
  if (domain.kind() == DomainKind::sphere) {
    std::vector<double> e1(d, 0.0), e2(d, 0.0);
    e1[0] = 1.0;
    e2[1] = 1.0;
    return zonal(domain, {{e1, 1, 1.0}, {e2, 2, 0.5}});
  }
  std::vector<int> m1(d, 0), m2(d, 0);
  m1[0] = 1;
  m2[0] = 2;
  return fourier(domain, {{m1, 0.0, 1.0}, {m2, 0.5, 0.0}});
}

double Truth::operator()(PointRef x) const {
  double s = 0.0;
  if (zonal_) {
    const int d = domain_.dim();
    for (const auto& term : zonal_terms_) {
      double t = 0.0;
      for (int k = 0; k < d; ++k) t += term.direction[k] * x(k);
      s += term.coef * sphere_legendre(term.degree, d, std::clamp(t, -1.0, 1.0));
    }
    return s;
  }
  for (const auto& term : fourier_) {
    double phase = 0.0;
    for (std::size_t k = 0; k < term.m.size(); ++k) phase += term.m[k] * x(static_cast<Eigen::Index>(k));
    phase *= freq_scale_;
    s += term.cos_coef * std::cos(phase) + term.sin_coef * std::sin(phase);
  }
  return s;
}

Eigen::VectorXd Truth::evaluate(const Points& X) const {
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) = (*this)(X.row(i));
  return out;
}

// ---------------------------------------------------------------- noise, lambda

Eigen::VectorXd draw_noise(const NoiseConfig& noise, std::size_t n, std::uint64_t seed) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  if (noise.sigma == 0.0) return out;
  Rng rng(seed);
  if (noise.model == NoiseModel::gaussian) {
    std::normal_distribution<double> normal(0.0, noise.sigma);
    for (std::size_t i = 0; i < n; ++i) out(static_cast<Eigen::Index>(i)) = normal(rng);
  } else {
    for (std::size_t i = 0; i < n; ++i) out(static_cast<Eigen::Index>(i)) = (rng() >> 63) ? noise.sigma : -noise.sigma;
  }
  return out;
}

std::vector<double> LambdaGrid::resolve(std::size_t n) const {
  if (explicit_values()) {
    std::vector<double> v = values;
    std::sort(v.begin(), v.end());
    return v;
  }
  if (!min_exponent) throw ConfigError("config field 'lambda_grid.min_exponent': not set and no decay exponent known");
  const double nn = static_cast<double>(n);
  const double lo = std::pow(nn, *min_exponent), hi = std::pow(nn, max_exponent);
  if (count == 1) return {lo};
  std::vector<double> out(count);
  for (std::size_t k = 0; k < count; ++k)
    out[k] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * static_cast<double>(k) / (count - 1));
  return out;
}

std::optional<double> ExperimentConfig::resolved_beta() const {
  if (beta) return beta;
  return kernel.decay_exponent(domain);
}

// ---------------------------------------------------------------- JSON

Json kernel_to_json(const KernelSpec& spec) {
  Json j;
  j["family"] = spec.family_name();
  std::visit(
      [&](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, Laplace> || std::is_same_v<T, Gaussian>) {
          j["bandwidth"] = f.bandwidth;
        } else if constexpr (std::is_same_v<T, Matern>) {
          j["nu"] = f.nu;
          j["lengthscale"] = f.lengthscale;
        } else if constexpr (std::is_same_v<T, Constant>) {
          j["value"] = f.value;
        } else if constexpr (std::is_same_v<T, PeriodicFourier>) {
          j["dim"] = f.dim();
          if (f.decay()) {
            j["decay"] = *f.decay();
            j["max_freq"] = *f.max_freq();
            j["scale"] = f.scale();
          } else {
            Json terms = Json::array();
            for (std::size_t k = 0; k < f.frequencies().size(); ++k)
              terms.push_back({{"m", f.frequencies()[k]}, {"c", f.coefficients()[k]}});
            j["terms"] = terms;
          }
        } else if constexpr (std::is_same_v<T, DotProduct>) {
          switch (f.profile) {
            case DotProduct::Profile::linear: j["profile"] = "linear"; break;
            case DotProduct::Profile::polynomial:
              j["profile"] = "polynomial";
              j["degree"] = f.degree;
              j["offset"] = f.offset;
              break;
            case DotProduct::Profile::exponential:
              j["profile"] = "exponential";
              j["scale"] = f.scale;
              break;
            case DotProduct::Profile::custom: throw ConfigError("kernel: custom dot-product profiles are not serializable");
          }
        }
      },
      spec.family());
  return j;
}

KernelSpec kernel_from_json(const Json& j) {
  const std::string p = "kernel";
  require_object(j, p);
  const auto family = require<std::string>(j, "family", p);
  if (family == "laplace" || family == "gaussian") {
    reject_unknown(j, p, {"family", "bandwidth"});
    const double bw = positive(read<double>(j, "bandwidth", p, 1.0), "kernel.bandwidth");
    return family == "laplace" ? KernelSpec::laplace(bw) : KernelSpec::gaussian(bw);
  }
  if (family == "matern") {
    reject_unknown(j, p, {"family", "nu", "lengthscale"});
    return KernelSpec::matern(positive(read<double>(j, "nu", p, 1.5), "kernel.nu"),
                              positive(read<double>(j, "lengthscale", p, 1.0), "kernel.lengthscale"));
  }
  if (family == "constant") {
    reject_unknown(j, p, {"family", "value"});
    const double v = read<double>(j, "value", p, 1.0);
    if (!(v >= 0.0)) field_error("kernel.value", "must be >= 0");
    return KernelSpec::constant(v);
  }
  if (family == "periodic") {
    reject_unknown(j, p, {"family", "dim", "decay", "max_freq", "scale", "terms"});
    const int dim = read<int>(j, "dim", p, 1);
    if (dim < 1) field_error("kernel.dim", "must be >= 1");
    if (j.contains("terms")) {
      if (j.contains("decay")) field_error("kernel.terms", "give either terms or decay, not both");
      std::vector<std::pair<std::vector<int>, double>> terms;
      const Json& arr = j.at("terms");
      if (!arr.is_array() || arr.empty()) field_error("kernel.terms", "expected a nonempty array");
      for (std::size_t k = 0; k < arr.size(); ++k) {
        const std::string tp = "kernel.terms[" + std::to_string(k) + "]";
        require_object(arr[k], tp);
        terms.emplace_back(require<std::vector<int>>(arr[k], "m", tp), require<double>(arr[k], "c", tp));
      }
      try {
        return KernelSpec::periodic(PeriodicFourier::from_terms(dim, terms));
      } catch (const ConfigError& e) {
        field_error("kernel.terms", e.what());
      }
    }
    const double decay = read<double>(j, "decay", p, 2.0);
    if (!(decay > 1.0)) field_error("kernel.decay", "must exceed 1");
    const int max_freq = read<int>(j, "max_freq", p, 256);
    if (max_freq < 0) field_error("kernel.max_freq", "must be >= 0");
    const double scale = positive(read<double>(j, "scale", p, 1.0), "kernel.scale");
    return KernelSpec::periodic(PeriodicFourier::power_law(dim, decay, max_freq, scale));
  }
  if (family == "dot_product") {
    reject_unknown(j, p, {"family", "profile", "degree", "offset", "scale"});
    const auto profile = read<std::string>(j, "profile", p, "linear");
    if (profile == "linear") return KernelSpec::linear_dot();
    if (profile == "polynomial") {
      const double degree = read<double>(j, "degree", p, 2.0), offset = read<double>(j, "offset", p, 1.0);
      if (!(degree >= 0.0)) field_error("kernel.degree", "must be >= 0");
      if (!(offset >= 0.0)) field_error("kernel.offset", "must be >= 0");
      return KernelSpec::polynomial_dot(degree, offset);
    }
    if (profile == "exponential")
      return KernelSpec::exponential_dot(positive(read<double>(j, "scale", p, 1.0), "kernel.scale"));
    field_error("kernel.profile", "unknown profile '" + profile + "' (linear, polynomial, exponential)");
  }
  if (family == "ntk2" || family == "ntk") {
    reject_unknown(j, p, {"family"});
    return KernelSpec::ntk2();
  }
  field_error("kernel.family",
              "unknown family '" + family + "' (laplace, gaussian, matern, constant, periodic, dot_product, ntk2)");
}

Json domain_to_json(const Domain& domain) { return {{"kind", domain.kind_name()}, {"dim", domain.dim()}}; }

Domain domain_from_json(const Json& j) {
  require_object(j, "domain");
  reject_unknown(j, "domain", {"kind", "dim"});
  const auto kind = require<std::string>(j, "kind", "domain");
  const int dim = read<int>(j, "dim", "domain", kind == "sphere" ? 3 : 1);
  try {
    return Domain::from_name(kind, dim);
  } catch (const ConfigError& e) {
    field_error("domain", e.what());
  }
}

Json truth_to_json(const Truth& truth) {
  Json terms = Json::array();
  if (truth.is_zonal()) {
    for (const auto& t : truth.zonal_terms())
      terms.push_back({{"direction", t.direction}, {"degree", t.degree}, {"coef", t.coef}});
    return {{"type", "zonal"}, {"terms", terms}, {"l2_norm", std::sqrt(truth.l2_norm_squared())},
            {"sup_bound", truth.sup_bound()}};
  }
  for (const auto& t : truth.fourier_terms()) terms.push_back({{"m", t.m}, {"cos", t.cos_coef}, {"sin", t.sin_coef}});
  return {{"type", "fourier"}, {"terms", terms}, {"l2_norm", std::sqrt(truth.l2_norm_squared())},
          {"sup_bound", truth.sup_bound()}};
}

Truth truth_from_json(const Json& j, const Domain& domain) {
  require_object(j, "truth");
  reject_unknown(j, "truth", {"type", "terms", "l2_norm", "sup_bound"});
  const auto type = read<std::string>(j, "type", "truth", domain.kind() == DomainKind::sphere ? "zonal" : "fourier");
  if (!j.contains("terms")) return Truth::default_for(domain);
  const Json& arr = j.at("terms");
  if (!arr.is_array() || arr.empty()) field_error("truth.terms", "expected a nonempty array");
  try {
    if (type == "fourier") {
      std::vector<FourierTerm> terms;
      for (std::size_t k = 0; k < arr.size(); ++k) {
        const std::string tp = "truth.terms[" + std::to_string(k) + "]";
        require_object(arr[k], tp);
        reject_unknown(arr[k], tp, {"m", "cos", "sin"});
        terms.push_back({require<std::vector<int>>(arr[k], "m", tp), read<double>(arr[k], "cos", tp, 0.0),
                         read<double>(arr[k], "sin", tp, 0.0)});
      }
      return Truth::fourier(domain, terms);
    }
    if (type == "zonal") {
      std::vector<ZonalTerm> terms;
      for (std::size_t k = 0; k < arr.size(); ++k) {
        const std::string tp = "truth.terms[" + std::to_string(k) + "]";
        require_object(arr[k], tp);
        reject_unknown(arr[k], tp, {"direction", "degree", "coef"});
        terms.push_back({require<std::vector<double>>(arr[k], "direction", tp), require<int>(arr[k], "degree", tp),
                         require<double>(arr[k], "coef", tp)});
      }
      return Truth::zonal(domain, terms);
    }
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind("config field", 0) == 0) throw;
    field_error("truth", msg);
  }
  field_error("truth.type", "unknown type '" + type + "' (fourier, zonal)");
}

namespace {

Json lambda_to_json(const LambdaGrid& g) {
  if (g.explicit_values()) return {{"values", g.values}};
  Json j;
  if (g.min_exponent) j["min_exponent"] = *g.min_exponent;
  j["max_exponent"] = g.max_exponent;
  j["count"] = g.count;
  return j;
}

std::string integration_name(IntegrationMethod m) {
  switch (m) {
    case IntegrationMethod::quadrature: return "quadrature";
    case IntegrationMethod::monte_carlo: return "monte_carlo";
    case IntegrationMethod::exact: return "exact";
  }
  return "quadrature";
}

int default_resolution(const Domain& domain) {
  switch (domain.kind()) {
    case DomainKind::torus:
    case DomainKind::cube: {
      // About 4096 nodes in total.
      const int per_axis = static_cast<int>(std::floor(std::pow(4096.0, 1.0 / domain.dim()) + 1e-9));
      return std::max(per_axis, 4);
    }
    case DomainKind::sphere: return domain.dim() <= 3 ? 64 : 16;
  }
  return 64;
}

}  // namespace

Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["kernel"] = kernel_to_json(c.kernel);
  j["domain"] = domain_to_json(c.domain);
  j["truth"] = truth_to_json(c.truth);
  j["noise"] = {{"model", c.noise.model == NoiseModel::gaussian ? "gaussian" : "rademacher"}, {"sigma", c.noise.sigma}};
  j["n_grid"] = c.n_grid;
  j["lambda_grid"] = lambda_to_json(c.lambda_grid);
  j["seeds"] = c.seeds;
  j["seed"] = c.seed;
  Json integ = {{"method", integration_name(c.integration.method)}};
  if (c.integration.method == IntegrationMethod::monte_carlo) integ["nodes"] = c.integration.nodes;
  integ["resolution"] = c.integration.resolution;
  j["integration"] = integ;
  j["output_dir"] = c.output_dir;
  j["contrast"] = c.contrast;
  j["exponent_floor"] = c.exponent_floor;
  j["contrast_ceiling"] = c.contrast_ceiling;
  if (c.beta) j["beta"] = *c.beta;
  j["compute_variance"] = c.compute_variance;
  j["noise_redraws"] = c.noise_redraws;
  j["bootstrap"] = c.bootstrap;
  j["ntk"] = {{"widths", c.ntk.widths},
              {"eta", c.ntk.eta},
              {"steps", c.ntk.steps},
              {"tolerance", c.ntk.tolerance},
              {"write_traces", c.ntk.write_traces}};
  Json conc = {{"n", c.concentration.n}, {"trials", c.concentration.trials}, {"delta", c.concentration.delta}};
  if (c.concentration.sup_bound) conc["sup_bound"] = *c.concentration.sup_bound;
  j["concentration"] = conc;
  j["spectrum"] = {{"n_max", c.spectrum.n_max}, {"quad_res", c.spectrum.quad_res}, {"empirical_n", c.spectrum.empirical_n}};
  if (c.spectrum.window) j["spectrum"]["window"] = {c.spectrum.window->first, c.spectrum.window->second};
  j["workers"] = c.workers;
  j["timing"] = c.timing;
  return j;
}

ExperimentConfig parse_config(const Json& j, const std::string& verb) {
  require_object(j, "");
  reject_unknown(j, "",
                 {"kernel", "domain", "truth", "noise", "n_grid", "lambda_grid", "seeds", "seed", "integration",
                  "output_dir", "contrast", "exponent_floor", "contrast_ceiling", "beta", "compute_variance",
                  "noise_redraws", "bootstrap", "ntk", "concentration", "spectrum", "workers", "timing", "name",
                  "description"});
  ExperimentConfig c;
  if (!j.contains("kernel")) field_error("kernel", "missing");
  if (!j.contains("domain")) field_error("domain", "missing");
  c.kernel = kernel_from_json(j.at("kernel"));
  c.domain = domain_from_json(j.at("domain"));

  // Kernel / domain compatibility.
  if (c.kernel.is_dot_product() && c.domain.kind() != DomainKind::sphere)
    field_error("domain.kind", "kernel '" + c.kernel.family_name() + "' needs a sphere domain");
  if (const auto* p = std::get_if<PeriodicFourier>(&c.kernel.family())) {
    if (c.domain.kind() != DomainKind::torus) field_error("domain.kind", "periodic kernels need a torus domain");
    if (p->dim() != c.domain.dim()) field_error("kernel.dim", "must match domain.dim");
  }

  c.truth = j.contains("truth") ? truth_from_json(j.at("truth"), c.domain) : Truth::default_for(c.domain);

  if (j.contains("noise")) {
    const Json& nj = j.at("noise");
    require_object(nj, "noise");
    reject_unknown(nj, "noise", {"model", "sigma"});
    const auto model = read<std::string>(nj, "model", "noise", "gaussian");
    if (model == "gaussian") c.noise.model = NoiseModel::gaussian;
    else if (model == "rademacher") c.noise.model = NoiseModel::rademacher;
    else field_error("noise.model", "unknown model '" + model + "' (gaussian, rademacher)");
    c.noise.sigma = read<double>(nj, "sigma", "noise", 0.5);
    if (!(c.noise.sigma >= 0.0) || !std::isfinite(c.noise.sigma)) field_error("noise.sigma", "must be >= 0");
  }
  c.contrast = read<bool>(j, "contrast", "", false);
  const bool noise_required = verb == "scaling" || verb == "variance" || verb == "ntk";
  if (noise_required && c.noise.sigma <= 0.0 && !c.contrast)
    field_error("noise.sigma", "must be > 0 for '" + verb + "' runs (set \"contrast\": true for a noiseless contrast run)");
  if (verb == "variance" && c.noise.sigma <= 0.0) field_error("noise.sigma", "must be > 0 for variance runs");

  if (j.contains("n_grid")) {
    const Json& g = j.at("n_grid");
    if (!g.is_array() || g.empty()) field_error("n_grid", "expected a nonempty array of sample sizes");
    c.n_grid.clear();
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!g[k].is_number_integer() || g[k].get<long long>() < 1)
        field_error("n_grid[" + std::to_string(k) + "]", "must be a positive integer");
      c.n_grid.push_back(g[k].get<std::size_t>());
    }
    if (!std::is_sorted(c.n_grid.begin(), c.n_grid.end())) {
      std::sort(c.n_grid.begin(), c.n_grid.end());
      c.warnings.push_back("n_grid was not sorted; normalized to ascending order");
    }
    const auto last = std::unique(c.n_grid.begin(), c.n_grid.end());
    if (last != c.n_grid.end()) {
      c.n_grid.erase(last, c.n_grid.end());
      c.warnings.push_back("n_grid contained duplicates; removed");
    }
  }

  c.beta = j.contains("beta") ? std::optional<double>(positive(j.at("beta").get<double>(), "beta")) : std::nullopt;
  if (j.contains("lambda_grid")) {
    const Json& lg = j.at("lambda_grid");
    if (lg.is_array()) {
      for (std::size_t k = 0; k < lg.size(); ++k) {
        if (!lg[k].is_number()) field_error("lambda_grid[" + std::to_string(k) + "]", "must be a number");
        c.lambda_grid.values.push_back(lg[k].get<double>());
      }
      if (c.lambda_grid.values.empty()) field_error("lambda_grid", "empty grid");
    } else {
      require_object(lg, "lambda_grid");
      reject_unknown(lg, "lambda_grid", {"values", "min_exponent", "max_exponent", "count"});
      c.lambda_grid.values = read<std::vector<double>>(lg, "values", "lambda_grid", {});
      if (lg.contains("values") && c.lambda_grid.values.empty()) field_error("lambda_grid.values", "empty grid");
      if (lg.contains("min_exponent")) c.lambda_grid.min_exponent = lg.at("min_exponent").get<double>();
      c.lambda_grid.max_exponent = read<double>(lg, "max_exponent", "lambda_grid", -0.25);
      c.lambda_grid.count = read<std::size_t>(lg, "count", "lambda_grid", 30);
      if (c.lambda_grid.count < 1) field_error("lambda_grid.count", "must be >= 1");
    }
    for (std::size_t k = 0; k < c.lambda_grid.values.size(); ++k)
      if (!(c.lambda_grid.values[k] > 0.0))
        field_error("lambda_grid[" + std::to_string(k) + "]", "must be positive (got " +
                                                                   std::to_string(c.lambda_grid.values[k]) + ")");
  }
  if (!c.lambda_grid.explicit_values()) {
    if (!c.lambda_grid.min_exponent) {
      if (const auto beta = c.resolved_beta()) c.lambda_grid.min_exponent = -(*beta - 0.5);
      else c.lambda_grid.min_exponent = -2.0;
    }
    if (!(*c.lambda_grid.min_exponent < c.lambda_grid.max_exponent))
      field_error("lambda_grid.min_exponent", "must be below max_exponent");
  }

  const auto seeds = read<long long>(j, "seeds", "", 20);
  if (seeds < 1) field_error("seeds", "must be >= 1");
  c.seeds = static_cast<std::size_t>(seeds);
  c.seed = read<std::uint64_t>(j, "seed", "", 0);

  if (j.contains("integration")) {
    const Json& ij = j.at("integration");
    require_object(ij, "integration");
    reject_unknown(ij, "integration", {"method", "resolution", "nodes"});
    const auto method = read<std::string>(ij, "method", "integration", "quadrature");
    if (method == "quadrature") c.integration.method = IntegrationMethod::quadrature;
    else if (method == "monte_carlo") c.integration.method = IntegrationMethod::monte_carlo;
    else if (method == "exact") c.integration.method = IntegrationMethod::exact;
    else field_error("integration.method", "unknown method '" + method + "' (quadrature, monte_carlo, exact)");
    c.integration.resolution = read<int>(ij, "resolution", "integration", 0);
    if (c.integration.resolution < 0) field_error("integration.resolution", "must be >= 0");
    c.integration.nodes = read<std::size_t>(ij, "nodes", "integration", 0);
  } else if (std::holds_alternative<PeriodicFourier>(c.kernel.family())) {
    c.integration.method = IntegrationMethod::exact;
  }
  if (c.integration.method == IntegrationMethod::exact && !std::holds_alternative<PeriodicFourier>(c.kernel.family()))
    field_error("integration.method", "'exact' is only available for periodic kernels");
  if (c.integration.method == IntegrationMethod::monte_carlo && c.integration.nodes == 0) c.integration.nodes = 20000;
  if (c.integration.resolution == 0) c.integration.resolution = default_resolution(c.domain);

  c.output_dir = read<std::string>(j, "output_dir", "", "out");
  if (c.output_dir.empty()) field_error("output_dir", "must not be empty");
  c.exponent_floor = read<double>(j, "exponent_floor", "", -0.2);
  c.contrast_ceiling = read<double>(j, "contrast_ceiling", "", -0.5);
  c.compute_variance = read<bool>(j, "compute_variance", "", true);
  c.noise_redraws = read<std::size_t>(j, "noise_redraws", "", 0);
  c.bootstrap = read<std::size_t>(j, "bootstrap", "", 200);

  if (j.contains("ntk")) {
    const Json& nj = j.at("ntk");
    require_object(nj, "ntk");
    reject_unknown(nj, "ntk", {"widths", "eta", "steps", "tolerance", "write_traces"});
    c.ntk.widths = read<std::vector<int>>(nj, "widths", "ntk", c.ntk.widths);
    if (c.ntk.widths.empty()) field_error("ntk.widths", "must not be empty");
    c.ntk.eta = positive(read<double>(nj, "eta", "ntk", c.ntk.eta), "ntk.eta");
    c.ntk.steps = read<std::size_t>(nj, "steps", "ntk", c.ntk.steps);
    c.ntk.tolerance = positive(read<double>(nj, "tolerance", "ntk", c.ntk.tolerance), "ntk.tolerance");
    c.ntk.write_traces = read<bool>(nj, "write_traces", "ntk", c.ntk.write_traces);
  }
  for (std::size_t k = 0; k < c.ntk.widths.size(); ++k) {
    const int m = c.ntk.widths[k];
    if (m < 2 || m % 2 != 0)
      field_error("ntk.widths[" + std::to_string(k) + "]", "width must be even and >= 2 (got " + std::to_string(m) + ")");
  }
  if (verb == "ntk" && c.domain.kind() != DomainKind::sphere) field_error("domain.kind", "ntk runs need a sphere domain");

  if (j.contains("concentration")) {
    const Json& cj = j.at("concentration");
    require_object(cj, "concentration");
    reject_unknown(cj, "concentration", {"n", "trials", "delta", "sup_bound"});
    c.concentration.n = read<std::size_t>(cj, "n", "concentration", c.concentration.n);
    c.concentration.trials = read<std::size_t>(cj, "trials", "concentration", c.concentration.trials);
    c.concentration.delta = read<double>(cj, "delta", "concentration", c.concentration.delta);
    if (c.concentration.n < 1) field_error("concentration.n", "must be >= 1");
    if (c.concentration.trials < 1) field_error("concentration.trials", "must be >= 1");
    if (!(c.concentration.delta > 0.0 && c.concentration.delta < 1.0))
      field_error("concentration.delta", "must lie in (0, 1)");
    if (cj.contains("sup_bound")) {
      const double m = positive(cj.at("sup_bound").get<double>(), "concentration.sup_bound");
      if (m < c.truth.sup_bound() * (1.0 - 1e-12))
        field_error("concentration.sup_bound", "is below the truth's sup bound " + std::to_string(c.truth.sup_bound()));
      c.concentration.sup_bound = m;
    }
  }

  if (j.contains("spectrum")) {
    const Json& sj = j.at("spectrum");
    require_object(sj, "spectrum");
    reject_unknown(sj, "spectrum", {"n_max", "quad_res", "empirical_n", "window"});
    c.spectrum.n_max = read<int>(sj, "n_max", "spectrum", c.spectrum.n_max);
    c.spectrum.quad_res = read<int>(sj, "quad_res", "spectrum", std::max(c.spectrum.quad_res, 2 * c.spectrum.n_max));
    c.spectrum.empirical_n = read<std::size_t>(sj, "empirical_n", "spectrum", 0);
    if (c.spectrum.n_max < 8) field_error("spectrum.n_max", "must be >= 8");
    if (sj.contains("window")) {
      const Json& w = sj.at("window");
      if (!w.is_array() || w.size() != 2 || !w[0].is_number_unsigned() || !w[1].is_number_unsigned())
        field_error("spectrum.window", "must be [lo, hi] with positive integers");
      const auto lo = w[0].get<std::size_t>(), hi = w[1].get<std::size_t>();
      if (lo < 1 || hi < lo + 4) field_error("spectrum.window", "needs 1 <= lo and at least 5 indices");
      c.spectrum.window = std::make_pair(lo, hi);
    }
    if (c.spectrum.quad_res <= c.spectrum.n_max) field_error("spectrum.quad_res", "must exceed spectrum.n_max");
  }

  const auto workers = read<long long>(j, "workers", "", 0);
  if (workers < 0) field_error("workers", "must be >= 0");
  c.workers = static_cast<unsigned>(workers);
  c.timing = read<bool>(j, "timing", "", false);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::string& verb) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(j, verb);
}

void write_resolved_config(const ExperimentConfig& config) {
  std::error_code ec;
  std::filesystem::create_directories(config.output_dir, ec);
  const auto target = std::filesystem::path(config.output_dir) / "resolved_config.json";
  std::ofstream out(target);
  if (!out) throw ConfigError("config field 'output_dir': cannot write '" + target.string() + "'");
  out << config_to_json(config).dump(2) << '\n';
}

ExperimentConfig validate_config(const std::filesystem::path& path, const std::string& verb) {
  ExperimentConfig c = load_config(path, verb);
  write_resolved_config(c);
  return c;
}

Json spectrum_to_json(const SpectrumModel& spectrum) {
  Json j;
  switch (spectrum.kind()) {
    case SpectrumModel::Kind::explicit_list: j["kind"] = "explicit_list"; break;
    case SpectrumModel::Kind::closed_form: j["kind"] = "closed_form"; break;
    case SpectrumModel::Kind::block: j["kind"] = "block"; break;
    case SpectrumModel::Kind::empirical: j["kind"] = "empirical"; break;
  }
  j["size"] = spectrum.size();
  if (const auto p = spectrum.power_law_params()) j["power_law"] = {{"c", p->first}, {"beta", p->second}};
  if (!spectrum.blocks().empty()) {
    Json blocks = Json::array();
    for (const auto& b : spectrum.blocks())
      blocks.push_back({{"degree", b.degree}, {"eigenvalue", b.eigenvalue}, {"multiplicity", b.multiplicity}});
    j["blocks"] = blocks;
    j["sphere_dim"] = spectrum.sphere_dim();
  }
  const std::size_t head = std::min<std::size_t>(spectrum.size(), 20);
  j["leading"] = std::vector<double>(spectrum.eigenvalues().begin(), spectrum.eigenvalues().begin() + head);
  if (spectrum.kind() == SpectrumModel::Kind::empirical) {
    j["clipped"] = spectrum.clipped();
    j["validity_window"] = {spectrum.validity_window().first, spectrum.validity_window().second};
  }
  if (const auto& d = spectrum.decay())
    j["decay_fit"] = {{"beta", d->beta}, {"c", d->c}, {"r2", d->r2}, {"i_min", d->i_min}, {"i_max", d->i_max},
                      {"points", d->points}};
  return j;
}

}  // namespace kilab
