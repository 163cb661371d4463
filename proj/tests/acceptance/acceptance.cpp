// Acceptance checks: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <random>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "kilab/random.hpp"
#include "kilab/cli.hpp"
#include "kilab/errors.hpp"
#include "kilab/lab.hpp"
#include "kilab/ntk.hpp"
#include "kilab/spectral.hpp"
#include "kilab/stats.hpp"
#include "kilab/variance.hpp"

using namespace kilab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string num(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

fs::path config_path(const std::string& name) { return fs::path(KILAB_CONFIG_DIR) / name; }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("kilab_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Eigen::VectorXd gaussian_vector(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> g;
  Eigen::VectorXd v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

struct Instance {
  KernelSpec spec;
  Domain domain;
};

std::vector<Instance> instance_pool() {
  return {
      {KernelSpec::laplace(1.0), Domain::torus(1)},
      {KernelSpec::laplace(0.5), Domain::torus(2)},
      {KernelSpec::matern(1.5, 0.5), Domain::cube(2)},
      {KernelSpec::matern(0.5, 1.0), Domain::cube(3)},
      {KernelSpec::ntk2(), Domain::sphere(3)},
      {KernelSpec::laplace(1.0), Domain::sphere(4)},
      {KernelSpec::periodic(PeriodicFourier::power_law(1, 2.0, 512)), Domain::torus(1)},
  };
}

// 1 ------------------------------------------------------------------------
Outcome interpolation_identity() {
  const auto pool = instance_pool();
  Rng rng(derive_seed(1, {}));
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1), size(2, 256);
  double worst = 0.0;
  std::size_t ok = 0;
  for (int k = 0; k < 50; ++k) {
    const auto& inst = pool[pick(rng)];
    const std::size_t n = size(rng);
    const Points X = sample_iid(inst.domain, n, rng());
    const Eigen::VectorXd Y = 3.0 * gaussian_vector(static_cast<Eigen::Index>(n), rng);
    try {
      const auto f = fit(inst.spec, X, Y, 0.0);
      const double err = (predict(f, X) - Y).cwiseAbs().maxCoeff() / (1.0 + Y.cwiseAbs().maxCoeff());
      worst = std::max(worst, err);
      ok += err < 1e-6;
    } catch (const NumericalError& e) {
      worst = INFINITY;
    }
  }
  return {ok == 50, std::to_string(ok) + "/50 instances, worst max|f(x_i) - y_i| / (1 + max|y|) = " + num(worst)};
}

// 2 ------------------------------------------------------------------------
Outcome variance_monotonicity() {
  const auto pool = instance_pool();
  Rng rng(derive_seed(2, {}));
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1), size(10, 150);
  std::uniform_real_distribution<double> lo(-10.0, -4.0), hi(-2.0, 2.0);
  double worst = 0.0;
  std::size_t violations = 0;
  for (int k = 0; k < 20; ++k) {
    const auto& inst = pool[pick(rng)];
    const std::size_t n = size(rng);
    const Points X = sample_iid(inst.domain, n, rng());
    const auto grid = inst.domain.kind() == DomainKind::sphere ? quadrature(inst.domain, 12)
                      : inst.domain.dim() == 1                  ? quadrature(inst.domain, 512)
                                                                : monte_carlo_grid(inst.domain, 3000, rng());
    const auto g = gram(inst.spec, X);
    const auto integ = VarianceIntegrator::from_grid(g, inst.spec, X, grid);
    const auto lambdas = logspace(std::pow(10.0, lo(rng)), std::pow(10.0, hi(rng)), 30);
    double prev = INFINITY;
    for (double lam : lambdas) {
      const double v = integ.value(1.0, lam);
      if (std::isfinite(prev)) {
        const double rel = (v - prev) / prev;
        worst = std::max(worst, rel);
        violations += rel > 1e-12;
      }
      prev = v;
    }
  }
  return {violations == 0, "20 Gram matrices x 30 lambdas, largest relative increase " + num(worst) +
                               (violations ? ", " + std::to_string(violations) + " violations" : "")};
}

// 3 ------------------------------------------------------------------------
Outcome variance_rate() {
  auto c = load_config(config_path("periodic_variance.json"), "variance");
  c.n_grid = {1024};
  const auto r = run_variance_scaling(c);
  const auto& cell = r.summary["cells"][0];
  const double slope = cell["slope"].get<double>(), spread = cell["ratio_spread"].get<double>();
  return {std::abs(slope + 0.25) <= 0.05 && spread < 5.0,
          "n = 1024: slope " + num(slope) + " (target -0.25 +- 0.05), ratio spread " + num(spread) + " (< 5)"};
}

// 4 ------------------------------------------------------------------------
// Oracle: partial sum to 10^7 plus the tail integral of 1 / (1 + lambda x^beta).
double n1_oracle(double beta, double lambda) {
  const std::size_t head = 10'000'000;
  double s = 0.0;
  for (std::size_t i = head; i >= 1; --i) {
    const double l = std::pow(static_cast<double>(i), -beta);
    s += l / (l + lambda);
  }
  const double u0 = std::log(head + 0.5);
  const int steps = 200000;
  const double du = 80.0 / steps;
  double tail = 0.0;
  for (int k = 0; k <= steps; ++k) {
    const double x = std::exp(u0 + k * du);
    const double w = (k == 0 || k == steps) ? 0.5 : 1.0;
    tail += w * x / (1.0 + lambda * std::pow(x, beta)) * du;
  }
  return s + tail;
}

Outcome effective_dimension_law() {
  bool ok = true;
  std::string detail;
  for (double beta : {1.5, 2.0, 4.0}) {
    const auto spectrum = SpectrumModel::power_law(1.0, beta, 1'000'000);
    const auto lambdas = logspace(1e-6, 1e-2, 9);
    std::vector<double> model, oracle;
    double worst_rel = 0.0;
    for (double l : lambdas) {
      model.push_back(effective_dimension(spectrum, l, 1.0).value);
      oracle.push_back(n1_oracle(beta, l));
      worst_rel = std::max(worst_rel, std::abs(model.back() / oracle.back() - 1.0));
    }
    const double slope = fit_loglog(lambdas, model).slope, oracle_slope = fit_loglog(lambdas, oracle).slope;
    const bool pass = std::abs(slope + 1.0 / beta) <= 0.02 && std::abs(oracle_slope + 1.0 / beta) <= 0.02 &&
                      worst_rel < 1e-3;
    ok = ok && pass;
    detail += "beta " + num(beta) + ": slope " + num(slope) + " (oracle " + num(oracle_slope) + ", max rel dev " +
              num(worst_rel, 2) + "); ";
  }
  return {ok, detail.substr(0, detail.size() - 2)};
}

// 5 ------------------------------------------------------------------------
Outcome ntk_spectrum() {
  const auto analytic = dot_product_spectrum(KernelSpec::ntk2(), 3, 64, 256);
  const auto fa = fit_decay(analytic, 5, analytic.size());
  const std::size_t n = 2048;
  const auto emp = empirical_spectrum(gram(KernelSpec::ntk2(), sample_iid(Domain::sphere(3), n, derive_seed(5, {n}))));
  const auto [lo, hi] = emp.validity_window();
  const auto fe = fit_decay(emp, lo, hi);
  const auto same_window = fit_decay(analytic, lo, hi);
  const bool ok = std::abs(fa.beta - 1.5) <= 0.2 && std::abs(fe.beta - 1.5) <= 0.2;
  return {ok, "analytic beta_hat " + num(fa.beta) + " (n_max 64); empirical beta_hat " + num(fe.beta) + " at n = 2048 over [" +
                  std::to_string(lo) + ", " + std::to_string(hi) + "] (analytic over the same window: " +
                  num(same_window.beta) + "); target 1.5 +- 0.2"};
}

// 6 ------------------------------------------------------------------------
Outcome noise_floor() {
  const auto noisy = run_interpolation_scaling(load_config(config_path("laplace_torus.json"), "scaling"));
  const auto clean = run_interpolation_scaling(load_config(config_path("laplace_torus_noiseless.json"), "scaling"));
  const auto nc = load_config(config_path("laplace_torus.json"), "scaling");
  const bool settings = nc.noise.sigma == 0.5 && nc.seeds == 20 && nc.n_grid.front() == 64 && nc.n_grid.back() == 2048;
  const double sigma2 = 0.25;
  const double exponent = noisy.fit->exponent, contrast = clean.fit->exponent;
  const double median_last = noisy.fit->medians.back();
  const bool ok = exponent > -0.2 && median_last > 0.05 * sigma2 && contrast < -0.5 && settings;
  return {ok, "noisy exponent " + num(exponent) + " (> -0.2), median risk at n = 2048 " + num(median_last) +
                  " (> " + num(0.05 * sigma2) + "), noiseless exponent " + num(contrast) + " (< -0.5)"};
}

// 7 ------------------------------------------------------------------------
Outcome conditional_bound() {
  auto c = load_config(config_path("laplace_torus.json"), "scaling");
  c.n_grid = {256};
  c.seeds = 10;
  c.noise_redraws = 100;
  const auto r = run_interpolation_scaling(c);
  std::size_t ok = 0;
  double worst = INFINITY;
  for (const auto& cell : r.summary["conditional"]) {
    ok += cell["passed"].get<bool>();
    const double z = (cell["mean_risk"].get<double>() - cell["variance_0"].get<double>()) / cell["stderr"].get<double>();
    worst = std::min(worst, z);
  }
  return {ok == 10 && r.summary["conditional"].size() == 10,
          std::to_string(ok) + "/10 draws with mean risk >= V(0) - 3 stderr (smallest (mean - V0)/stderr = " +
              num(worst) + ")"};
}

// 8 ------------------------------------------------------------------------
double gradient_check_error(Rng& rng) {
  std::uniform_int_distribution<int> half(1, 8), nn(1, 8), dd(2, 4);
  for (;;) {
    const int m = 2 * half(rng), n = nn(rng), d = dd(rng);
    NetworkState net = init_symmetric(m, d, rng());
    net.a += 0.3 * gaussian_vector(m, rng);
    const Points X = sample_iid(Domain::sphere(d), static_cast<std::size_t>(n), rng());
    // Keep pre-activations away from the ReLU kink so central differences are smooth.
    if ((X * net.w.transpose()).cwiseAbs().minCoeff() < 1e-3) continue;
    const Eigen::VectorXd Y = gaussian_vector(n, rng);
    const auto g = loss_gradient(net, X, Y);
    const double h = 1e-4;
    double diff = 0.0, norm = 0.0;
    NetworkState p = net;
    auto probe = [&](double& param, double analytic) {
      const double saved = param;
      param = saved + h;
      const double up = training_loss(p, X, Y);
      param = saved - h;
      const double down = training_loss(p, X, Y);
      param = saved;
      diff += std::pow((up - down) / (2 * h) - analytic, 2);
      norm += analytic * analytic;
    };
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < d; ++c) probe(p.w(r, c), g.w(r, c));
      probe(p.a(r), g.a(r));
    }
    return std::sqrt(diff / norm);
  }
}

Outcome nn_ntk_agreement() {
  auto c = load_config(config_path("ntk_sphere.json"), "ntk");
  c.output_dir = scratch("ntk").string();
  const bool settings = c.n_grid == std::vector<std::size_t>{32} && c.seeds == 5 &&
                        c.ntk.widths == std::vector<int>{256, 1024, 4096} && c.domain.kind() == DomainKind::sphere &&
                        c.domain.dim() == 3;
  const auto r = run_ntk_pipeline(c);
  const auto& widths = r.summary["per_n"][0]["widths"];
  std::string gaps;
  for (const auto& w : widths) gaps += num(w["median_sup_gap"].get<double>()) + " ";
  const bool net_ok = r.summary["gap_decreasing"].get<bool>() && r.summary["gap_below_tenth_of_max_y"].get<bool>();
  Rng rng(derive_seed(8, {}));
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) worst = std::max(worst, gradient_check_error(rng));
  return {settings && net_ok && worst < 1e-5, "median sup gaps (m = 256, 1024, 4096): " + gaps + "vs 0.1 max|y| = " +
                                      num(0.1 * r.summary["per_n"][0]["median_max_abs_y"].get<double>()) +
                                      "; gradient check worst relative error " + num(worst, 2)};
}

// 9 ------------------------------------------------------------------------
Outcome concentration() {
  const auto r = run_seminorm_concentration(load_config(config_path("concentration.json"), "concentration"));
  const double freq = r.summary["frequency"].get<double>();
  const bool exact = r.summary["identity_bit_exact"].get<bool>();
  return {freq >= 0.95 && exact && r.summary["trials"].get<std::size_t>() == 1000 && r.summary["n"].get<std::size_t>() == 500,
          "bound held in " + num(100 * freq) + "% of 1000 trials (>= 95%), identity bit-exact: " + (exact ? "yes" : "no")};
}

// 10 -----------------------------------------------------------------------
Outcome mercer_reconstruction() {
  double worst = 0.0;
  std::string detail;
  {
    const auto p = PeriodicFourier::power_law(1, 4.0, 2048);
    const auto s = exact_spectrum_torus(p);
    const auto k = KernelSpec::periodic(p);
    const auto grid = quadrature(Domain::torus(1), 100).nodes;
    double e = 0.0;
    for (Eigen::Index i = 0; i < grid.rows(); ++i)
      for (Eigen::Index j = 0; j < grid.rows(); ++j)
        e = std::max(e, std::abs(mercer_sum(s, grid.row(i), grid.row(j), s.size()) - k(grid.row(i), grid.row(j))));
    worst = std::max(worst, e);
    detail += "periodic " + num(e, 2);
  }
  for (const auto& [name, spec, d] : std::vector<std::tuple<std::string, KernelSpec, int>>{
           {"exponential dot (S^2)", KernelSpec::exponential_dot(1.0), 3},
           {"polynomial dot (S^3)", KernelSpec::polynomial_dot(3.0, 1.0), 4}}) {
    const auto s = dot_product_spectrum(spec, d, 40, 160);
    const Points grid = sample_iid(Domain::sphere(d), 100, derive_seed(10, {static_cast<std::uint64_t>(d)}));
    double e = 0.0;
    for (Eigen::Index i = 0; i < grid.rows(); ++i)
      for (Eigen::Index j = 0; j < grid.rows(); ++j)
        e = std::max(e, std::abs(mercer_sum(s, grid.row(i), grid.row(j), s.size()) - spec(grid.row(i), grid.row(j))));
    worst = std::max(worst, e);
    detail += ", " + name + " " + num(e, 2);
  }
  return {worst < 1e-6, "max error over 100-point grids: " + detail};
}

// 11 -----------------------------------------------------------------------
Outcome determinism() {
  const auto dir = scratch("determinism");
  const auto cfg = dir / "config.json";
  std::ofstream(cfg) << R"({
    "kernel": {"family": "laplace"},
    "domain": {"kind": "torus", "dim": 1},
    "noise": {"sigma": 0.5},
    "n_grid": [64, 128, 256],
    "seeds": 4,
    "seed": 2024,
    "integration": {"resolution": 1024}
  })";
  auto run = [&](const std::string& out, const std::string& workers) {
    const std::string cfg_s = cfg.string(), out_s = (dir / out).string();
    const char* argv[] = {"kilab", "scaling", "--config", cfg_s.c_str(), "--out", out_s.c_str(), "--workers", workers.c_str()};
    std::ostringstream o, e;
    return run_cli(8, argv, o, e);
  };
  const int a = run("a", "1"), b = run("b", "2");
  auto slurp = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  const auto ra = slurp(dir / "a" / "records.csv"), rb = slurp(dir / "b" / "records.csv");
  const bool same = a == 0 && b == 0 && !ra.empty() && ra == rb;
  return {same, "two runs (1 and 2 workers): records.csv " + std::string(same ? "byte-identical" : "DIFFER") + " (" +
                    std::to_string(ra.size()) + " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    std::string name;
    std::function<Outcome()> run;
    double budget_s;
  };
  const std::vector<Criterion> criteria = {
      {"Interpolation identity", interpolation_identity, 60},
      {"Variance monotonicity", variance_monotonicity, 60},
      {"Variance rate", variance_rate, 300},
      {"Effective-dimension law", effective_dimension_law, 30},
      {"NTK spectrum", ntk_spectrum, 300},
      {"Noise-floor scaling", noise_floor, 900},
      {"Conditional lower bound", conditional_bound, 600},
      {"NN / NTK agreement", nn_ntk_agreement, 1800},
      {"Semi-norm concentration", concentration, 60},
      {"Mercer reconstruction", mercer_reconstruction, 60},
      {"Determinism", determinism, 300},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < criteria[k].budget_s;
    const bool passed = o.passed && in_time;
    failures += !passed;
    std::printf("%s  %2d. %s: %s [%.1f s of %.0f s%s]\n", passed ? "PASS" : "FAIL", id, criteria[k].name.c_str(),
                o.detail.c_str(), secs, criteria[k].budget_s, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
