#include "kilab/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "kilab/config.hpp"
#include "kilab/errors.hpp"
#include "kilab/lab.hpp"
#include "kilab/report.hpp"

namespace kilab {

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned workers = 0;
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("-c,--config", o.config, "experiment config (JSON)")->required();
  sub->add_option("-o,--out", o.out, "output directory (overrides output_dir)");
  sub->add_option("-s,--seed", o.seed, "base seed (overrides seed)");
  sub->add_option("-w,--workers", o.workers, "worker threads (overrides workers and KILAB_WORKERS)");
}

ExperimentConfig resolve(const Options& o, const std::string& verb) {
  ExperimentConfig c = load_config(o.config, verb);
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.seed) c.seed = *o.seed;
  if (o.workers) c.workers = o.workers;
  return c;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Kernel interpolation laboratory"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::pair<std::string, std::string>> verbs = {
      {"spectrum", "analytic and empirical eigenvalue decay"},
      {"variance", "lambda sweeps of the variance term"},
      {"scaling", "interpolation risk versus n"},
      {"ntk", "two-layer networks against NTK interpolation"},
      {"concentration", "empirical semi-norm concentration"},
      {"kernel-info", "kernel constants and leading spectrum"},
  };
  for (const auto& [name, help] : verbs) add_common(app.add_subcommand(name, help), o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  const std::string verb = app.get_subcommands().front()->get_name();

  try {
    ExperimentConfig c = resolve(o, verb);
    for (const auto& w : c.warnings) err << "warning: " << w << "\n";
    if (verb == "kernel-info") {
      const Json info = kernel_info(c, out);
      write_resolved_config(c);
      const auto path = std::filesystem::path(c.output_dir) / "kernel_info.json";
      std::ofstream f(path);
      if (!f) throw ConfigError("cannot write output file '" + path.string() + "'");
      f << info.dump(2) << '\n';
      out << path.string() << "\n";
      return 0;
    }
    ScalingReport report;
    if (verb == "spectrum") report = run_spectrum(c);
    else if (verb == "variance") report = run_variance_scaling(c);
    else if (verb == "scaling") report = run_interpolation_scaling(c);
    else if (verb == "ntk") report = run_ntk_pipeline(c);
    else report = run_seminorm_concentration(c);
    write_resolved_config(c);
    const auto summary = emit_report(report, c.output_dir);
    err << report.verdict << "\n";
    out << summary.string() << "\n";
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
}

int run_cli(int argc, const char* const* argv) { return run_cli(argc, argv, std::cout, std::cerr); }

}  // namespace kilab
