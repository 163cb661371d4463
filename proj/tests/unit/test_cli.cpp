#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <random>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "kilab/random.hpp"
#include "kilab/cli.hpp"
#include "kilab/config.hpp"
#include "kilab/errors.hpp"

using namespace kilab;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "kilab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("kilab_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_json(const fs::path& dir, const std::string& name, const Json& j) {
  const fs::path p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Json small_scaling() {
  return Json::parse(R"({
    "kernel": {"family": "laplace"},
    "domain": {"kind": "torus", "dim": 1},
    "noise": {"sigma": 0.5},
    "n_grid": [32, 64],
    "seeds": 2,
    "bootstrap": 20,
    "integration": {"resolution": 256}
  })");
}

}  // namespace

TEST_CASE("scaling happy path writes records, summary and plots") {
  const auto dir = scratch("happy");
  const auto cfg = write_json(dir, "c.json", small_scaling());
  const auto r = cli({"scaling", "--config", cfg.string(), "--out", (dir / "out").string()});
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "out" / "records.csv"));
  CHECK(fs::exists(dir / "out" / "summary.json"));
  CHECK(fs::exists(dir / "out" / "plots" / "risk_vs_n.svg"));
  CHECK(fs::exists(dir / "out" / "resolved_config.json"));
  CHECK(r.out.find((dir / "out" / "summary.json").string()) != std::string::npos);
}

TEST_CASE("missing config file exits 1 and names the path") {
  const auto r = cli({"scaling", "--config", "/nonexistent/where.json"});
  CHECK(r.code == 1);
  CHECK(r.err.find("/nonexistent/where.json") != std::string::npos);
}

TEST_CASE("unknown verb and malformed configs exit 1") {
  CHECK(cli({"frobnicate", "--config", "x.json"}).code == 1);
  CHECK(cli({}).code == 1);
  const auto dir = scratch("malformed");
  Json j = small_scaling();
  j["noise"]["sigmaa"] = 1.0;
  auto r = cli({"scaling", "--config", write_json(dir, "a.json", j).string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("sigmaa") != std::string::npos);
  j = small_scaling();
  j["n_grid"] = {32, -4};
  r = cli({"scaling", "--config", write_json(dir, "b.json", j).string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("n_grid[1]") != std::string::npos);
  std::ofstream(dir / "c.json") << "{ not json";
  CHECK(cli({"scaling", "--config", (dir / "c.json").string()}).code == 1);
}

TEST_CASE("numerical failure exits 2") {
  const auto dir = scratch("numerical");
  Json j = small_scaling();
  j["kernel"] = {{"family", "constant"}};
  j["seeds"] = 1;
  const auto r = cli({"scaling", "--config", write_json(dir, "c.json", j).string(), "--out", (dir / "o").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("numerical error") != std::string::npos);
}

TEST_CASE("kernel-info prints constants, the block table and beta_hat") {
  const auto dir = scratch("info");
  const auto r = cli({"kernel-info", "--config", std::string(KILAB_CONFIG_DIR) + "/ntk_sphere.json", "--out", dir.string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("kappa^2") != std::string::npos);
  CHECK(r.out.find("holder est") != std::string::npos);
  CHECK(r.out.find("beta_hat") != std::string::npos);
  CHECK(r.out.find("multiplicity") != std::string::npos);
  const auto info = Json::parse(slurp(dir / "kernel_info.json"));
  CHECK(info["kappa2"].get<double>() == doctest::Approx(2.0));
}

TEST_CASE("validate_config fills defaults and echoes the resolved config") {
  const auto dir = scratch("minimal");
  Json j = {{"kernel", {{"family", "laplace"}}}, {"domain", {{"kind", "torus"}, {"dim", 1}}}, {"n_grid", {64, 128}},
            {"output_dir", (dir / "o").string()}};
  const auto c = validate_config(write_json(dir, "m.json", j), "scaling");
  CHECK(c.noise.sigma == 0.5);
  CHECK(c.seeds == 20);
  CHECK(c.integration.method == IntegrationMethod::quadrature);
  CHECK(c.integration.resolution > 0);
  const auto echo = Json::parse(slurp(dir / "o" / "resolved_config.json"));
  CHECK(echo["noise"]["sigma"].get<double>() == 0.5);
  CHECK(echo["n_grid"] == Json({64, 128}));
}

TEST_CASE("config guards") {
  const Json base = small_scaling();
  SUBCASE("sigma = 0 needs contrast mode") {
    Json j = base;
    j["noise"]["sigma"] = 0.0;
    CHECK_THROWS_AS(parse_config(j, "scaling"), ConfigError);
    j["contrast"] = true;
    CHECK_NOTHROW(parse_config(j, "scaling"));
    CHECK_THROWS_AS(parse_config(j, "variance"), ConfigError);
  }
  SUBCASE("unsorted n_grid is normalized with a warning") {
    Json j = base;
    j["n_grid"] = {256, 64, 128, 64};
    const auto c = parse_config(j, "scaling");
    CHECK(c.n_grid == std::vector<std::size_t>{64, 128, 256});
    CHECK_FALSE(c.warnings.empty());
  }
  SUBCASE("odd NTK width") {
    Json j = Json::parse(R"({"kernel": {"family": "ntk2"}, "domain": {"kind": "sphere", "dim": 3},
                             "ntk": {"widths": [256, 513]}})");
    try {
      (void)parse_config(j, "ntk");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("ntk.widths[1]") != std::string::npos);
    }
  }
  SUBCASE("negative lambda") {
    Json j = base;
    j["lambda_grid"] = {1e-3, -1e-2};
    CHECK_THROWS_AS(parse_config(j, "variance"), ConfigError);
  }
  SUBCASE("kernel and domain must match") {
    Json j = base;
    j["kernel"] = {{"family", "ntk2"}};
    CHECK_THROWS_AS(parse_config(j, "scaling"), ConfigError);
  }
  SUBCASE("unknown fields are named") {
    Json j = base;
    j["seedz"] = 3;
    try {
      (void)parse_config(j, "scaling");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("seedz") != std::string::npos);
    }
  }
}

TEST_CASE("resolved config re-runs to identical outputs and inputs are never modified") {
  const auto dir = scratch("roundtrip");
  const auto cfg = write_json(dir, "c.json", small_scaling());
  const auto before = slurp(cfg);
  REQUIRE(cli({"scaling", "--config", cfg.string(), "--out", (dir / "a").string()}).code == 0);
  CHECK(slurp(cfg) == before);
  const auto resolved = dir / "a" / "resolved_config.json";
  const auto resolved_before = slurp(resolved);
  REQUIRE(cli({"scaling", "--config", resolved.string(), "--out", (dir / "b").string()}).code == 0);
  CHECK(slurp(resolved) == resolved_before);
  CHECK(slurp(dir / "a" / "records.csv") == slurp(dir / "b" / "records.csv"));
  CHECK(slurp(dir / "b" / "resolved_config.json").find("\"output_dir\"") != std::string::npos);
}

TEST_CASE("seed and worker overrides") {
  const auto dir = scratch("overrides");
  const auto cfg = write_json(dir, "c.json", small_scaling());
  REQUIRE(cli({"scaling", "-c", cfg.string(), "-o", (dir / "a").string(), "-w", "1"}).code == 0);
  REQUIRE(cli({"scaling", "-c", cfg.string(), "-o", (dir / "b").string(), "-w", "2"}).code == 0);
  REQUIRE(cli({"scaling", "-c", cfg.string(), "-o", (dir / "c").string(), "-s", "99"}).code == 0);
  CHECK(slurp(dir / "a" / "records.csv") == slurp(dir / "b" / "records.csv"));
  CHECK(slurp(dir / "a" / "records.csv") != slurp(dir / "c" / "records.csv"));
  CHECK(Json::parse(slurp(dir / "c" / "resolved_config.json"))["seed"].get<std::uint64_t>() == 99);
}

TEST_CASE("every verb runs on a small config") {
  const auto dir = scratch("verbs");
  const auto conc = write_json(dir, "conc.json", Json::parse(R"({
    "kernel": {"family": "laplace"}, "domain": {"kind": "torus", "dim": 1},
    "concentration": {"n": 100, "trials": 50}})"));
  CHECK(cli({"concentration", "-c", conc.string(), "-o", (dir / "conc").string()}).code == 0);
  const auto var = write_json(dir, "var.json", Json::parse(R"({
    "kernel": {"family": "periodic", "dim": 1, "decay": 4, "max_freq": 256},
    "domain": {"kind": "torus", "dim": 1}, "noise": {"sigma": 1.0}, "n_grid": [128], "seeds": 1})"));
  CHECK(cli({"variance", "-c", var.string(), "-o", (dir / "var").string()}).code == 0);
  CHECK(fs::exists(dir / "var" / "variance_curve_n128.csv"));
  const auto spec = write_json(dir, "spec.json", Json::parse(R"({
    "kernel": {"family": "ntk2"}, "domain": {"kind": "sphere", "dim": 3}, "n_grid": [256],
    "spectrum": {"n_max": 24, "quad_res": 96, "window": [5, 60]}})"));
  CHECK(cli({"spectrum", "-c", spec.string(), "-o", (dir / "spec").string()}).code == 0);
  const auto ntk = write_json(dir, "ntk.json", Json::parse(R"({
    "kernel": {"family": "ntk2"}, "domain": {"kind": "sphere", "dim": 3}, "noise": {"sigma": 0.2},
    "n_grid": [8], "seeds": 1, "ntk": {"widths": [32, 64], "steps": 300}, "integration": {"resolution": 12}})"));
  CHECK(cli({"ntk", "-c", ntk.string(), "-o", (dir / "ntk").string()}).code == 0);
  CHECK(fs::exists(dir / "ntk" / "traces"));
}
