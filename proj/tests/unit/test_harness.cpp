#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dklab/error.hpp"
#include "dklab/harness.hpp"
#include "dklab/parallel.hpp"

using namespace dklab;
using nlohmann::json;

namespace {

json base_config() {
  return json::parse(R"({
    "grid": {"d": 1, "L": 16, "L_fine": 128, "p": 1},
    "model": {"sigma": [1.0]},
    "potential": {"family": "cosine", "amplitude": 0.5},
    "particles": {"N": 256},
    "meanfield": {"T": 0.1},
    "study": {"replicas": 8},
    "seed": 3
  })");
}

}  // namespace

TEST_CASE("config parsing") {
  const auto cfg = parse_config(base_config());
  CHECK(cfg.L == 16);
  CHECK(cfg.N == 256);
  CHECK(cfg.monitor_eps() == doctest::Approx(0.015));
  auto j = base_config();
  j["grid"].erase("d");
  try {
    parse_config(j);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("grid.d") != std::string::npos);
  }
  j = base_config();
  j["grid"]["L"] = 15;
  CHECK_THROWS_AS(parse_config(j), ConfigError);
  j = base_config();
  j["potential"]["family"] = "yukawa";
  CHECK_THROWS_AS(parse_config(j), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("scaling audit") {
  const auto a = scaling_audit(4096, kTwoPi / 32, 1, 1.0, 0.5, 0.12);
  REQUIRE(a.size() == 3);
  for (const auto& row : a) CHECK(row["status"] == "satisfied");
  const auto b = scaling_audit(10, kTwoPi / 512, 1, 0.1, 0.5, 0.12);
  CHECK(b[0]["status"] == "violated");
  CHECK(b[2]["status"] == "violated");
}

TEST_CASE("slope fit") {
  std::vector<double> x{1, 2, 4, 8}, y;
  for (double v : x) y.push_back(3 * std::pow(v, -1.5));
  const auto f = fit_loglog(x, y);
  CHECK(f.slope == doctest::Approx(-1.5));
  CHECK(f.se < 1e-10);
  CHECK_THROWS_AS(fit_loglog({1, 2}, {1, 2}), ConfigError);
  std::vector<double> noisy{1.0, 0.26, 0.24, 0.066};
  const auto g = fit_loglog({1, 2, 4, 8}, noisy);
  CHECK(g.ci_low < g.slope);
  CHECK(g.slope < g.ci_high);
}

TEST_CASE("aligned steps") {
  CHECK(aligned_steps(0.5, 0.001, {0.25, 0.5}) == 500);
  CHECK(aligned_steps(0.5, 0.0013, {0.25}) % 2 == 0);
  CHECK(aligned_steps(1.0, 0.3, {}) == 4);
}

TEST_CASE("convergence studies") {
  const auto oo = operator_order_study(1, {16, 32, 64, 128});
  CHECK(oo.first.slope == doctest::Approx(2.0).epsilon(0.1));
  const auto q = quadrature_study({8, 16, 32});
  for (double e : q.table.column("err_constant")) CHECK(e < 1e-13);
  auto cfg = parse_config(base_config());
  CHECK_THROWS_AS(run_convergence_study("unknown", cfg, 1), ConfigError);
  cfg.L_values = {16, 32};
  CHECK_THROWS_AS(run_convergence_study("operator-order", cfg, 1), ConfigError);
}

TEST_CASE("law comparison refuses small ensembles") {
  auto cfg = parse_config(base_config());
  cfg.replicas = 50;
  CHECK_THROWS_AS(run_law_comparison(cfg, 1), ConfigError);
}

TEST_CASE("stopping statistics edge cases") {
  auto cfg = parse_config(base_config());
  cfg.replicas = 6;
  const auto zn = run_stopping_stats(cfg, {256, 1024}, 1, "zero-noise");
  for (double f : zn.fractions) CHECK(f == 0.0);
  const auto hostile = run_stopping_stats(cfg, {256}, 1, "hostile");
  CHECK(hostile.fractions[0] == 1.0);
  CHECK(hostile.table.column("initial_gate")[0] == 6.0);
  CHECK_THROWS_AS(run_stopping_stats(cfg, {256}, 1, "sideways"), ConfigError);
}

TEST_CASE("replica results do not depend on the thread count") {
  auto cfg = parse_config(base_config());
  cfg.replicas = 6;
  const auto a = run_stopping_stats(cfg, {256}, 1);
  const auto b = run_stopping_stats(cfg, {256}, 3);
  CHECK(a.report.raw.at("stopping_times.csv") == b.report.raw.at("stopping_times.csv"));
  std::vector<double> s(20), p(20);
  for_each_replica_serial(20, [&](int r) { s[r] = std::sin(r); });
  for_each_replica(20, 4, [&](int r) { p[r] = std::sin(r); });
  CHECK(s == p);
  CHECK_THROWS(for_each_replica(5, 2, [](int r) {
    if (r == 3) throw std::runtime_error("boom");
  }));
}

TEST_CASE("report writing is deterministic") {
  const auto cfg = parse_config(base_config());
  const auto a = simulate_mfl(cfg), b = simulate_mfl(cfg);
  CHECK(a.to_json(cfg, false).dump() == b.to_json(cfg, false).dump());
  CHECK(a.to_json(cfg).contains("generated_at"));
  CHECK(a.to_json(cfg)["scaling_audit"].size() == 3);
  const auto dir = std::filesystem::temp_directory_path() / "dklab_report_test";
  std::filesystem::remove_all(dir);
  a.write(dir.string(), cfg);
  CHECK(std::filesystem::exists(dir / "report.json"));
  CHECK(std::filesystem::exists(dir / "tables" / "trajectory.csv"));
  CHECK(std::filesystem::exists(dir / "tables" / "trajectory.dat"));
  CHECK(std::filesystem::exists(dir / "raw" / "rho_final_0.bin"));
  std::ifstream is(dir / "report.json");
  const auto j = json::parse(is);
  CHECK(j["provenance"]["config_hash"] == config_hash(cfg));
  std::filesystem::remove_all(dir);
}

TEST_CASE("selftest suite passes") {
  for (const auto& item : run_selftest()) {
    INFO(item.name << " " << item.detail);
    CHECK(item.ok);
  }
}
