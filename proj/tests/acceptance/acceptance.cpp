// One PASS/FAIL line per acceptance criterion. Optional arguments select criteria by number.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "dklab/dkspde.hpp"
#include "dklab/duality.hpp"
#include "dklab/harness.hpp"
#include "dklab/parallel.hpp"
#include "dklab/rng.hpp"

using namespace dklab;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string f3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

bool within(double v, double target, double tol) { return std::abs(v - target) <= tol; }

ExperimentConfig base() {
  return parse_config(nlohmann::json::parse(R"({"grid": {"d": 1, "L": 32}})"));
}

Outcome c1_operator_order() {
  std::string d;
  bool ok = true;
  for (int p : {1, 3}) {
    const auto r = operator_order_study(p, {16, 32, 64, 128});
    ok = ok && within(r.first.slope, p + 1, 0.2) && within(r.second.slope, p + 1, 0.2);
    d += "p=" + std::to_string(p) + " d:" + f3(r.first.slope) + " lap:" + f3(r.second.slope) + " ";
  }
  return {ok, d};
}

Outcome c2_mfl_consistency() {
  auto cfg = parse_config(nlohmann::json::parse(R"({
    "grid": {"d": 1, "L": 32, "L_fine": 512, "p": 1, "p_fine": 3},
    "potential": {"family": "bump", "width": 4.0, "amplitude": 1.0, "r_I": 0.5},
    "initial": {"modes": [[1]], "amplitudes": [0.5]},
    "meanfield": {"T": 0.5}
  })"));
  const auto r = mfl_consistency_study(cfg, {16, 32, 64}, 0.5);
  return {within(r.l2.slope, 2.0, 0.3),
          "L2 slope " + f3(r.l2.slope) + " [" + f3(r.l2.ci_low) + ", " + f3(r.l2.ci_high) + "], H1 slope " + f3(r.h1.slope)};
}

Outcome c3_meanfield_rate(int threads) {
  auto cfg = base();
  cfg.T = 0.5;
  cfg.seed = 31;
  const auto r = meanfield_rate_study(cfg, {250, 1000, 4000}, 50, 16, 0.5, threads);
  return {within(r.fit.slope, -0.5, 0.1), "slope " + f3(r.fit.slope) + " [" + f3(r.fit.ci_low) + ", " + f3(r.fit.ci_high) + "]"};
}

Outcome c4_law_comparison(int threads) {
  auto cfg = parse_config(nlohmann::json::parse(R"({
    "grid": {"d": 1, "L": 32, "L_fine": 256, "p": 1, "p_fine": 3},
    "model": {"sigma": [1.0]},
    "potential": {"family": "cosine", "amplitude": 0.5},
    "initial": {"modes": [[1]], "amplitudes": [0.8]},
    "particles": {"N": 4096, "dt": 0.001},
    "dk": {"dt_factor": 0.01},
    "meanfield": {"T": 0.5},
    "tests": {"functions": [{"mode": [1], "kind": "cos", "T": 0.25}, {"mode": [2], "kind": "cos", "T": 0.5}]},
    "study": {"replicas": 2000},
    "distance": {"j": 3, "n_features": 512, "n_bootstrap": 200},
    "seed": 2024
  })"));
  const auto r = run_law_comparison(cfg, threads);
  const auto& a = r.d_particle_dk;
  const auto& b = r.d_particle_sigma2;
  const auto& c = r.d_particle_particle;
  const double se_ab = std::hypot(a.se, b.se), se_ac = std::hypot(a.se, c.se);
  const bool disc = a.value < b.value - 3 * se_ab;
  const bool indist = a.value <= c.value + 3 * se_ac;
  return {disc && indist, "d(P,DK)=" + f3(a.value) + "+-" + f3(a.se) + " d(P,DK2s)=" + f3(b.value) + "+-" + f3(b.se) +
                              " d(P,P')=" + f3(c.value) + "+-" + f3(c.se) + " selfcentred(P,DK2s)=" +
                              f3(r.d_particle_sigma2_self.value) + " stopped=" + f3(r.stopped_fraction[0])};
}

Outcome c5_noise_covariance() {
  const PeriodicGrid g(1, 16);
  const double dt = 1e-3;
  int worst_ok = 0;
  double worst_z = 0.0;
  for (std::uint32_t trip = 0; trip < 10; ++trip) {
    RandomStream rng(55, {trip, 0, 0, 0, RngPurpose::test_data});
    const double sigma = 0.5 + rng.uniform();
    const HmflOperator op(g, {PotentialMatrix::zero(1, 1), {sigma}, trip % 2 ? 3 : 1});
    DKState st;
    st.rho = {GridField(g)};
    SpeciesFields p1{GridField(g)}, p2{GridField(g)};
    for (std::size_t k = 0; k < g.size(); ++k) {
      st.rho[0][k] = 0.05 + rng.uniform();
      p1[0][k] = rng.normal();
      p2[0][k] = rng.normal();
    }
    st.N = 20 + 100 * rng.uniform();
    st.seed = 1000 + trip;
    const double pred = 2 * sigma * dt * tested_quadratic_variation(op, st, p1, p2);
    const int R = 100000;
    double sa = 0, sb = 0, sab = 0, sab2 = 0;
    for (int r = 0; r < R; ++r) {
      st.replica = static_cast<std::uint32_t>(r);
      const auto inc = noise_increment(op, st, dt);
      const double a = inner_product_h(p1[0], inc[0]), b = inner_product_h(p2[0], inc[0]);
      sa += a;
      sb += b;
      sab += a * b;
      sab2 += a * a * b * b;
    }
    const double cov = sab / R - (sa / R) * (sb / R);
    const double se = std::sqrt((sab2 / R - (sab / R) * (sab / R)) / R);
    const double z = std::abs(cov - pred) / se;
    worst_z = std::max(worst_z, z);
    worst_ok += z < 5.0;
  }
  return {worst_ok == 10, std::to_string(worst_ok) + "/10 within 5 SE, max z " + f3(worst_z)};
}

Outcome c6_duality() {
  const PeriodicGrid g(1, 32);
  const PotentialMatrix pot(1, 1, PotentialFamily::bump, 2.0, 1.0, {1.0});
  double worst = 0.0;
  for (int p : {1, 3}) {
    const HmflOperator op(g, {pot, {1.0}, p});
    const double dt = 1e-4, T = 1.0;
    IntegrateOptions mo;
    mo.dt = dt;
    SpeciesFields rho0{interpolate_Ih([](std::span<const double> x) { return (1 + 0.6 * std::cos(x[0]) + 0.2 * std::sin(2 * x[0])) / kTwoPi; }, g)};
    const auto rb = integrate_hmfl(op, rho0, T, mo);
    SpeciesFields phiT{interpolate_Ih([](std::span<const double> x) { return std::sin(x[0]) + 0.5 * std::cos(2 * x[0]); }, g)};
    const auto fam = evolve_test_discrete(op, {{phiT, T}}, rb, dt);
    SpeciesFields eta0{interpolate_Ih([](std::span<const double> x) { return std::cos(x[0]) + 0.3 * std::sin(3 * x[0]); }, g)};
    const auto eta = integrate_linearized(op, eta0, rb, T, dt);
    const double ref = inner_product_h(fam.at(0, 0.0)[0], eta0[0]);
    for (std::size_t n = 0; n < eta.size(); n += 100)
      worst = std::max(worst, std::abs(inner_product_h(fam.at(0, n * dt)[0], eta[n][0]) - ref) / std::abs(ref));
  }
  return {worst < 1e-6, "max relative drift " + f3(worst)};
}

Outcome c7_stopping(int threads) {
  auto cfg = base();
  cfg.replicas = 1000;
  cfg.T = 0.5;
  cfg.seed = 77;
  const auto r = run_stopping_stats(cfg, {256, 1024, 4096}, threads);
  bool mono = true;
  for (std::size_t i = 1; i < r.fractions.size(); ++i) mono = mono && r.fractions[i] <= r.fractions[i - 1];
  bool audit_ok = true;
  for (const auto& a : r.report.audit)
    if (a["relation"] != "r_I^(-2(d+2)) <= log N") audit_ok = audit_ok && a["status"] == "satisfied";
  std::string d = "fractions";
  for (double f : r.fractions) d += " " + f3(f);
  d += audit_ok ? " (scaling satisfied)" : " (scaling violated)";
  return {mono && r.fractions.back() <= 0.05 && audit_ok, d};
}

Outcome c8_deposit(int threads) {
  bool ok = true;
  std::string d;
  for (int dim : {1, 2})
    for (int p : {1, 3}) {
      const double e = deposit_reproduction_error(dim, p, 1000, 8);
      ok = ok && e < 1e-10;
      d += "repro(d=" + std::to_string(dim) + ",p=" + std::to_string(p) + ")=" + f3(e) + " ";
    }
  for (int p : {1, 3}) {
    const auto r = deposit_consistency_study(p, {16, 32, 64}, 100, 10000, 88, threads);
    ok = ok && within(r.fit.slope, p + 1, 0.4);
    d += "slope(p=" + std::to_string(p) + ")=" + f3(r.fit.slope) + " ";
  }
  return {ok, d};
}

Outcome c9_invariants(int threads) {
  int failures = 0, checks = 0;
  auto expect = [&](bool c) {
    ++checks;
    failures += !c;
  };
  // pathwise mass, two species in d = 2 with interaction
  {
    const PeriodicGrid g(2, 16);
    const PotentialMatrix pot(2, 2, PotentialFamily::bump, 2.0, 0.8, {1.0, 0.5, 0.5, 0.7});
    const HmflOperator op(g, {pot, {1.0, 0.6}, 1});
    SpeciesFields rho;
    for (int a = 0; a < 2; ++a)
      rho.push_back(interpolate_Ih([a](std::span<const double> x) { return (1 + 0.3 * std::cos(x[0] + a) * std::sin(x[1])) / (kTwoPi * kTwoPi); }, g));
    DKPathOptions opt;
    opt.T = 0.05;
    opt.dt = 0.05 / 100;
    opt.record_every = 1;
    const auto path = run_dk_path(op, rho, 500, 4, 0, opt);
    for (const auto& s : path.recorded)
      for (int a = 0; a < 2; ++a) expect(std::abs(quadrature_h(s[a]) - quadrature_h(rho[a])) < 1e-12);
    const auto again = run_dk_path(op, rho, 500, 4, 0, opt);
    for (int a = 0; a < 2; ++a)
      for (std::size_t k = 0; k < g.size(); ++k) expect(again.final_state.rho[a][k] == path.final_state.rho[a][k]);
  }
  // seed reproducibility across thread counts
  {
    auto cfg = base();
    cfg.replicas = 16;
    cfg.T = 0.1;
    const auto a = run_stopping_stats(cfg, {512}, 1);
    const auto b = run_stopping_stats(cfg, {512}, std::max(2, threads));
    expect(a.report.raw.at("stopping_times.csv") == b.report.raw.at("stopping_times.csv"));
    const auto s1 = simulate_particles(cfg, false), s2 = simulate_particles(cfg, false);
    expect(s1.raw.at("particles_final.bin") == s2.raw.at("particles_final.bin"));
    const auto r1 = simulate_dk(cfg), r2 = simulate_dk(cfg);
    expect(r1.to_json(cfg, false).dump() == r2.to_json(cfg, false).dump());
  }
  // SBP identity and Plancherel on random fields
  for (int d : {1, 2})
    for (int p : {1, 3}) {
      const PeriodicGrid g(d, d == 1 ? 64 : 16);
      const DiscreteOperatorSet ops(g, p);
      for (std::uint32_t k = 0; k < 50; ++k) {
        RandomStream rng(99, {k, static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(d), 0, RngPurpose::test_data});
        GridField u(g), v(g);
        for (std::size_t i = 0; i < g.size(); ++i) {
          u[i] = rng.normal();
          v[i] = rng.normal();
        }
        const double nu = lp_norm_h(u, Lp::two), nv = lp_norm_h(v, Lp::two);
        for (int l = 0; l < d; ++l)
          expect(std::abs(inner_product_h(ops.second(u, l), v) + inner_product_h(ops.sbp(u, l), ops.sbp(v, l))) <= 1e-10 * nu * nv);
        expect(std::abs(sobolev_norm_h(u, 0) - nu) <= 1e-10 * nu);
      }
    }
  return {failures == 0, std::to_string(checks - failures) + "/" + std::to_string(checks) + " checks passed"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const int threads = resolve_threads(0);
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
      {1, "operator order", 1, c1_operator_order},
      {2, "mfl consistency", 60, c2_mfl_consistency},
      {3, "mean-field rate", 300, [&] { return c3_meanfield_rate(threads); }},
      {4, "law comparison", 1800, [&] { return c4_law_comparison(threads); }},
      {5, "noise covariance", 60, c5_noise_covariance},
      {6, "duality conservation", 60, c6_duality},
      {7, "stopping-time decay", 900, [&] { return c7_stopping(threads); }},
      {8, "deposit", 120, [&] { return c8_deposit(threads); }},
      {9, "invariant suite", 60, [&] { return c9_invariants(threads); }},
  };
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs <= c.budget_s;
    const bool pass = o.pass && in_budget;
    failed += !pass;
    std::printf("%s criterion %d (%s): %s [%.2fs, budget %.0fs%s]\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs, c.budget_s, in_budget ? "" : ", over budget");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
