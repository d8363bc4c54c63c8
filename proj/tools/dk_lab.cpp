#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dklab/config.hpp"
#include "dklab/error.hpp"
#include "dklab/harness.hpp"
#include "dklab/parallel.hpp"

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  int threads = 0;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON experiment configuration")->required();
  sub->add_option("--seed", c.seed, "master seed (overrides run.seed)")->each([&c](const std::string&) { c.seed_set = true; });
  sub->add_option("--out", c.out, "output directory (overrides output)");
  sub->add_option("--threads", c.threads, "worker threads (fallback: DK_LAB_THREADS)");
}

dklab::ExperimentConfig load(const Common& c) {
  auto cfg = dklab::load_config(c.config);
  if (c.seed_set) cfg.seed = c.seed;
  if (!c.out.empty()) cfg.output = c.out;
  if (c.threads > 0) cfg.threads = c.threads;
  return cfg;
}

void emit(const dklab::StudyReport& rep, const dklab::ExperimentConfig& cfg) {
  rep.write(cfg.output, cfg);
  std::cout << rep.summary.dump(2) << "\n";
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "report written to " << cfg.output << "/report.json\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dk_lab: particle systems, Dean-Kawasaki discretisations and their fluctuations"};
  app.require_subcommand(1);

  Common c;
  std::string kind = "mfl-consistency";
  std::string mode = "normal";
  bool positions = false;

  auto* sp = app.add_subcommand("simulate-particles", "run the interacting particle system");
  add_common(sp, c);
  sp->add_flag("--positions", positions, "also write final positions as CSV");
  auto* sd = app.add_subcommand("simulate-dk", "run one finite-difference Dean-Kawasaki path");
  add_common(sd, c);
  auto* sm = app.add_subcommand("simulate-mfl", "integrate the discrete mean-field limit");
  add_common(sm, c);
  auto* dp = app.add_subcommand("deposit", "deposit sampled particles onto the grid");
  add_common(dp, c);
  auto* cl = app.add_subcommand("compare-laws", "weak distance between particle and DK fluctuation laws");
  add_common(cl, c);
  auto* cv = app.add_subcommand("convergence", "convergence study with a fitted log-log slope");
  add_common(cv, c);
  cv->add_option("--kind", kind, "operator-order | mfl-consistency | quadrature | meanfield-rate | deposit");
  auto* ss = app.add_subcommand("stopping-stats", "stopping-time statistics over an N sweep");
  add_common(ss, c);
  ss->add_option("--mode", mode, "normal | zero-noise | hostile");
  auto* st = app.add_subcommand("selftest", "run the built-in sanity suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (st->parsed()) {
      int failed = 0;
      for (const auto& r : dklab::run_selftest()) {
        std::cout << (r.ok ? "ok   " : "FAIL ") << r.name << (r.detail.empty() ? "" : " (" + r.detail + ")") << "\n";
        failed += !r.ok;
      }
      return failed == 0 ? 0 : 1;
    }
    auto cfg = load(c);
    const int threads = dklab::resolve_threads(cfg.threads);
    if (sp->parsed()) emit(dklab::simulate_particles(cfg, positions), cfg);
    if (sd->parsed()) emit(dklab::simulate_dk(cfg), cfg);
    if (sm->parsed()) emit(dklab::simulate_mfl(cfg), cfg);
    if (dp->parsed()) emit(dklab::simulate_deposit(cfg), cfg);
    if (cl->parsed()) emit(dklab::run_law_comparison(cfg, threads).report, cfg);
    if (cv->parsed()) emit(dklab::run_convergence_study(kind, cfg, threads), cfg);
    if (ss->parsed()) {
      const auto Ns = cfg.N_values.empty() ? std::vector<int>{256, 1024, 4096} : cfg.N_values;
      emit(dklab::run_stopping_stats(cfg, Ns, threads, mode).report, cfg);
    }
  } catch (const dklab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const dklab::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
