#include <benchmark/benchmark.h>

#include <cmath>

#include "dklab/harness.hpp"
#include "dklab/parallel.hpp"
#include "dklab/particles.hpp"

using namespace dklab;

namespace {

ExperimentConfig comparison_config(int replicas) {
  auto cfg = parse_config(nlohmann::json::parse(R"({
    "grid": {"d": 1, "L": 32, "L_fine": 256},
    "potential": {"family": "cosine", "amplitude": 0.5},
    "particles": {"N": 4096, "dt": 0.001},
    "meanfield": {"T": 0.05},
    "tests": {"functions": [{"mode": [1], "T": 0.025}, {"mode": [2], "T": 0.05}]},
    "distance": {"n_features": 64, "n_bootstrap": 10}
  })"));
  cfg.replicas = replicas;
  return cfg;
}

ParticleEnsemble ensemble(int d, int N) {
  CosineDensity u{d, {}, {}};
  std::vector<SmoothFunction> f;
  std::vector<double> s;
  for (int a = 0; a < 1; ++a) {
    f.emplace_back([u](std::span<const double> x) { return u(x); });
    s.push_back(u.sup_bound());
  }
  return sample_initial_iid(d, N, {1.0}, f, s, 1);
}

}  // namespace

// Replica ensemble of the N = 4096 comparison study, serial reference vs OpenMP.
static void BM_LawComparison(benchmark::State& st) {
  const auto cfg = comparison_config(100);
  const int threads = static_cast<int>(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(run_law_comparison(cfg, threads).d_particle_dk.value);
  st.counters["threads"] = threads;
}
BENCHMARK(BM_LawComparison)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime()->Iterations(1);

static void BM_DriftDirect(benchmark::State& st) {
  const PotentialMatrix pot(2, 1, PotentialFamily::bump, 2.0, 0.3);
  const auto e = ensemble(2, static_cast<int>(st.range(0)));
  std::vector<double> out;
  for (auto _ : st) interaction_drift(e, pot, DriftMethod::direct, out, st.range(1) != 0);
}
BENCHMARK(BM_DriftDirect)->Args({1024, 0})->Args({1024, 1})->Args({4096, 0})->Args({4096, 1})->Unit(benchmark::kMillisecond)->UseRealTime();

static void BM_DriftBinned(benchmark::State& st) {
  const PotentialMatrix pot(2, 1, PotentialFamily::bump, 2.0, 0.3);
  const auto e = ensemble(2, static_cast<int>(st.range(0)));
  std::vector<double> out;
  for (auto _ : st) interaction_drift(e, pot, DriftMethod::binned, out, st.range(1) != 0);
}
BENCHMARK(BM_DriftBinned)->Args({1024, 0})->Args({1024, 1})->Args({4096, 0})->Args({4096, 1})->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
