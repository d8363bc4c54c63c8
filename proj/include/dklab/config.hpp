#pragma once

// Experiment configuration: a single JSON document with one section per module.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dklab/meanfield.hpp"
#include "dklab/particles.hpp"
#include "dklab/potentials.hpp"

namespace dklab {

struct TestFunctionSpec {
  std::vector<int> mode;
  bool is_sin = false;
  double T = 0.0;
  /// Species the function acts on; -1 for all.
  int species = -1;

  double operator()(std::span<const double> x) const;
  double partial(int l, std::span<const double> x) const;
};

struct ExperimentConfig {
  // grid
  int d = 1;
  int L = 32;
  int L_fine = 256;
  int p = 1;
  int p_fine = 3;
  // model
  int n_species = 1;
  std::vector<double> sigma{1.0};
  std::string potential_family = "cosine";
  double potential_width = 4.0;
  double potential_amplitude = 0.5;
  double r_I = 1.0;
  std::vector<double> potential_amplitudes;
  CosineDensity initial{1, {{1}}, {0.8}};
  // particles
  int N = 4096;
  double dt_particles = 1e-3;
  std::string drift_method = "auto";
  // dk
  double dt_dk = 0.0;
  double dk_dt_factor = 0.1;
  // meanfield
  double T = 0.5;
  double dt_meanfield = 0.0;
  double dt_fine = 0.0;
  // tests
  std::vector<TestFunctionSpec> tests;
  // monitor
  double delta0 = 0.12;
  double eps = 0.0;
  double delta = 0.0;
  // study
  int replicas = 200;
  std::vector<int> N_values;
  std::vector<int> L_values;
  std::string kind = "mfl-consistency";
  int M_cut = 16;
  // distance
  int distance_j = 3;
  int n_features = 512;
  int n_bootstrap = 200;
  double feature_scale = 1.0;
  // run
  std::uint64_t seed = 1;
  std::string output = "out";
  int threads = 0;

  nlohmann::json raw;

  double h() const { return kTwoPi / L; }
  PotentialMatrix potentials() const;
  MeanFieldModel model(int order) const;
  std::vector<SmoothFunction> initial_densities() const;
  std::vector<double> initial_sup_bounds() const;
  DriftMethod drift() const;
  double dk_dt(int L_grid) const;
  double meanfield_dt(int L_grid) const;
  double monitor_eps() const { return eps > 0.0 ? eps : delta0 / 8.0; }
  double monitor_delta() const { return delta > 0.0 ? delta : monitor_eps() / 2.0; }
  nlohmann::json to_json() const;
};

/// Parses and validates; throws ConfigError naming the offending key.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

/// Assumption-regime audit: N^{1-delta0} h^d >= 1, N^{delta0 (T + 1)} h <= 1,
/// r_I^{-2(d+2)} <= log N. Each reported as satisfied or violated.
nlohmann::json scaling_audit(double N, double h, int d, double r_I, double T, double delta0);

}  // namespace dklab
