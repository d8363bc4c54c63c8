#pragma once

// Experiment drivers, slope fits and report emission.

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dklab/config.hpp"
#include "dklab/fluctuation_lab.hpp"

namespace dklab {

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::string csv() const;
  /// Whitespace-separated, '#' header; gnuplot-ready.
  std::string dat() const;
  std::vector<double> column(const std::string& name) const;
};

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int n = 0;

  nlohmann::json to_json() const;
};

/// Least-squares fit of log y against log x with a 95% Student-t interval.
/// Throws ConfigError with fewer than 3 points.
SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

struct StudyReport {
  std::string study;
  nlohmann::json summary = nlohmann::json::object();
  nlohmann::json audit = nlohmann::json::array();
  std::map<std::string, Table> tables;
  std::map<std::string, std::string> raw;
  std::vector<std::string> warnings;

  /// out/{raw/, tables/, report.json}
  void write(const std::string& dir, const ExperimentConfig& cfg) const;
  /// report.json content; the generated_at field is the only non-deterministic entry.
  nlohmann::json to_json(const ExperimentConfig& cfg, bool with_timestamp = true) const;
};

std::string config_hash(const ExperimentConfig& cfg);

/// Smallest step count n >= T / dt_max such that every time in `marks` is a step time.
int aligned_steps(double T, double dt_max, const std::vector<double>& marks);

// ---------------------------------------------------------------------------
// Studies

struct OperatorOrderResult {
  Table table;
  SlopeFit first, second;
};
/// Max-node errors of d_h sin and Lap_h sin against cos and -sin.
OperatorOrderResult operator_order_study(int p, const std::vector<int>& Ls);

struct ConsistencyResult {
  Table table;
  SlopeFit l2, h1;
};
/// ||I_h rho_bar - rho_bar_h|| at time t against the fine reference.
ConsistencyResult mfl_consistency_study(const ExperimentConfig& cfg, const std::vector<int>& Ls, double t);

struct QuadratureResult {
  Table table;
};
QuadratureResult quadrature_study(const std::vector<int>& Ls);

struct RateResult {
  Table table;
  SlopeFit fit;
};
/// Median over replicas of the truncated H^{-d/2-2} distance between mu_t and rho_bar_t.
RateResult meanfield_rate_study(const ExperimentConfig& cfg, const std::vector<int>& Ns, int replicas,
                                int M_cut, double t, int threads);

struct DepositConsistencyResult {
  Table table;
  SlopeFit fit;
  double max_reproduction_error = 0.0;
};
/// |mean Y^2 - mean X^2| for X = particle, Y = deposited tested fluctuation, common particles.
DepositConsistencyResult deposit_consistency_study(int p, const std::vector<int>& Ls, int N, int replicas,
                                                   std::uint64_t seed, int threads);
/// max |sum_x Lambda_x(y) q(x) - q(y)| over random y and monomials q of degree <= p.
double deposit_reproduction_error(int d, int p, int n_points, std::uint64_t seed);

struct LawComparisonResult {
  SampleSet particles_a, particles_b, dk, dk_sigma2;
  WeakDistanceEstimate d_particle_dk, d_particle_sigma2, d_particle_particle, d_particle_sigma2_self;
  std::vector<double> stopped_fraction;
  StudyReport report;
};
LawComparisonResult run_law_comparison(const ExperimentConfig& cfg, int threads);

struct StoppingResult {
  Table table;
  std::vector<double> fractions;
  StudyReport report;
};
/// mode: "normal", "zero-noise" (rho0_h = rho_bar_h, no noise) or "hostile" (gate-violating data).
StoppingResult run_stopping_stats(const ExperimentConfig& cfg, const std::vector<int>& Ns, int threads,
                                  const std::string& mode = "normal");

StudyReport run_convergence_study(const std::string& kind, const ExperimentConfig& cfg, int threads);

// ---------------------------------------------------------------------------
// Single runs

StudyReport simulate_particles(const ExperimentConfig& cfg, bool write_positions);
StudyReport simulate_dk(const ExperimentConfig& cfg);
StudyReport simulate_mfl(const ExperimentConfig& cfg);
StudyReport simulate_deposit(const ExperimentConfig& cfg);

struct SelftestItem {
  std::string name;
  bool ok;
  std::string detail;
};
std::vector<SelftestItem> run_selftest();

}  // namespace dklab
