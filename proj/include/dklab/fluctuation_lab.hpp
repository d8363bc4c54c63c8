#pragma once

// Initial data by Lagrange deposit, the stopping-time monitor, tested fluctuations
// and the d_{-j} weak-distance estimator between sampled laws.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dklab/grid.hpp"
#include "dklab/particles.hpp"

namespace dklab {

/// Lagrange weights of total degree p on the lattice cone {j >= 0, |j|_1 <= p}
/// anchored at the lower-left node of the cell containing a point.
class LagrangeDepositScheme {
 public:
  LagrangeDepositScheme(int d, int p);

  int dim() const { return d_; }
  int order() const { return p_; }
  const std::vector<std::vector<int>>& points() const { return points_; }
  /// Weights for local cell coordinates xi in [0, 1)^d (units of h).
  std::vector<double> weights(std::span<const double> xi) const;
  /// Adds amount * Lambda_x(y) to field[x] for every node x of the cone at y.
  void deposit(GridField& field, std::span<const double> y, double amount) const;

 private:
  int d_, p_;
  std::vector<std::vector<int>> points_;
  std::vector<double> inv_vt_;  // inverse of the transposed Vandermonde matrix, row-major
};

/// h^{-d} Lambda * mu_0 per species.
SpeciesFields deposit_particles(const ParticleEnsemble& ens, const PeriodicGrid& grid,
                                const LagrangeDepositScheme& scheme);
/// h^{-d} Lambda * f by 8-point Gauss-Legendre quadrature per axis on every cell.
GridField deposit_density(const SmoothFunction& f, const PeriodicGrid& grid,
                          const LagrangeDepositScheme& scheme);

struct DepositResult {
  SpeciesFields rho;
  std::vector<double> mass;
  std::vector<double> clamped;
  std::vector<std::string> warnings;
};

/// rho0_h = h^{-d}(Lambda * mu_0) - h^{-d}(Lambda * rho_bar0) + I_h rho_bar0. Negative nodes are
/// clamped to zero and the species mass restored by rescaling, with a warning.
DepositResult deposit_initial_data(const ParticleEnsemble& ens, const std::vector<SmoothFunction>& rho_bar0,
                                   const PeriodicGrid& grid, int p, bool clamp = true);

// ---------------------------------------------------------------------------

class StoppingMonitor {
 public:
  enum class Status { armed, triggered, zeroed, finished };

  /// eps, delta in (0, delta0 / 4); l = floor(d / 2) + 1.
  StoppingMonitor(double N, int d, double eps, double delta);
  static StoppingMonitor with_defaults(double N, int d, double delta0);

  double linf_threshold() const;
  double sobolev_threshold() const;
  double initial_linf_threshold() const;
  double initial_sobolev_threshold() const;
  int l() const { return l_; }
  double eps() const { return eps_; }
  double delta() const { return delta_; }

  void initialise(const SpeciesFields& fluct0);
  void observe(double t, const SpeciesFields& fluct);
  void finish(double T);

  Status status() const { return status_; }
  double stopping_time() const { return stop_; }
  std::string trigger_name() const { return trigger_; }

  struct Record {
    double t, linf, neg_sobolev;
  };
  const std::vector<Record>& history() const { return history_; }

 private:
  double N_;
  int d_, l_;
  double eps_, delta_;
  Status status_ = Status::armed;
  double stop_ = 0.0;
  std::string trigger_ = "none";
  std::vector<Record> history_;
};

// ---------------------------------------------------------------------------

/// N^{1/2} sum_a (phi_a, rho_a - rho_bar_a)_h
double tested_fluctuation_grid(const SpeciesFields& phi, const SpeciesFields& rho,
                               const SpeciesFields& rho_bar, double N);
/// N^{1/2} sum_a (N^{-1} sum_i phi_a(X_ai) - (I_h phi_a, rho_bar_a)_h) with rho_bar on a fine grid.
double tested_fluctuation_particles(const ParticleEnsemble& ens, const std::vector<SmoothFunction>& phi,
                                    const SpeciesFields& rho_bar_fine);

/// R samples of an R^K-valued random variable, row-major.
struct SampleSet {
  int K = 0;
  std::vector<double> data;

  std::size_t size() const { return K == 0 ? 0 : data.size() / static_cast<std::size_t>(K); }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * K, static_cast<std::size_t>(K)}; }
  void push(std::span<const double> z) { data.insert(data.end(), z.begin(), z.end()); }
};

void write_samples_csv(std::ostream& os, const SampleSet& s);

struct WeakDistanceConfig {
  int j = 1;
  int n_features = 512;
  double feature_scale = 1.0;
  std::vector<double> ridge_frequencies = {0.25, 0.5, 1.0, 2.0, 4.0};
  int n_bootstrap = 200;
  std::uint64_t dict_seed = 20240601;
};

struct WeakDistanceEstimate {
  double value = 0.0;
  double se = 0.0;
  int j = 0;
  std::uint64_t dict_seed = 0;
  std::size_t n_x = 0, n_y = 0, dictionary_size = 0;

  nlohmann::json to_json() const;
};

/// max over a finite dictionary of |mean psi(X) - mean psi(Y)| where every psi has
/// sup |D^q psi| <= 1 for q <= j: random features cos(w.z + b) / max(1, |w|^j) and
/// coordinate ridges cos(a z_k + b) / max(1, a^j), b in {0, pi/2}. SE by bootstrap.
WeakDistanceEstimate estimate_weak_distance(const SampleSet& X, const SampleSet& Y,
                                            const WeakDistanceConfig& cfg);

/// Mean Euclidean cost of the coupling that pairs rows in lexicographic order; an upper
/// bound on the 1-Wasserstein distance. Requires equal sample counts.
double coupling_cost(const SampleSet& X, const SampleSet& Y);

}  // namespace dklab
