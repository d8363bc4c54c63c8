#pragma once

// Interacting particle system, the mean-field-driven auxiliary system and
// empirical-measure functionals.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "dklab/grid.hpp"
#include "dklab/meanfield.hpp"
#include "dklab/potentials.hpp"

namespace dklab {

struct ParticleEnsemble {
  int d = 1;
  int n_species = 1;
  int N = 0;
  /// Species-major, then particle, then axis.
  std::vector<double> x;
  std::vector<double> sigma;
  double t = 0.0;
  std::uint32_t step = 0;
  std::uint64_t seed = 0;
  std::uint32_t replica = 0;

  std::span<double> pos(int a, int i) {
    return {x.data() + (static_cast<std::size_t>(a) * N + i) * d, static_cast<std::size_t>(d)};
  }
  std::span<const double> pos(int a, int i) const {
    return {x.data() + (static_cast<std::size_t>(a) * N + i) * d, static_cast<std::size_t>(d)};
  }
  std::span<const double> species_positions(int a) const {
    return {x.data() + static_cast<std::size_t>(a) * N * d, static_cast<std::size_t>(N) * d};
  }
};

/// Density of the form (2 pi)^{-d} (1 + sum_k a_k cos(k . x)) with an exact sup bound.
struct CosineDensity {
  int d = 1;
  std::vector<std::vector<int>> modes;
  std::vector<double> amps;

  double operator()(std::span<const double> x) const;
  double sup_bound() const;
  double min_bound() const;
};

/// N i.i.d. rejection samples per species against the given sup bounds. Throws
/// ConfigError when a density is negative or exceeds its bound at a proposal.
ParticleEnsemble sample_initial_iid(int d, int N, const std::vector<double>& sigma,
                                    const std::vector<SmoothFunction>& rho0,
                                    const std::vector<double>& sup_bounds, std::uint64_t seed,
                                    std::uint32_t replica = 0);

enum class DriftMethod { automatic, direct, binned, spectral };

/// out[(a N + i) d + l] = -sum_b N^{-1} sum_j d_l V_ab(X_ai - X_bj).
void interaction_drift(const ParticleEnsemble& ens, const PotentialMatrix& pot, DriftMethod method,
                       std::vector<double>& out, bool parallel = false);

/// Euler-Maruyama step of the interacting system. Noise keyed by
/// (seed, replica, species, particle, step).
void step_interacting(ParticleEnsemble& ens, const PotentialMatrix& pot, double dt,
                      DriftMethod method = DriftMethod::automatic);

/// Mean-field force (grad V * rho_bar)(x, t) from a fine-grid trajectory.
class MeanFieldForce {
 public:
  MeanFieldForce(const PotentialMatrix& pot, const FineReference& ref);
  /// Per-particle drift -sum_b (grad V_ab * rho_bar_b)(X_ai, t) into out.
  void drift(const ParticleEnsemble& ens, double t, std::vector<double>& out) const;
  double end_time() const { return ref_->trajectory.end(); }

 private:
  PotentialMatrix pot_;
  const FineReference* ref_;
  InteractionKernels kernels_;
};

/// Euler-Maruyama step of the auxiliary system. Shares Brownian increments with
/// step_interacting for equal (seed, replica, step).
void step_auxiliary(ParticleEnsemble& ens, const MeanFieldForce& force, double dt);

/// sum_a N^{-1} sum_i phi_a(X_ai)
double test_empirical(const ParticleEnsemble& ens, const std::vector<SmoothFunction>& phi);

/// Truncated H^s distance between the empirical measures and rho_bar, summed over species:
/// (sum_{|xi|_inf <= M} (1+|xi|^2)^s |N^{-1} sum_i conj(vartheta_xi(X_i)) - (rho_bar, vartheta_xi)_h|^2)^{1/2}.
double empirical_neg_sobolev(const ParticleEnsemble& ens, const SpeciesFields& rho_bar, double s,
                             int M_cut);

/// CSV with columns species,index,x1..xd.
void write_particles_csv(std::ostream& os, const ParticleEnsemble& ens);
/// JSON header line {d, n_species, N, t, step} then little-endian float64 positions.
void write_particles_snapshot(std::ostream& os, const ParticleEnsemble& ens);

}  // namespace dklab
