#pragma once

// Finite-difference Dean-Kawasaki system: explicit Euler-Maruyama with the
// conservative noise -sqrt(2 sigma / N) sum_l d_l^T (sqrt(rho^+) dW_l h^{-d/2}).

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "dklab/grid.hpp"
#include "dklab/meanfield.hpp"

namespace dklab {

class StoppingMonitor;

struct DKState {
  SpeciesFields rho;
  /// Particle-number parameter; infinity disables the noise.
  double N = std::numeric_limits<double>::infinity();
  double t = 0.0;
  std::uint32_t step = 0;
  std::uint64_t seed = 0;
  std::uint32_t replica = 0;

  bool noise_enabled() const { return std::isfinite(N); }
};

/// The conservative noise increment for one step, drawn from the counter stream
/// keyed by (seed, replica, species, step).
SpeciesFields noise_increment(const HmflOperator& op, const DKState& state, double dt);
/// Same with explicitly supplied increments dW[a][l][x] ~ N(0, dt).
SpeciesFields noise_increment(const HmflOperator& op, const DKState& state,
                              const std::vector<VectorField>& dW);
/// Gaussian increments for one step.
std::vector<VectorField> draw_brownian_increments(const HmflOperator& op, const DKState& state, double dt);

/// One explicit Euler-Maruyama step. Throws NumericalError("stability") above the Euler
/// bound unless allow_unstable, NumericalError("nan") on a non-finite state.
void step_dk(const HmflOperator& op, DKState& state, double dt, bool allow_unstable = false);

/// N^{-1} (grad_h phi1 . grad_h phi2, rho^+)_h summed over species.
double tested_quadratic_variation(const HmflOperator& op, const DKState& state,
                                  const SpeciesFields& phi1, const SpeciesFields& phi2);

struct DKPathOptions {
  double T = 0.0;
  double dt = 0.0;
  /// Record the full state every k steps (0: only the final state).
  int record_every = 0;
  /// Times at which the state is captured; each must be a multiple of dt.
  std::vector<double> snapshot_times;
  bool allow_unstable = false;
  /// Stop stepping once the monitor has fired.
  bool halt_on_stop = false;
};

struct DKPathResult {
  DKState final_state;
  std::vector<double> recorded_times;
  std::vector<SpeciesFields> recorded;
  std::vector<SpeciesFields> snapshots;
  double stopping_time = 0.0;
  std::string trigger = "none";
  /// rho at the stopping time, when the monitor fired before T.
  std::optional<SpeciesFields> stopped_state;
};

/// Runs one path. When a monitor is supplied it is initialised on rho0 - rho_bar(0)
/// and advanced after every step with rho - rho_bar(t) from the reference trajectory.
DKPathResult run_dk_path(const HmflOperator& op, const SpeciesFields& rho0, double N,
                         std::uint64_t seed, std::uint32_t replica, const DKPathOptions& opt,
                         StoppingMonitor* monitor = nullptr, const Trajectory* reference = nullptr);

}  // namespace dklab
