#pragma once

// Deterministic h-MFL solver, dense-in-time trajectories and the fine-grid
// surrogate for the continuous mean-field PDE.

#include <functional>
#include <vector>

#include "dklab/grid.hpp"
#include "dklab/potentials.hpp"

namespace dklab {

struct MeanFieldModel {
  PotentialMatrix potentials;
  std::vector<double> sigma;
  int order = 1;

  int species_count() const { return static_cast<int>(sigma.size()); }
  double sigma_max() const;
};

/// Right-hand side sigma_a Lap_h rho_a + div_h(rho_a sum_b I_h[grad V_ab] *_h rho_b).
class HmflOperator {
 public:
  HmflOperator(const PeriodicGrid& grid, const MeanFieldModel& model);

  const PeriodicGrid& grid() const { return grid_; }
  const MeanFieldModel& model() const { return model_; }
  const DiscreteOperatorSet& ops() const { return ops_; }
  const InteractionKernels& kernels() const { return kernels_; }

  SpeciesFields rhs(const SpeciesFields& rho) const;
  VectorField drift(const SpeciesFields& rho, int a) const;
  /// Largest |symbol| of the one-axis second difference.
  double laplacian_spectral_radius() const;
  double euler_stability_bound() const;
  double rk4_stability_bound() const;

 private:
  PeriodicGrid grid_;
  MeanFieldModel model_;
  DiscreteOperatorSet ops_;
  InteractionKernels kernels_;
};

double species_mass(const GridField& rho);

/// Piecewise cubic Hermite in time through stored (t, value, d/dt value) triples.
class Trajectory {
 public:
  void push(double t, SpeciesFields value, SpeciesFields derivative);
  std::size_t size() const { return times_.size(); }
  bool empty() const { return times_.empty(); }
  double start() const { return times_.front(); }
  double end() const { return times_.back(); }
  const std::vector<double>& times() const { return times_; }
  const SpeciesFields& state(std::size_t i) const { return values_[i]; }
  const SpeciesFields& derivative(std::size_t i) const { return derivs_[i]; }
  /// Throws std::out_of_range outside [start, end] (with a small tolerance).
  SpeciesFields at(double t) const;

 private:
  std::vector<double> times_;
  std::vector<SpeciesFields> values_;
  std::vector<SpeciesFields> derivs_;
};

struct IntegrateOptions {
  double dt = 0.0;
  /// Keep every k-th step (the final step is always kept).
  int store_every = 1;
  bool allow_unstable = false;
};

struct MeanFieldState {
  SpeciesFields rho;
  double t = 0.0;
  double dt = 0.0;
  std::string method = "rk4";
  double min_value = 0.0;
  double max_value = 0.0;
};

SpeciesFields rk4_step(const std::function<SpeciesFields(double, const SpeciesFields&)>& f,
                       double t, const SpeciesFields& y, double dt);

/// Classical RK4 from t = 0 to T. Throws NumericalError("stability") when dt exceeds
/// the linear stability bound unless allow_unstable, and NumericalError("nan") on breakdown.
Trajectory integrate_hmfl(const HmflOperator& op, const SpeciesFields& rho0, double T,
                          const IntegrateOptions& opt, MeanFieldState* final_state = nullptr);

/// Number of steps and number of stored steps so that at most max_snapshots are kept.
int store_stride(double T, double dt, int max_snapshots);

struct FineReference {
  PeriodicGrid grid;
  MeanFieldModel model;
  Trajectory trajectory;

  /// Restriction of the fine solution at time t to the nodes of a coarser grid.
  SpeciesFields at_coarse(double t, const PeriodicGrid& coarse) const;
  SpeciesFields at(double t) const { return trajectory.at(t); }
};

GridField restrict_to(const GridField& fine, const PeriodicGrid& coarse);

FineReference fine_reference(const MeanFieldModel& model, const std::vector<SmoothFunction>& rho0,
                             int d, int L_fine, double T, double dt, int max_snapshots = 4000);

}  // namespace dklab
