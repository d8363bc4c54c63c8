#include "dklab/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dklab/error.hpp"

namespace dklab {

double MeanFieldModel::sigma_max() const {
  double s = 0.0;
  for (double v : sigma) s = std::max(s, v);
  return s;
}

HmflOperator::HmflOperator(const PeriodicGrid& grid, const MeanFieldModel& model)
    : grid_(grid), model_(model), ops_(grid, model.order), kernels_(model.potentials, grid) {
  if (model.species_count() != model.potentials.species_count()) {
    throw ConfigError("sigma must have one entry per species");
  }
}

VectorField HmflOperator::drift(const SpeciesFields& rho, int a) const {
  return mean_field_drift_discrete(kernels_, rho, a);
}

SpeciesFields HmflOperator::rhs(const SpeciesFields& rho) const {
  SpeciesFields out;
  out.reserve(rho.size());
  const bool interacting = !model_.potentials.is_zero();
  for (int a = 0; a < static_cast<int>(rho.size()); ++a) {
    const auto& r = rho[static_cast<std::size_t>(a)];
    GridField f = ops_.laplacian(r);
    f *= model_.sigma[static_cast<std::size_t>(a)];
    if (interacting) {
      VectorField U = drift(rho, a);
      for (auto& c : U) c = hadamard(r, c);
      f += ops_.divergence(U);
    }
    f.species = r.species;
    out.push_back(std::move(f));
  }
  return out;
}

double HmflOperator::laplacian_spectral_radius() const {
  double m = 0.0;
  const int L = grid_.points_per_axis();
  for (int k = 0; k < L; ++k) m = std::max(m, std::abs(ops_.second_stencil().symbol(kTwoPi * k / L)));
  return m;
}

double HmflOperator::euler_stability_bound() const {
  return 2.0 / (model_.sigma_max() * grid_.dim() * laplacian_spectral_radius());
}

double HmflOperator::rk4_stability_bound() const {
  return 2.78 / (model_.sigma_max() * grid_.dim() * laplacian_spectral_radius());
}

double species_mass(const GridField& rho) { return quadrature_h(rho); }

// ---------------------------------------------------------------------------

void Trajectory::push(double t, SpeciesFields value, SpeciesFields derivative) {
  if (!times_.empty() && t <= times_.back()) throw std::invalid_argument("Trajectory: times must increase");
  times_.push_back(t);
  values_.push_back(std::move(value));
  derivs_.push_back(std::move(derivative));
}

SpeciesFields Trajectory::at(double t) const {
  if (times_.empty()) throw std::out_of_range("Trajectory: empty");
  const double tol = 1e-9 * std::max(1.0, std::abs(times_.back()));
  if (t < times_.front() - tol || t > times_.back() + tol) {
    throw std::out_of_range("Trajectory: time " + std::to_string(t) + " outside [" +
                            std::to_string(times_.front()) + ", " + std::to_string(times_.back()) + "]");
  }
  if (times_.size() == 1) return values_.front();
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  std::size_t i = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
  if (i >= times_.size() - 1) i = times_.size() - 2;
  const double t0 = times_[i], t1 = times_[i + 1];
  const double dt = t1 - t0;
  const double s = std::clamp((t - t0) / dt, 0.0, 1.0);
  if (s == 0.0) return values_[i];
  if (s == 1.0) return values_[i + 1];
  const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
  const double h10 = s * (1 - s) * (1 - s);
  const double h01 = s * s * (3 - 2 * s);
  const double h11 = s * s * (s - 1);
  SpeciesFields out = values_[i];
  for (std::size_t a = 0; a < out.size(); ++a) {
    auto& o = out[a];
    const auto& y0 = values_[i][a];
    const auto& y1 = values_[i + 1][a];
    const auto& d0 = derivs_[i][a];
    const auto& d1 = derivs_[i + 1][a];
    for (std::size_t k = 0; k < o.size(); ++k) {
      o[k] = h00 * y0[k] + h10 * dt * d0[k] + h01 * y1[k] + h11 * dt * d1[k];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

SpeciesFields axpy(const SpeciesFields& y, double a, const SpeciesFields& k) {
  SpeciesFields r = y;
  for (std::size_t s = 0; s < r.size(); ++s) r[s].axpy(a, k[s]);
  return r;
}

void check_finite(const SpeciesFields& y, double t) {
  for (const auto& f : y) {
    if (!f.all_finite()) throw NumericalError("nan", "non-finite value at t = " + std::to_string(t));
  }
}

}  // namespace

SpeciesFields rk4_step(const std::function<SpeciesFields(double, const SpeciesFields&)>& f,
                       double t, const SpeciesFields& y, double dt) {
  const auto k1 = f(t, y);
  const auto k2 = f(t + 0.5 * dt, axpy(y, 0.5 * dt, k1));
  const auto k3 = f(t + 0.5 * dt, axpy(y, 0.5 * dt, k2));
  const auto k4 = f(t + dt, axpy(y, dt, k3));
  SpeciesFields r = y;
  for (std::size_t s = 0; s < r.size(); ++s) {
    r[s].axpy(dt / 6.0, k1[s]).axpy(dt / 3.0, k2[s]).axpy(dt / 3.0, k3[s]).axpy(dt / 6.0, k4[s]);
  }
  return r;
}

int store_stride(double T, double dt, int max_snapshots) {
  const int steps = std::max(1, static_cast<int>(std::ceil(T / dt - 1e-9)));
  return std::max(1, (steps + max_snapshots - 1) / std::max(1, max_snapshots));
}

Trajectory integrate_hmfl(const HmflOperator& op, const SpeciesFields& rho0, double T,
                          const IntegrateOptions& opt, MeanFieldState* final_state) {
  if (!(opt.dt > 0.0)) throw ConfigError("integrate_hmfl: dt must be positive");
  if (T < 0.0) throw ConfigError("integrate_hmfl: T must be >= 0");
  if (opt.dt > op.rk4_stability_bound() && !opt.allow_unstable) {
    throw NumericalError("stability", "dt = " + std::to_string(opt.dt) + " exceeds the RK4 bound " +
                                          std::to_string(op.rk4_stability_bound()));
  }
  const int steps = T == 0.0 ? 0 : std::max(1, static_cast<int>(std::ceil(T / opt.dt - 1e-9)));
  const double dt = steps == 0 ? opt.dt : T / steps;
  auto f = [&op](double, const SpeciesFields& y) { return op.rhs(y); };
  Trajectory traj;
  SpeciesFields y = rho0;
  double lo = 1e300, hi = -1e300;
  auto track = [&](const SpeciesFields& s) {
    for (const auto& g : s) {
      lo = std::min(lo, g.min());
      hi = std::max(hi, g.max());
    }
  };
  track(y);
  traj.push(0.0, y, op.rhs(y));
  for (int n = 0; n < steps; ++n) {
    const double t = n * dt;
    y = rk4_step(f, t, y, dt);
    check_finite(y, t + dt);
    track(y);
    if ((n + 1) % std::max(1, opt.store_every) == 0 || n + 1 == steps) {
      traj.push((n + 1) * dt, y, op.rhs(y));
    }
  }
  if (final_state) {
    final_state->rho = y;
    final_state->t = steps * dt;
    final_state->dt = dt;
    final_state->min_value = lo;
    final_state->max_value = hi;
  }
  return traj;
}

// ---------------------------------------------------------------------------

GridField restrict_to(const GridField& fine, const PeriodicGrid& coarse) {
  const auto& g = fine.grid();
  const int Lf = g.points_per_axis(), Lc = coarse.points_per_axis();
  if (g.dim() != coarse.dim() || Lf % Lc != 0) {
    throw GridMismatch("restrict_to: fine L must be a multiple of coarse L");
  }
  const int r = Lf / Lc;
  GridField out(coarse);
  out.species = fine.species;
  std::vector<int> idx(static_cast<std::size_t>(g.dim()));
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    coarse.unravel(i, idx);
    for (int& k : idx) k *= r;
    out[i] = fine[g.ravel(idx)];
  }
  return out;
}

SpeciesFields FineReference::at_coarse(double t, const PeriodicGrid& coarse) const {
  SpeciesFields out;
  for (const auto& f : trajectory.at(t)) out.push_back(restrict_to(f, coarse));
  return out;
}

FineReference fine_reference(const MeanFieldModel& model, const std::vector<SmoothFunction>& rho0,
                             int d, int L_fine, double T, double dt, int max_snapshots) {
  const PeriodicGrid g(d, L_fine);
  HmflOperator op(g, model);
  SpeciesFields init;
  for (std::size_t a = 0; a < rho0.size(); ++a) {
    init.push_back(interpolate_Ih(rho0[a], g));
    init.back().species = static_cast<int>(a);
  }
  IntegrateOptions opt;
  opt.dt = dt;
  opt.store_every = store_stride(T, dt, max_snapshots);
  return FineReference{g, model, integrate_hmfl(op, init, T, opt)};
}

}  // namespace dklab
