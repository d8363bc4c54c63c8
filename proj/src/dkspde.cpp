#include "dklab/dkspde.hpp"

#include <cmath>

#include "dklab/error.hpp"
#include "dklab/fluctuation_lab.hpp"
#include "dklab/rng.hpp"

namespace dklab {

std::vector<VectorField> draw_brownian_increments(const HmflOperator& op, const DKState& state, double dt) {
  const auto& g = op.grid();
  const double sd = std::sqrt(dt);
  std::vector<VectorField> dW;
  for (std::size_t a = 0; a < state.rho.size(); ++a) {
    RandomStream rng(state.seed, {state.replica, static_cast<std::uint32_t>(a), 0, state.step, RngPurpose::dk_noise});
    VectorField w(static_cast<std::size_t>(g.dim()), GridField(g));
    for (auto& c : w)
      for (double& v : c.values()) v = sd * rng.normal();
    dW.push_back(std::move(w));
  }
  return dW;
}

SpeciesFields noise_increment(const HmflOperator& op, const DKState& state,
                              const std::vector<VectorField>& dW) {
  const auto& g = op.grid();
  SpeciesFields out;
  const double hd2 = std::pow(g.h(), -0.5 * g.dim());
  for (std::size_t a = 0; a < state.rho.size(); ++a) {
    GridField inc(g);
    inc.species = state.rho[a].species;
    if (state.noise_enabled()) {
      const double amp = std::sqrt(2.0 * op.model().sigma[a] / state.N);
      GridField root(g);
      for (std::size_t k = 0; k < g.size(); ++k) root[k] = std::sqrt(std::max(0.0, state.rho[a][k])) * hd2;
      for (int l = 0; l < g.dim(); ++l) {
        inc.axpy(-amp, op.ops().partial_adjoint(hadamard(root, dW[a][static_cast<std::size_t>(l)]), l));
      }
    }
    out.push_back(std::move(inc));
  }
  return out;
}

SpeciesFields noise_increment(const HmflOperator& op, const DKState& state, double dt) {
  if (!(dt > 0.0)) throw ConfigError("noise_increment: dt must be positive");
  if (!state.noise_enabled()) return noise_increment(op, state, std::vector<VectorField>{});
  return noise_increment(op, state, draw_brownian_increments(op, state, dt));
}

void step_dk(const HmflOperator& op, DKState& state, double dt, bool allow_unstable) {
  if (!(dt > 0.0)) throw ConfigError("step_dk: dt must be positive");
  if (dt > op.euler_stability_bound() && !allow_unstable) {
    throw NumericalError("stability", "dt = " + std::to_string(dt) + " exceeds the Euler bound " +
                                          std::to_string(op.euler_stability_bound()));
  }
  SpeciesFields drift = op.rhs(state.rho);
  SpeciesFields noise = state.noise_enabled() ? noise_increment(op, state, dt) : SpeciesFields{};
  for (std::size_t a = 0; a < state.rho.size(); ++a) {
    state.rho[a].axpy(dt, drift[a]);
    if (!noise.empty()) state.rho[a] += noise[a];
    if (!state.rho[a].all_finite()) {
      throw NumericalError("nan", "non-finite density at step " + std::to_string(state.step + 1));
    }
  }
  state.t += dt;
  ++state.step;
}

double tested_quadratic_variation(const HmflOperator& op, const DKState& state,
                                  const SpeciesFields& phi1, const SpeciesFields& phi2) {
  double s = 0.0;
  for (std::size_t a = 0; a < state.rho.size(); ++a) {
    GridField pos = state.rho[a];
    for (double& v : pos.values()) v = std::max(0.0, v);
    const auto g1 = op.ops().gradient(phi1[a]);
    const auto g2 = op.ops().gradient(phi2[a]);
    for (std::size_t l = 0; l < g1.size(); ++l) s += inner_product_h(hadamard(g1[l], g2[l]), pos);
  }
  return state.noise_enabled() ? s / state.N : 0.0;
}

DKPathResult run_dk_path(const HmflOperator& op, const SpeciesFields& rho0, double N,
                         std::uint64_t seed, std::uint32_t replica, const DKPathOptions& opt,
                         StoppingMonitor* monitor, const Trajectory* reference) {
  if (!(opt.dt > 0.0)) throw ConfigError("dk.dt must be positive");
  if (monitor && !reference) throw ConfigError("run_dk_path: a monitor needs a reference trajectory");
  const int steps = std::max(0, static_cast<int>(std::llround(opt.T / opt.dt)));
  if (std::abs(steps * opt.dt - opt.T) > 1e-9 * std::max(1.0, opt.T)) {
    throw ConfigError("run_dk_path: T must be a multiple of dt");
  }
  std::vector<int> snap_steps;
  for (double ts : opt.snapshot_times) {
    const long k = std::llround(ts / opt.dt);
    if (std::abs(k * opt.dt - ts) > 1e-9 * std::max(1.0, ts) || k < 0 || k > steps) {
      throw ConfigError("run_dk_path: snapshot time " + std::to_string(ts) + " is not a step time in [0, T]");
    }
    snap_steps.push_back(static_cast<int>(k));
  }
  DKPathResult res;
  res.snapshots.resize(snap_steps.size());
  DKState st;
  st.rho = rho0;
  st.N = N;
  st.seed = seed;
  st.replica = replica;
  auto fluct = [&](double t) {
    SpeciesFields f = st.rho;
    const auto rb = reference->at(t);
    for (std::size_t a = 0; a < f.size(); ++a) f[a] -= rb[a];
    return f;
  };
  auto fired = [&] { return monitor && monitor->status() != StoppingMonitor::Status::armed; };
  if (monitor) monitor->initialise(fluct(0.0));
  if (fired()) res.stopped_state = st.rho;
  auto capture = [&](int k) {
    for (std::size_t s = 0; s < snap_steps.size(); ++s)
      if (snap_steps[s] == k) res.snapshots[s] = st.rho;
    if (opt.record_every > 0 && k % opt.record_every == 0) {
      res.recorded_times.push_back(st.t);
      res.recorded.push_back(st.rho);
    }
  };
  capture(0);
  for (int k = 1; k <= steps; ++k) {
    if (fired() && opt.halt_on_stop) break;
    step_dk(op, st, opt.dt, opt.allow_unstable);
    st.t = k * opt.dt;
    if (monitor && !fired()) {
      monitor->observe(st.t, fluct(st.t));
      if (fired()) res.stopped_state = st.rho;
    }
    capture(k);
  }
  if (monitor) {
    monitor->finish(st.t);
    res.stopping_time = monitor->stopping_time();
    res.trigger = monitor->trigger_name();
  } else {
    res.stopping_time = st.t;
  }
  res.final_state = std::move(st);
  return res;
}

}  // namespace dklab
