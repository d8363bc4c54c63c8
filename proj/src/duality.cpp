#include "dklab/duality.hpp"

#include <algorithm>
#include <cmath>

#include "dklab/error.hpp"

namespace dklab {

SpeciesFields BackwardTestFamily::at(int k, double t) const {
  const auto& s = slots_[static_cast<std::size_t>(k)];
  if (t >= s.T) return s.final_datum;
  return paths_[static_cast<std::size_t>(k)].at(t);
}

void BackwardTestFamily::add(TestSlot slot, Trajectory path) {
  slots_.push_back(std::move(slot));
  paths_.push_back(std::move(path));
}

BackwardOperator::BackwardOperator(const HmflOperator& op, const Trajectory& rho_bar)
    : op_(&op), rho_bar_(&rho_bar) {
  const auto& pot = op.model().potentials;
  const int n = pot.species_count(), d = op.grid().dim();
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int l = 0; l < d; ++l) {
        adjoint_.emplace_back(interpolate_Ih(
            [&](std::span<const double> x) {
              double y[8];
              for (int k = 0; k < d; ++k) y[k] = -x[k];
              return -pot.dV(a, b, l, {y, static_cast<std::size_t>(d)});
            },
            op.grid()));
      }
}

SpeciesFields BackwardOperator::apply(const SpeciesFields& phi, double t) const {
  return apply(phi, rho_bar_->at(t));
}

SpeciesFields BackwardOperator::apply(const SpeciesFields& phi, const SpeciesFields& rho_bar) const {
  const auto& ops = op_->ops();
  const auto& model = op_->model();
  const int n = static_cast<int>(phi.size()), d = op_->grid().dim();
  const bool interacting = !model.potentials.is_zero();
  std::vector<VectorField> grads;
  for (const auto& p : phi) grads.push_back(ops.gradient(p));
  SpeciesFields out;
  for (int b = 0; b < n; ++b) {
    GridField g = ops.laplacian(phi[static_cast<std::size_t>(b)]);
    g *= model.sigma[static_cast<std::size_t>(b)];
    if (interacting) {
      const VectorField U = op_->drift(rho_bar, b);
      for (int l = 0; l < d; ++l) g -= hadamard(U[static_cast<std::size_t>(l)], grads[static_cast<std::size_t>(b)][static_cast<std::size_t>(l)]);
      for (int a = 0; a < n; ++a) {
        if (model.potentials.is_zero(a, b)) continue;
        for (int l = 0; l < d; ++l) {
          const auto& K = adjoint_[static_cast<std::size_t>((a * n + b) * d + l)];
          g += K.apply(hadamard(rho_bar[static_cast<std::size_t>(a)], grads[static_cast<std::size_t>(a)][static_cast<std::size_t>(l)]));
        }
      }
    }
    g.species = phi[static_cast<std::size_t>(b)].species;
    out.push_back(std::move(g));
  }
  return out;
}

namespace {

BackwardTestFamily evolve_backward(const HmflOperator& op, const std::vector<TestSlot>& slots,
                                   const Trajectory& rho_bar, double dt) {
  if (!(dt > 0.0)) throw ConfigError("backward evolution: dt must be positive");
  if (dt > op.rk4_stability_bound()) {
    throw NumericalError("stability", "backward dt exceeds the RK4 bound " + std::to_string(op.rk4_stability_bound()));
  }
  const BackwardOperator G(op, rho_bar);
  BackwardTestFamily fam;
  for (const auto& slot : slots) {
    if (slot.T < 0.0) throw ConfigError("test slot with negative final time");
    if (slot.T > rho_bar.end() + 1e-9 || rho_bar.start() > 1e-12) {
      throw std::out_of_range("backward evolution: mean-field trajectory does not cover [0, T_k]");
    }
    for (const auto& f : slot.final_datum) require_same_grid(f.grid(), op.grid(), "evolve_test");
    const int steps = slot.T == 0.0 ? 0 : std::max(1, static_cast<int>(std::ceil(slot.T / dt - 1e-9)));
    const double h = steps == 0 ? 0.0 : slot.T / steps;
    std::vector<double> ts;
    std::vector<SpeciesFields> vals, ders;
    auto rhs = [&](double s, const SpeciesFields& y) { return G.apply(y, slot.T - s); };
    SpeciesFields y = slot.final_datum;
    auto push = [&](double t, const SpeciesFields& v) {
      SpeciesFields dv = G.apply(v, t);
      for (auto& f : dv) f *= -1.0;
      ts.push_back(t);
      vals.push_back(v);
      ders.push_back(std::move(dv));
    };
    push(slot.T, y);
    for (int n = 0; n < steps; ++n) {
      y = rk4_step(rhs, n * h, y, h);
      for (const auto& f : y)
        if (!f.all_finite()) throw NumericalError("nan", "backward test function blew up");
      push(n + 1 == steps ? 0.0 : slot.T - (n + 1) * h, y);
    }
    Trajectory path;
    for (std::size_t i = ts.size(); i-- > 0;) path.push(ts[i], std::move(vals[i]), std::move(ders[i]));
    fam.add(slot, std::move(path));
  }
  return fam;
}

}  // namespace

BackwardTestFamily evolve_test_discrete(const HmflOperator& op, const std::vector<TestSlot>& slots,
                                        const Trajectory& rho_bar, double dt) {
  return evolve_backward(op, slots, rho_bar, dt);
}

BackwardTestFamily evolve_test_continuous(const HmflOperator& fine_op, const std::vector<TestSlot>& slots,
                                          const Trajectory& rho_bar_fine, double dt) {
  return evolve_backward(fine_op, slots, rho_bar_fine, dt);
}

SpeciesFields linearized_forward_rhs(const HmflOperator& op, const SpeciesFields& rho_bar,
                                     const SpeciesFields& eta) {
  const auto& ops = op.ops();
  const auto& model = op.model();
  const int n = static_cast<int>(eta.size());
  SpeciesFields out;
  for (int a = 0; a < n; ++a) {
    GridField f = ops.laplacian(eta[static_cast<std::size_t>(a)]);
    f *= model.sigma[static_cast<std::size_t>(a)];
    if (!model.potentials.is_zero()) {
      VectorField U = op.drift(rho_bar, a);
      VectorField W = op.drift(eta, a);
      VectorField flux;
      for (std::size_t l = 0; l < U.size(); ++l) {
        flux.push_back(hadamard(eta[static_cast<std::size_t>(a)], U[l]) +
                       hadamard(rho_bar[static_cast<std::size_t>(a)], W[l]));
      }
      f += ops.divergence(flux);
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<SpeciesFields> integrate_linearized(const HmflOperator& op, const SpeciesFields& eta0,
                                                const Trajectory& rho_bar, double T, double dt) {
  if (!(dt > 0.0)) throw ConfigError("integrate_linearized: dt must be positive");
  const int steps = std::max(0, static_cast<int>(std::llround(T / dt)));
  auto f = [&](double t, const SpeciesFields& y) { return linearized_forward_rhs(op, rho_bar.at(t), y); };
  std::vector<SpeciesFields> out{eta0};
  SpeciesFields y = eta0;
  for (int n = 0; n < steps; ++n) {
    y = rk4_step(f, n * dt, y, dt);
    out.push_back(y);
  }
  return out;
}

// ---------------------------------------------------------------------------

PolynomialMoment PolynomialMoment::monomial(int K, const Exponent& e, double c) {
  PolynomialMoment p(K);
  p.add_term(e, c);
  return p;
}

int PolynomialMoment::degree() const {
  int deg = 0;
  for (const auto& [e, c] : terms_) {
    int s = 0;
    for (int v : e) s += v;
    if (c != 0.0) deg = std::max(deg, s);
  }
  return deg;
}

double PolynomialMoment::operator()(std::span<const double> z) const {
  double s = 0.0;
  for (const auto& [e, c] : terms_) {
    double m = c;
    for (int k = 0; k < K_; ++k) m *= std::pow(z[k], e[static_cast<std::size_t>(k)]);
    s += m;
  }
  return s;
}

void PolynomialMoment::add_term(const Exponent& e, double c) {
  if (static_cast<int>(e.size()) != K_) throw std::invalid_argument("PolynomialMoment: exponent length != K");
  terms_[e] += c;
}

PolynomialMoment& PolynomialMoment::operator+=(const PolynomialMoment& o) {
  for (const auto& [e, c] : o.terms_) add_term(e, c);
  return *this;
}

PolynomialMoment& PolynomialMoment::operator*=(double a) {
  for (auto& [e, c] : terms_) c *= a;
  return *this;
}

PolynomialMoment PolynomialMoment::derivative(int k) const {
  PolynomialMoment p(K_);
  for (const auto& [e, c] : terms_) {
    if (e[static_cast<std::size_t>(k)] == 0) continue;
    Exponent f = e;
    --f[static_cast<std::size_t>(k)];
    p.add_term(f, c * e[static_cast<std::size_t>(k)]);
  }
  return p;
}

PolynomialMoment PolynomialMoment::second_order(const std::vector<double>& c) const {
  PolynomialMoment p(K_);
  for (int k = 0; k < K_; ++k) {
    const auto dk = derivative(k);
    for (int j = 0; j < K_; ++j) {
      const double ckj = c[static_cast<std::size_t>(k * K_ + j)];
      if (ckj == 0.0) continue;
      auto dkj = dk.derivative(j);
      dkj *= ckj;
      p += dkj;
    }
  }
  return p;
}

PolynomialMoment operator+(PolynomialMoment a, const PolynomialMoment& b) { return a += b; }
PolynomialMoment operator*(double s, PolynomialMoment a) { return a *= s; }

PolynomialMoment MomentPath::at(double t) const {
  if (times.empty()) throw std::out_of_range("MomentPath: empty");
  if (t <= times.front()) return psi.front();
  if (t >= times.back()) return psi.back();
  auto it = std::upper_bound(times.begin(), times.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - times.begin()) - 1;
  const double s = (t - times[i]) / (times[i + 1] - times[i]);
  return (1.0 - s) * psi[i] + s * psi[i + 1];
}

MomentPath evolve_moment_polynomial(const PolynomialMoment& psi, const CoefficientPath& c, double T,
                                    double dt) {
  if (!(dt > 0.0)) throw ConfigError("evolve_moment_polynomial: dt must be positive");
  const int steps = T == 0.0 ? 0 : std::max(1, static_cast<int>(std::ceil(T / dt - 1e-9)));
  const double h = steps == 0 ? 0.0 : T / steps;
  auto f = [&](double s, const PolynomialMoment& y) { return y.second_order(c(T - s)); };
  std::vector<double> ts{T};
  std::vector<PolynomialMoment> ps{psi};
  PolynomialMoment y = psi;
  for (int n = 0; n < steps; ++n) {
    const double s = n * h;
    const auto k1 = f(s, y);
    const auto k2 = f(s + 0.5 * h, y + (0.5 * h) * k1);
    const auto k3 = f(s + 0.5 * h, y + (0.5 * h) * k2);
    const auto k4 = f(s + h, y + h * k3);
    y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    ts.push_back(n + 1 == steps ? 0.0 : T - (n + 1) * h);
    ps.push_back(y);
  }
  MomentPath out;
  for (std::size_t i = ts.size(); i-- > 0;) {
    out.times.push_back(ts[i]);
    out.psi.push_back(ps[i]);
  }
  return out;
}

std::vector<double> moment_coefficients(const HmflOperator& op, const BackwardTestFamily& fam,
                                        const Trajectory& rho_bar, double t) {
  const int K = fam.size();
  std::vector<double> c(static_cast<std::size_t>(K * K), 0.0);
  const auto rb = rho_bar.at(t);
  std::vector<std::vector<VectorField>> grads(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    if (t > fam.final_time(k)) continue;
    for (const auto& f : fam.at(k, t)) grads[static_cast<std::size_t>(k)].push_back(op.ops().gradient(f));
  }
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < K; ++j) {
      if (t > std::min(fam.final_time(k), fam.final_time(j))) continue;
      double s = 0.0;
      for (std::size_t a = 0; a < rb.size(); ++a) {
        const auto& gk = grads[static_cast<std::size_t>(k)][a];
        const auto& gj = grads[static_cast<std::size_t>(j)][a];
        for (std::size_t l = 0; l < gk.size(); ++l) {
          s += op.model().sigma[a] * inner_product_h(hadamard(gk[l], gj[l]), rb[a]);
        }
      }
      c[static_cast<std::size_t>(k * K + j)] = s;
    }
  return c;
}

// ---------------------------------------------------------------------------

double SignedMeasure::integrate(const SmoothFunction& f) const {
  double s = 0.0;
  for (std::size_t i = 0; i < size(); ++i) s += weights[i] * f(point(i));
  return s;
}

std::vector<SignedMeasure> particle_fluctuation_measures(const ParticleEnsemble& ens,
                                                         const SpeciesFields& rho_bar) {
  std::vector<SignedMeasure> out;
  for (int a = 0; a < ens.n_species; ++a) {
    SignedMeasure m;
    m.d = ens.d;
    const auto xs = ens.species_positions(a);
    m.positions.assign(xs.begin(), xs.end());
    m.weights.assign(static_cast<std::size_t>(ens.N), 1.0 / ens.N);
    const auto& rb = rho_bar[static_cast<std::size_t>(a)];
    const auto& g = rb.grid();
    std::vector<double> y(static_cast<std::size_t>(g.dim()));
    for (std::size_t k = 0; k < g.size(); ++k) {
      g.point(k, y);
      m.positions.insert(m.positions.end(), y.begin(), y.end());
      m.weights.push_back(-g.cell_volume() * rb[k]);
    }
    out.push_back(std::move(m));
  }
  return out;
}

double q_tilde(const PotentialMatrix& pot, const PartialDerivative& dphi,
               const std::vector<SignedMeasure>& nu) {
  const int n = static_cast<int>(nu.size());
  const int d = pot.dim();
  double total = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      if (pot.is_zero(a, b)) continue;
      const auto& na = nu[static_cast<std::size_t>(a)];
      const auto& nb = nu[static_cast<std::size_t>(b)];
      const long M = static_cast<long>(na.size());
      double acc = 0.0;
#pragma omp parallel for reduction(+ : acc) schedule(static)
      for (long i = 0; i < M; ++i) {
        const auto xi = na.point(static_cast<std::size_t>(i));
        double z[8];
        double s = 0.0;
        for (int l = 0; l < d; ++l) {
          double w = 0.0;
          for (std::size_t j = 0; j < nb.size(); ++j) {
            const auto yj = nb.point(j);
            for (int k = 0; k < d; ++k) z[k] = xi[k] - yj[k];
            w += nb.weights[j] * pot.dV(a, b, l, {z, static_cast<std::size_t>(d)});
          }
          s += dphi(a, l, xi) * w;
        }
        acc += na.weights[static_cast<std::size_t>(i)] * s;
      }
      total += acc;
    }
  return total;
}

double q_tilde_h(const HmflOperator& op, const SpeciesFields& phi, const SpeciesFields& eta) {
  const int n = static_cast<int>(phi.size());
  double s = 0.0;
  for (int a = 0; a < n; ++a) {
    const VectorField W = op.drift(eta, a);
    const VectorField gp = op.ops().gradient(phi[static_cast<std::size_t>(a)]);
    for (std::size_t l = 0; l < gp.size(); ++l) {
      s += inner_product_h(hadamard(gp[l], W[l]), eta[static_cast<std::size_t>(a)]);
    }
  }
  return s;
}

double split_q_tilde(int n_species, int d, const std::vector<SplitCoefficients>& tables,
                     const PartialDerivative& dphi, const FluctuationTester& tester) {
  double s = 0.0;
  for (int a = 0; a < n_species; ++a)
    for (int b = 0; b < n_species; ++b)
      for (int l = 0; l < d; ++l) {
        const auto& tab = tables[static_cast<std::size_t>((a * n_species + b) * d + l)];
        for (const auto& e : tab.entries()) {
          const double ty = tester(b, [&](std::span<const double> y) { return e.y_mode(y); });
          if (ty == 0.0) continue;
          const double tx = tester(a, [&](std::span<const double> x) { return dphi(a, l, x) * e.x_mode(x); });
          s += e.value * ty * tx;
        }
      }
  return s;
}

std::vector<SplitCoefficients> split_tables(const PotentialMatrix& pot, int M_cut) {
  std::vector<SplitCoefficients> out;
  const int n = pot.species_count(), d = pot.dim();
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int l = 0; l < d; ++l) out.push_back(compute_split_coefficients(pot, a, b, l, M_cut));
  return out;
}

}  // namespace dklab
