#pragma once

// Backward dual objects: test-function evolutions, the linearised forward flow they
// are dual to, polynomial generalised moments and the quadratic compensations.

#include <functional>
#include <map>
#include <span>
#include <vector>

#include "dklab/grid.hpp"
#include "dklab/meanfield.hpp"
#include "dklab/particles.hpp"
#include "dklab/potentials.hpp"

namespace dklab {

struct TestSlot {
  SpeciesFields final_datum;
  double T = 0.0;
};

class BackwardTestFamily {
 public:
  int size() const { return static_cast<int>(slots_.size()); }
  double final_time(int k) const { return slots_[static_cast<std::size_t>(k)].T; }
  const SpeciesFields& final_datum(int k) const { return slots_[static_cast<std::size_t>(k)].final_datum; }
  /// phi^t for slot k; the final datum for t >= T_k.
  SpeciesFields at(int k, double t) const;
  const Trajectory& trajectory(int k) const { return paths_[static_cast<std::size_t>(k)]; }

  void add(TestSlot slot, Trajectory path);

 private:
  std::vector<TestSlot> slots_;
  std::vector<Trajectory> paths_;
};

/// Backward operator G with -d_t phi = G(phi, t):
/// sigma Lap_h phi_b - U_b . grad_h phi_b + sum_a K_ab *_h (rho_bar_a grad_h phi_a),
/// where K_ab(z) = -I_h[grad V_ab](-z) is the adjoint kernel.
class BackwardOperator {
 public:
  BackwardOperator(const HmflOperator& op, const Trajectory& rho_bar);
  SpeciesFields apply(const SpeciesFields& phi, double t) const;
  SpeciesFields apply(const SpeciesFields& phi, const SpeciesFields& rho_bar) const;
  const HmflOperator& forward() const { return *op_; }
  const Trajectory& rho_bar() const { return *rho_bar_; }

 private:
  const HmflOperator* op_;
  const Trajectory* rho_bar_;
  std::vector<ConvolutionKernel> adjoint_;
};

/// RK4 in reversed time from each T_k down to 0, on the grid of op.
BackwardTestFamily evolve_test_discrete(const HmflOperator& op, const std::vector<TestSlot>& slots,
                                        const Trajectory& rho_bar, double dt);
/// The same dynamics on a fine surrogate grid.
BackwardTestFamily evolve_test_continuous(const HmflOperator& fine_op, const std::vector<TestSlot>& slots,
                                          const Trajectory& rho_bar_fine, double dt);

/// d_t eta_a = sigma_a Lap_h eta_a + div_h(eta_a U_a) + div_h(rho_bar_a sum_b I_h[grad V_ab] *_h eta_b)
SpeciesFields linearized_forward_rhs(const HmflOperator& op, const SpeciesFields& rho_bar,
                                     const SpeciesFields& eta);
/// RK4 solution at every step time n * dt, n = 0..T/dt.
std::vector<SpeciesFields> integrate_linearized(const HmflOperator& op, const SpeciesFields& eta0,
                                                const Trajectory& rho_bar, double T, double dt);

// ---------------------------------------------------------------------------

class PolynomialMoment {
 public:
  using Exponent = std::vector<int>;

  PolynomialMoment() = default;
  explicit PolynomialMoment(int K) : K_(K) {}
  static PolynomialMoment monomial(int K, const Exponent& e, double c = 1.0);

  int K() const { return K_; }
  const std::map<Exponent, double>& terms() const { return terms_; }
  int degree() const;
  double operator()(std::span<const double> z) const;

  void add_term(const Exponent& e, double c);
  PolynomialMoment& operator+=(const PolynomialMoment& o);
  PolynomialMoment& operator*=(double a);
  PolynomialMoment derivative(int k) const;
  /// sum_{k, k'} c[k K + k'] d_k d_k' psi
  PolynomialMoment second_order(const std::vector<double>& c) const;

 private:
  int K_ = 1;
  std::map<Exponent, double> terms_;
};

PolynomialMoment operator+(PolynomialMoment a, const PolynomialMoment& b);
PolynomialMoment operator*(double s, PolynomialMoment a);

/// Coefficient path c(t), a row-major K x K matrix.
using CoefficientPath = std::function<std::vector<double>(double)>;

struct MomentPath {
  std::vector<double> times;
  std::vector<PolynomialMoment> psi;
  /// Piecewise-linear interpolation of coefficients in time.
  PolynomialMoment at(double t) const;
};

/// RK4 for -d_t psi = sum c_kk'(t) d_k d_k' psi from psi^T = psi back to 0.
MomentPath evolve_moment_polynomial(const PolynomialMoment& psi, const CoefficientPath& c, double T,
                                    double dt);

/// c_kk'(t) = sum_a sigma_a (grad_h phi^t_k . grad_h phi^t_k', rho_bar_a(t))_h chi_{t <= T_k ^ T_k'}.
std::vector<double> moment_coefficients(const HmflOperator& op, const BackwardTestFamily& fam,
                                        const Trajectory& rho_bar, double t);

// ---------------------------------------------------------------------------

/// Atoms with signed weights: N^{-1} at particles, -h^d rho_bar at reference nodes.
struct SignedMeasure {
  int d = 1;
  std::vector<double> positions;
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
  std::span<const double> point(std::size_t i) const { return {positions.data() + i * d, static_cast<std::size_t>(d)}; }
  double integrate(const SmoothFunction& f) const;
};

/// mu_a - rho_bar_a per species with rho_bar given on a grid.
std::vector<SignedMeasure> particle_fluctuation_measures(const ParticleEnsemble& ens,
                                                         const SpeciesFields& rho_bar);

/// d/dx_l phi_a(x)
using PartialDerivative = std::function<double(int a, int l, std::span<const double> x)>;

/// sum_ab < grad phi_a . (grad V_ab * nu_b), nu_a > for signed measures nu.
double q_tilde(const PotentialMatrix& pot, const PartialDerivative& dphi,
               const std::vector<SignedMeasure>& nu);
/// sum_ab (grad_h phi_a . (I_h[grad V_ab] *_h eta_b), eta_a)_h
double q_tilde_h(const HmflOperator& op, const SpeciesFields& phi, const SpeciesFields& eta);

/// <f, nu_a>
using FluctuationTester = std::function<double(int a, const SmoothFunction& f)>;

/// Separated form sum_{a,b,l} sum F[m, n] <theta_m, nu_b> <d_l phi_a theta_n, nu_a>.
/// tables[(a n_S + b) d + l] are the split coefficients of d_l V_ab.
double split_q_tilde(int n_species, int d, const std::vector<SplitCoefficients>& tables,
                     const PartialDerivative& dphi, const FluctuationTester& tester);

std::vector<SplitCoefficients> split_tables(const PotentialMatrix& pot, int M_cut);

}  // namespace dklab
