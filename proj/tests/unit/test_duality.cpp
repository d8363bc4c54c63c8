#include <doctest.h>

#include <cmath>

#include "dklab/duality.hpp"

using namespace dklab;

namespace {

GridField cosk(const PeriodicGrid& g, int k) {
  return interpolate_Ih([k](std::span<const double> x) { return std::cos(k * x[0]); }, g);
}

SpeciesFields density(const PeriodicGrid& g) {
  return {interpolate_Ih([](std::span<const double> x) { return (1.0 + 0.6 * std::cos(x[0])) / kTwoPi; }, g)};
}

}  // namespace

TEST_CASE("backward heat flow") {
  const PeriodicGrid g(1, 32);
  const HmflOperator op(g, {PotentialMatrix::zero(1, 1), {0.7}, 1});
  IntegrateOptions mo;
  mo.dt = 1e-3;
  const auto rb = integrate_hmfl(op, density(g), 0.5, mo);
  const auto fam = evolve_test_discrete(op, {{{cosk(g, 2)}, 0.5}, {{GridField(g, 2.0)}, 0.3}}, rb, 1e-3);
  const double h = g.h(), lam = 2 * (1 - std::cos(2 * h)) / (h * h);
  const auto phi0 = fam.at(0, 0.0)[0];
  const double amp = inner_product_h(phi0, cosk(g, 2)) / kPi;
  CHECK(amp == doctest::Approx(std::exp(-0.7 * lam * 0.5)).epsilon(1e-8));
  CHECK(lp_norm_h(fam.at(0, 0.5)[0] - cosk(g, 2), Lp::inf) == 0.0);
  CHECK(lp_norm_h(fam.at(0, 0.9)[0] - cosk(g, 2), Lp::inf) == 0.0);
  CHECK(lp_norm_h(fam.at(1, 0.1)[0] - GridField(g, 2.0), Lp::inf) < 1e-13);
}

TEST_CASE("duality conservation with interaction") {
  const PeriodicGrid g(1, 32);
  const PotentialMatrix pot(1, 1, PotentialFamily::bump, 2.0, 0.6, {1.5});
  for (int p : {1, 3}) {
    const HmflOperator op(g, {pot, {1.0}, p});
    const double dt = 1e-3, T = 0.5;
    IntegrateOptions mo;
    mo.dt = dt;
    const auto rb = integrate_hmfl(op, density(g), T, mo);
    SpeciesFields phiT{interpolate_Ih([](std::span<const double> x) { return std::sin(x[0]) + 0.3 * std::cos(3 * x[0]); }, g)};
    const auto fam = evolve_test_discrete(op, {{phiT, T}}, rb, dt);
    SpeciesFields eta0{interpolate_Ih([](std::span<const double> x) { return std::cos(x[0]) - 0.4 * std::sin(2 * x[0]); }, g)};
    const auto eta = integrate_linearized(op, eta0, rb, T, dt);
    const double ref = inner_product_h(fam.at(0, 0.0)[0], eta0[0]);
    double worst = 0.0;
    for (std::size_t n = 0; n < eta.size(); n += 50)
      worst = std::max(worst, std::abs(inner_product_h(fam.at(0, n * dt)[0], eta[n][0]) - ref));
    CHECK(worst < 1e-6 * std::abs(ref));
  }
}

TEST_CASE("continuous family norm growth") {
  const PeriodicGrid g(1, 128);
  const PotentialMatrix pot(1, 1, PotentialFamily::bump, 2.0, 0.6);
  const HmflOperator op(g, {pot, {1.0}, 3});
  IntegrateOptions mo;
  mo.dt = 2e-4;
  const auto rb = integrate_hmfl(op, density(g), 0.2, mo);
  const auto fam = evolve_test_continuous(op, {{{cosk(g, 1)}, 0.2}}, rb, 2e-4);
  const double n0 = sobolev_norm_h(cosk(g, 1), 2);
  // fitted envelope: log growth per unit backward time stays bounded
  for (double t : {0.15, 0.1, 0.05, 0.0}) {
    const double n = sobolev_norm_h(fam.at(0, t)[0], 2);
    CHECK(std::log(n / n0) / (0.2 - t + 1e-12) < 5.0);
  }
}

TEST_CASE("q tilde") {
  const PeriodicGrid g(1, 16);
  const PotentialMatrix cosv(1, 1, PotentialFamily::cosine, 1.0, 1.0, {0.8});
  SignedMeasure nu;
  nu.positions = {0.3, -1.1};
  nu.weights = {0.5, -0.25};
  auto dphi = [](int, int, std::span<const double> x) { return std::cos(2 * x[0]); };
  double hand = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      hand += nu.weights[i] * std::cos(2 * nu.positions[i]) * nu.weights[j] * (-0.8 * std::sin(nu.positions[i] - nu.positions[j]));
  CHECK(q_tilde(cosv, dphi, {nu}) == doctest::Approx(hand).epsilon(1e-13));
  CHECK(q_tilde(PotentialMatrix::zero(1, 1), dphi, {nu}) == 0.0);

  const auto tables = split_tables(cosv, 1);
  FluctuationTester tester = [&](int, const SmoothFunction& f) { return nu.integrate(f); };
  CHECK(split_q_tilde(1, 1, tables, dphi, tester) == doctest::Approx(hand).epsilon(1e-10));
  CHECK(split_q_tilde(1, 1, split_tables(PotentialMatrix::zero(1, 1), 2), dphi, tester) == 0.0);

  const PotentialMatrix bump(1, 1, PotentialFamily::bump, 2.0, 1.0);
  const double direct = q_tilde(bump, dphi, {nu});
  double prev = 1e300;
  for (int M : {4, 8, 16}) {
    const double e = std::abs(split_q_tilde(1, 1, split_tables(bump, M), dphi, tester) - direct);
    CHECK(e <= 0.5 * prev + 1e-12);
    prev = e;
  }

  const HmflOperator op(g, {cosv, {1.0}, 1});
  const auto rho = density(g);
  CHECK(q_tilde_h(op, {cosk(g, 1)}, {GridField(g)}) == 0.0);
  SpeciesFields eta{cosk(g, 1) - cosk(g, 3)};
  CHECK(std::isfinite(q_tilde_h(op, {cosk(g, 2)}, eta)));
  CHECK(q_tilde_h(HmflOperator(g, {PotentialMatrix::zero(1, 1), {1.0}, 1}), {cosk(g, 2)}, eta) == 0.0);
}

TEST_CASE("particle fluctuation measures") {
  ParticleEnsemble e;
  e.N = 3;
  e.sigma = {1.0};
  e.x = {0.1, 0.2, -2.0};
  const PeriodicGrid g(1, 8);
  const auto nu = particle_fluctuation_measures(e, {GridField(g, 1.0 / kTwoPi)});
  CHECK(nu[0].integrate([](std::span<const double>) { return 1.0; }) == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("moment polynomials") {
  const auto c = [](double) { return std::vector<double>{0.3}; };
  const auto lin = PolynomialMoment::monomial(1, {1}, 2.0);
  const auto pl = evolve_moment_polynomial(lin, c, 1.0, 0.01);
  std::vector<double> z{1.7};
  CHECK(pl.at(0.0)(z) == doctest::Approx(3.4));

  const auto sq = evolve_moment_polynomial(PolynomialMoment::monomial(1, {2}), c, 1.0, 0.01);
  for (double t : {0.0, 0.25, 0.8})
    CHECK(sq.at(t)(z) == doctest::Approx(z[0] * z[0] + 2 * 0.3 * (1 - t)).epsilon(1e-12));

  const auto q4 = evolve_moment_polynomial(PolynomialMoment::monomial(1, {4}), c, 1.0, 0.01);
  for (double t : {0.0, 0.5}) {
    const double s = 1 - t;
    CHECK(q4.at(t)(z) == doctest::Approx(std::pow(z[0], 4) + 12 * 0.3 * s * z[0] * z[0] + 12 * 0.09 * s * s).epsilon(1e-10));
    CHECK(q4.at(t).degree() == 4);
  }

  // linearity in psi
  const auto c2 = [](double t) { return std::vector<double>{0.2 + t, 0.1, 0.1, 0.5}; };
  const auto a = PolynomialMoment::monomial(2, {2, 1}), b = PolynomialMoment::monomial(2, {0, 3}, -1.0);
  const auto pa = evolve_moment_polynomial(a, c2, 1.0, 0.01), pb = evolve_moment_polynomial(b, c2, 1.0, 0.01);
  const auto pab = evolve_moment_polynomial(a + 2.0 * b, c2, 1.0, 0.01);
  std::vector<double> w{0.4, -1.3};
  CHECK(pab.at(0.3)(w) == doctest::Approx(pa.at(0.3)(w) + 2.0 * pb.at(0.3)(w)).epsilon(1e-12));
}

TEST_CASE("moment coefficients from a test family") {
  const PeriodicGrid g(1, 32);
  const HmflOperator op(g, {PotentialMatrix::zero(1, 1), {1.0}, 1});
  IntegrateOptions mo;
  mo.dt = 1e-3;
  const auto rb = integrate_hmfl(op, density(g), 0.4, mo);
  const auto fam = evolve_test_discrete(op, {{{cosk(g, 1)}, 0.2}, {{cosk(g, 2)}, 0.4}}, rb, 1e-3);
  const auto c = moment_coefficients(op, fam, rb, 0.3);
  REQUIRE(c.size() == 4);
  CHECK(c[0] == 0.0);
  CHECK(c[1] == 0.0);
  CHECK(c[3] > 0.0);
  const auto c0 = moment_coefficients(op, fam, rb, 0.1);
  CHECK(c0[1] == doctest::Approx(c0[2]));
}
