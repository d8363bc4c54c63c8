#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dklab/error.hpp"
#include "dklab/meanfield.hpp"
#include "dklab/potentials.hpp"
#include "dklab/rng.hpp"

using namespace dklab;

namespace {
double bump1(double x, double w) { return std::abs(x) < w ? std::exp(-1.0 / (1.0 - (x / w) * (x / w))) : 0.0; }
}  // namespace

TEST_CASE("potential evaluation") {
  const PotentialMatrix one(1, 1, PotentialFamily::bump, 2.0, 1.0);
  std::vector<double> z{0.0};
  CHECK(one.V(0, 0, z) == doctest::Approx(std::exp(-1.0)));
  const PotentialMatrix half(1, 1, PotentialFamily::bump, 2.0, 0.5);
  for (double x : {0.0, 0.3, -0.7, 0.95}) {
    std::vector<double> p{x}, q{2 * x};
    CHECK(half.V(0, 0, p) == doctest::Approx(2.0 * one.V(0, 0, q)));
    CHECK(half.V(0, 0, p) == doctest::Approx(2.0 * bump1(2 * x, 2.0)));
  }
  CHECK_THROWS_AS(PotentialMatrix(1, 1, PotentialFamily::bump, 4.0, 1.0), ConfigError);
  CHECK_THROWS_AS(PotentialMatrix(1, 2, PotentialFamily::bump, 2.0, 1.0, {1, 2, 3, 1}), ConfigError);
  CHECK_THROWS_AS(PotentialMatrix(1, 1, PotentialFamily::cosine, 2.0, 0.5), ConfigError);
  CHECK(parse_potential_family("bump") == PotentialFamily::bump);
  CHECK_THROWS_AS(parse_potential_family("coulomb"), ConfigError);
}

TEST_CASE("gradient is odd and matches finite differences") {
  const PotentialMatrix pot(2, 2, PotentialFamily::bump, 2.5, 0.8, {1.0, 0.5, 0.5, 2.0});
  RandomStream r(3, {0, 0, 0, 0, RngPurpose::test_data});
  for (int k = 0; k < 100; ++k) {
    std::vector<double> x{-2 + 4 * r.uniform(), -2 + 4 * r.uniform()}, mx{-x[0], -x[1]};
    std::vector<double> g(2), gm(2);
    pot.gradV(0, 1, x, g);
    pot.gradV(0, 1, mx, gm);
    CHECK(std::abs(g[0] + gm[0]) < 1e-14);
    CHECK(std::abs(g[1] + gm[1]) < 1e-14);
    for (int l = 0; l < 2; ++l) {
      const double e = 1e-6;
      auto xp = x, xm = x;
      xp[l] += e;
      xm[l] -= e;
      CHECK(pot.dV(0, 1, l, x) == doctest::Approx((pot.V(0, 1, xp) - pot.V(0, 1, xm)) / (2 * e)).epsilon(1e-5).scale(1e-3));
    }
  }
}

TEST_CASE("mass preserved under rescaling") {
  const PeriodicGrid g(1, 2048);
  const PotentialMatrix a(1, 1, PotentialFamily::bump, 3.0, 1.0), b(1, 1, PotentialFamily::bump, 3.0, 0.25);
  CHECK(std::abs(quadrature_h(a.sample_V(0, 0, g)) - quadrature_h(b.sample_V(0, 0, g))) < 1e-8);
}

TEST_CASE("mean-field drift") {
  const PeriodicGrid g(1, 32);
  const PotentialMatrix pot(1, 1, PotentialFamily::bump, 2.0, 0.5);
  const InteractionKernels k(pot, g);
  SpeciesFields c{GridField(g, 0.3)};
  CHECK(lp_norm_h(mean_field_drift_discrete(k, c, 0)[0], Lp::inf) < 1e-12);

  // cos kernel V = c cos x, rho = 1 + cos x: U = grad V * rho = -c pi sin x... (d/dx of V * rho)
  const PotentialMatrix cosv(1, 1, PotentialFamily::cosine, 1.0, 1.0, {0.7});
  const InteractionKernels kc(cosv, g);
  SpeciesFields rho{interpolate_Ih([](std::span<const double> x) { return 1.0 + std::cos(x[0]); }, g)};
  const auto U = mean_field_drift_discrete(kc, rho, 0)[0];
  for (std::size_t i = 0; i < g.size(); ++i)
    CHECK(U[i] == doctest::Approx(-0.7 * kPi * std::sin(g.coordinate(int(i)))).epsilon(1e-12).scale(1.0));

  const PotentialMatrix two(1, 2, PotentialFamily::bump, 2.0, 0.5, {1.0, 0.0, 0.0, 1.0});
  const InteractionKernels k2(two, g);
  SpeciesFields r2{rho[0], GridField(g, 1.0)}, r3{rho[0], interpolate_Ih([](std::span<const double> x) { return 2 + std::sin(3 * x[0]); }, g)};
  CHECK(lp_norm_h(mean_field_drift_discrete(k2, r2, 0)[0] - mean_field_drift_discrete(k2, r3, 0)[0], Lp::inf) == 0.0);
  CHECK(lp_norm_h(mean_field_drift_discrete(InteractionKernels(PotentialMatrix::zero(1, 1), g), rho, 0)[0], Lp::inf) == 0.0);
}

TEST_CASE("discrete drift converges to the fine drift") {
  const PotentialMatrix pot(1, 1, PotentialFamily::bump, 2.0, 1.0);
  auto f = [](std::span<const double> x) { return 1.0 + 0.5 * std::cos(x[0]) + 0.2 * std::sin(2 * x[0]); };
  const PeriodicGrid fine(1, 1024);
  const auto Uf = mean_field_drift_continuous(InteractionKernels(pot, fine), {interpolate_Ih(f, fine)}, 0)[0];
  std::vector<double> err;
  for (int L : {32, 64, 128}) {
    const PeriodicGrid g(1, L);
    const auto U = mean_field_drift_discrete(InteractionKernels(pot, g), {interpolate_Ih(f, g)}, 0)[0];
    err.push_back(lp_norm_h(U - restrict_to(Uf, g), Lp::inf));
  }
  CHECK(err[1] < err[0]);
  CHECK(err[2] < err[1]);
}

TEST_CASE("split coefficients") {
  // cosine potential: dV = -c sin(x - y) has only mode-1 entries
  const PotentialMatrix cosv(1, 1, PotentialFamily::cosine, 1.0, 1.0, {1.0});
  const auto sc = compute_split_coefficients(cosv, 0, 0, 0, 4);
  for (const auto& e : sc.entries())
    if (std::abs(e.value) > 1e-12) {
      CHECK(e.y_mode.m[0] == 1);
      CHECK(e.x_mode.m[0] == 1);
    }
  for (double x : {-2.0, 0.3, 1.7})
    for (double y : {-1.0, 0.0, 2.9}) {
      std::vector<double> px{x}, py{y};
      CHECK(std::abs(sc.reconstruct(px, py) + std::sin(x - y)) < 1e-12);
    }
  const auto z = compute_split_coefficients(PotentialMatrix::zero(1, 1), 0, 0, 0, 4);
  for (const auto& e : z.entries()) CHECK(e.value == 0.0);

  const PotentialMatrix bump(1, 1, PotentialFamily::bump, 3.0, 1.0);
  const auto fast = compute_split_coefficients(bump, 0, 0, 0, 6);
  const auto quad = compute_split_coefficients_quadrature(bump, 0, 0, 0, 6, 64);
  for (double x : {-2.0, 0.5})
    for (double y : {-0.5, 1.0}) {
      std::vector<double> px{x}, py{y};
      CHECK(std::abs(fast.reconstruct(px, py) - quad.reconstruct(px, py)) < 1e-10);
    }
  // truncation error at least halves when M doubles
  auto sup_err = [&](int M) {
    const auto s = compute_split_coefficients(bump, 0, 0, 0, M);
    double e = 0.0;
    for (int i = 0; i < 40; ++i)
      for (int j = 0; j < 40; ++j) {
        std::vector<double> px{-kPi + kTwoPi * i / 40}, py{-kPi + kTwoPi * j / 40 + 0.01};
        std::vector<double> diff{px[0] - py[0]};
        e = std::max(e, std::abs(s.reconstruct(px, py) - bump.dV(0, 0, 0, std::vector<double>{wrap_coordinate(diff[0])})));
      }
    return e;
  };
  const double e4 = sup_err(4), e8 = sup_err(8), e16 = sup_err(16);
  CHECK(e8 <= 0.5 * e4);
  CHECK(e16 <= 0.5 * e8);
  CHECK(fast.max_at_radius(8) < fast.max_at_radius(2));
  std::ostringstream os;
  fast.write_csv(os);
  CHECK(!os.str().empty());
}

TEST_CASE("real Fourier basis") {
  const auto b = real_fourier_basis(1, 3);
  CHECK(b.size() == 7);
  const auto b2 = real_fourier_basis(2, 1);
  CHECK(b2.size() == 9);
  RealMode m{{1}, true};
  CHECK(m.norm2() == doctest::Approx(kPi));
}
