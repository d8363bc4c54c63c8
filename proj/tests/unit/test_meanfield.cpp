#include <doctest.h>

#include <cmath>

#include "dklab/error.hpp"
#include "dklab/meanfield.hpp"

using namespace dklab;

namespace {

SpeciesFields one_plus_cos(const PeriodicGrid& g, double a = 1.0) {
  return {interpolate_Ih([a](std::span<const double> x) { return (1.0 + a * std::cos(x[0])) / kTwoPi; }, g)};
}

}  // namespace

TEST_CASE("h-MFL right-hand side") {
  const PeriodicGrid g(1, 32);
  const PotentialMatrix bump(1, 1, PotentialFamily::bump, 2.0, 0.5);
  const HmflOperator op(g, {bump, {1.0}, 1});
  CHECK(lp_norm_h(op.rhs({GridField(g, 0.2)})[0], Lp::inf) < 1e-13);

  const HmflOperator heat(g, {PotentialMatrix::zero(1, 1), {0.8}, 1});
  const auto r = heat.rhs(one_plus_cos(g))[0];
  const double h = g.h(), lam = 2 * (1 - std::cos(h)) / (h * h);
  for (std::size_t i = 0; i < g.size(); ++i)
    CHECK(r[i] == doctest::Approx(-0.8 * lam * std::cos(g.coordinate(int(i))) / kTwoPi).epsilon(1e-12).scale(1.0));

  for (int p : {1, 3}) {
    const HmflOperator o(g, {bump, {1.0}, p});
    const auto rho = one_plus_cos(g, 0.7);
    CHECK(std::abs(quadrature_h(o.rhs(rho)[0])) < 1e-14);
  }
}

TEST_CASE("h-MFL integration") {
  const PeriodicGrid g(1, 32);
  const double sigma = 1.0;
  const HmflOperator heat(g, {PotentialMatrix::zero(1, 1), {sigma}, 1});
  const double h = g.h(), lam = 2 * (1 - std::cos(h)) / (h * h);
  IntegrateOptions opt;
  opt.dt = 0.1 * h * h;
  MeanFieldState fin;
  const auto traj = integrate_hmfl(heat, one_plus_cos(g), 1.0, opt, &fin);
  const auto c = fourier_coefficients(fin.rho[0]);
  const auto c0 = fourier_coefficients(one_plus_cos(g)[0]);
  CHECK(std::abs(c[1]) / std::abs(c0[1]) == doctest::Approx(std::exp(-sigma * lam)).epsilon(1e-6));
  CHECK(traj.end() == doctest::Approx(1.0));

  const auto cst = integrate_hmfl(heat, {GridField(g, 0.3)}, 0.2, opt);
  CHECK(lp_norm_h(cst.at(0.123)[0] - GridField(g, 0.3), Lp::inf) < 1e-14);

  const PotentialMatrix bump(1, 1, PotentialFamily::bump, 2.0, 0.5, {2.0});
  const HmflOperator op(g, {bump, {sigma}, 3});
  const auto rho0 = one_plus_cos(g, 0.8);
  MeanFieldState f2;
  const auto t2 = integrate_hmfl(op, rho0, 1.0, opt, &f2);
  CHECK(std::abs(quadrature_h(f2.rho[0]) - quadrature_h(rho0[0])) < 1e-10 * quadrature_h(rho0[0]));
  CHECK(f2.min_value > 0.0);
  CHECK_THROWS_AS(t2.at(1.5), std::out_of_range);

  IntegrateOptions bad;
  bad.dt = 10 * h * h;
  CHECK_THROWS_AS(integrate_hmfl(op, rho0, 0.1, bad), NumericalError);
}

TEST_CASE("trajectory interpolation") {
  const PeriodicGrid g(1, 16);
  Trajectory tr;
  // u(t) = t^3 is reproduced exactly by cubic Hermite
  for (double t : {0.0, 0.5, 1.0}) tr.push(t, {GridField(g, t * t * t)}, {GridField(g, 3 * t * t)});
  CHECK(tr.at(0.3)[0][0] == doctest::Approx(0.027));
  CHECK(tr.at(0.77)[0][5] == doctest::Approx(0.77 * 0.77 * 0.77));
  CHECK_THROWS_AS(tr.at(-0.1), std::out_of_range);
}

TEST_CASE("fine reference") {
  const PotentialMatrix bump(1, 1, PotentialFamily::bump, 2.0, 0.5);
  const MeanFieldModel m{bump, {1.0}, 3};
  auto f = [](std::span<const double> x) { return (1.0 + 0.5 * std::cos(x[0])) / kTwoPi; };
  const PeriodicGrid coarse(1, 16);
  const auto a = fine_reference(m, {f}, 1, 64, 0.2, 1e-4);
  const auto b = fine_reference(m, {f}, 1, 128, 0.2, 1e-4);
  IntegrateOptions opt;
  opt.dt = 1e-3;
  MeanFieldState fin;
  integrate_hmfl(HmflOperator(coarse, {bump, {1.0}, 1}), {interpolate_Ih(f, coarse)}, 0.2, opt, &fin);
  const double ref_gap = lp_norm_h(a.at_coarse(0.2, coarse)[0] - b.at_coarse(0.2, coarse)[0], Lp::two);
  const double coarse_gap = lp_norm_h(fin.rho[0] - b.at_coarse(0.2, coarse)[0], Lp::two);
  CHECK(ref_gap < coarse_gap);
  const auto cst = fine_reference(m, {[](std::span<const double>) { return 0.5; }}, 1, 64, 0.1, 1e-4);
  CHECK(lp_norm_h(cst.at(0.1)[0] - GridField(PeriodicGrid(1, 64), 0.5), Lp::inf) < 1e-13);
  CHECK_THROWS(restrict_to(GridField(PeriodicGrid(1, 64)), PeriodicGrid(1, 24)));
}
