#include <doctest.h>

#include <complex>
#include <sstream>

#include "dklab/error.hpp"
#include "dklab/grid.hpp"
#include "helpers.hpp"

using namespace dklab;
using testutil::random_field;

TEST_CASE("inner product examples") {
  const PeriodicGrid g1(1, 8), g2(2, 4);
  CHECK(inner_product_h(GridField(g1, 1.0), GridField(g1, 1.0)) == doctest::Approx(kTwoPi).epsilon(1e-14));
  CHECK(inner_product_h(GridField(g2, 1.0), GridField(g2, 1.0)) == doctest::Approx(kTwoPi * kTwoPi).epsilon(1e-14));
  const PeriodicGrid g(1, 16);
  const auto c = testutil::sampled(g, [](double x) { return std::cos(x); });
  CHECK(inner_product_h(c, c) == doctest::Approx(kPi).epsilon(1e-14));
  CHECK_THROWS_AS(inner_product_h(GridField(g1), GridField(PeriodicGrid(1, 16))), GridMismatch);
}

TEST_CASE("grid construction and indexing") {
  CHECK_THROWS(PeriodicGrid(1, 7));
  CHECK_THROWS(PeriodicGrid(0, 8));
  const PeriodicGrid g(2, 8);
  CHECK(g.h() == doctest::Approx(kTwoPi / 8));
  CHECK(g.size() == 64);
  std::vector<int> idx{3, 5};
  const auto k = g.ravel(idx);
  CHECK(k == 3 * 8 + 5);
  std::vector<int> back(2);
  g.unravel(k, back);
  CHECK(back == idx);
  std::vector<int> wrapped{-5, 13};
  CHECK(g.ravel(wrapped) == k);
  CHECK(g.coordinate(0) == doctest::Approx(-kPi));
  CHECK(wrap_coordinate(kPi) == doctest::Approx(-kPi));
  CHECK(wrap_coordinate(-kPi - 0.1) == doctest::Approx(kPi - 0.1));
}

TEST_CASE("difference operators: examples") {
  const PeriodicGrid g(1, 32);
  for (int p : {1, 3}) {
    const DiscreteOperatorSet ops(g, p);
    const GridField c(g, 2.5);
    for (auto op : {DiffOp::partial, DiffOp::sbp_partial, DiffOp::second, DiffOp::laplacian})
      CHECK(lp_norm_h(ops.apply(op, c), Lp::inf) < 1e-12);
  }
  const DiscreteOperatorSet ops(g, 1);
  const double h = g.h();
  const auto s = testutil::sampled(g, [](double x) { return std::sin(x); });
  const auto ds = ops.partial(s, 0);
  const auto c = testutil::sampled(g, [](double x) { return std::cos(x); });
  const auto lc = ops.laplacian(c);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(ds[i] == doctest::Approx(std::sin(h) / h * c[i]).epsilon(1e-12).scale(1.0));
    CHECK(lc[i] == doctest::Approx(-2.0 * (1.0 - std::cos(h)) / (h * h) * c[i]).epsilon(1e-12).scale(1.0));
  }
  CHECK_THROWS(DiscreteOperatorSet(PeriodicGrid(1, 4), 3).partial(GridField(PeriodicGrid(1, 4)), 0));
  CHECK_THROWS(DiscreteOperatorSet(g, 2));
}

TEST_CASE("summation by parts on random fields") {
  for (int d : {1, 2})
    for (int p : {1, 3}) {
      const PeriodicGrid g(d, d == 1 ? 32 : 16);
      const DiscreteOperatorSet ops(g, p);
      for (std::uint32_t k = 0; k < 100; ++k) {
        const auto u = random_field(g, 11, 2 * k), v = random_field(g, 11, 2 * k + 1);
        for (int l = 0; l < d; ++l) {
          const double lhs = inner_product_h(ops.second(u, l), v) + inner_product_h(ops.sbp(u, l), ops.sbp(v, l));
          CHECK(std::abs(lhs) <= 1e-10 * lp_norm_h(u, Lp::two) * lp_norm_h(v, Lp::two));
        }
        // divergence is the negative adjoint of the gradient
        VectorField f;
        for (int l = 0; l < d; ++l) f.push_back(random_field(g, 12, k * 4 + l));
        CHECK(inner_product_h(ops.divergence(f), u) == doctest::Approx(-inner_product_h(f, ops.gradient(u))).epsilon(1e-10));
      }
    }
}

TEST_CASE("first-difference comparison constant") {
  for (int p : {1, 3}) {
    const PeriodicGrid g(1, 32);
    const DiscreteOperatorSet ops(g, p);
    const double C = ops.first_difference_constant();
    CHECK(C > 0.0);
    for (std::uint32_t k = 0; k < 50; ++k) {
      const auto u = random_field(g, 13, k);
      const double lhs = std::pow(lp_norm_h(ops.partial(u, 0), Lp::two), 2);
      const double rhs = std::pow(lp_norm_h(ops.sbp(u, 0), Lp::two), 2) / C;
      CHECK(lhs <= rhs * (1 + 1e-12));
    }
  }
}

TEST_CASE("operator order on sin") {
  for (int p : {1, 3}) {
    std::vector<double> lh, e1, e2;
    for (int L : {16, 32, 64, 128}) {
      const PeriodicGrid g(1, L);
      const DiscreteOperatorSet ops(g, p);
      const auto s = testutil::sampled(g, [](double x) { return std::sin(x); });
      const auto c = testutil::sampled(g, [](double x) { return std::cos(x); });
      lh.push_back(std::log(g.h()));
      e1.push_back(std::log(lp_norm_h(ops.partial(s, 0) - c, Lp::inf)));
      e2.push_back(std::log(lp_norm_h(ops.second(s, 0) + s, Lp::inf)));
    }
    const double s1 = (e1.back() - e1.front()) / (lh.back() - lh.front());
    const double s2 = (e2.back() - e2.front()) / (lh.back() - lh.front());
    CHECK(s1 == doctest::Approx(p + 1).epsilon(0.2 / (p + 1)));
    CHECK(s2 == doctest::Approx(p + 1).epsilon(0.2 / (p + 1)));
  }
}

TEST_CASE("convolution") {
  const PeriodicGrid g(1, 8);
  const auto u = random_field(g, 21, 0), v = random_field(g, 21, 1);
  GridField delta(g);
  std::vector<double> zero{0.0};
  delta[g.nearest_index(zero)] = 1.0 / g.h();
  const auto ud = convolve_h(u, delta);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(ud[i] == doctest::Approx(u[i]).epsilon(1e-12));
  const auto one = convolve_h(GridField(g, 1.0), GridField(g, 1.0));
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(one[i] == doctest::Approx(kTwoPi).epsilon(1e-12));
  const auto fast = convolve_h(u, v), slow = convolve_h_direct(u, v);
  CHECK(lp_norm_h(fast - slow, Lp::inf) <= 1e-12 * lp_norm_h(slow, Lp::inf));

  const PeriodicGrid g2(2, 8);
  const auto a = random_field(g2, 22, 0), b = random_field(g2, 22, 1);
  CHECK(lp_norm_h(convolve_h(a, b) - convolve_h_direct(a, b), Lp::inf) <= 1e-11 * lp_norm_h(a, Lp::inf) * 40);
  const ConvolutionKernel K(b);
  CHECK(lp_norm_h(K.apply(a) - convolve_h(a, b), Lp::inf) < 1e-12);
}

TEST_CASE("convolution diagonalises in Fourier space") {
  const PeriodicGrid g(1, 16);
  const auto u = random_field(g, 23, 0), v = random_field(g, 23, 1);
  const auto cu = fourier_coefficients(u), cv = fourier_coefficients(v), cw = fourier_coefficients(convolve_h(u, v));
  for (std::size_t m = 0; m < cu.size(); ++m)
    CHECK(std::abs(cw[m] - std::sqrt(kTwoPi) * cu[m] * cv[m]) < 1e-10);
}

TEST_CASE("discrete Young inequality") {
  const PeriodicGrid g(1, 16);
  for (std::uint32_t k = 0; k < 20; ++k) {
    const auto u = random_field(g, 24, 2 * k), v = random_field(g, 24, 2 * k + 1);
    const auto w = convolve_h(u, v);
    CHECK(lp_norm_h(w, Lp::one) <= lp_norm_h(u, Lp::one) * lp_norm_h(v, Lp::one) * (1 + 1e-12));
    CHECK(lp_norm_h(w, Lp::two) <= lp_norm_h(u, Lp::one) * lp_norm_h(v, Lp::two) * (1 + 1e-12));
    CHECK(lp_norm_h(w, Lp::inf) <= lp_norm_h(u, Lp::two) * lp_norm_h(v, Lp::two) * (1 + 1e-12));
  }
}

TEST_CASE("quadrature") {
  for (int L : {4, 6, 8, 16}) {
    const PeriodicGrid g(1, L);
    CHECK(std::abs(quadrature_h(testutil::sampled(g, [](double x) { return std::cos(x); }))) < 1e-14);
  }
  CHECK(quadrature_h(GridField(PeriodicGrid(3, 4), 1.0)) == doctest::Approx(std::pow(kTwoPi, 3)));
  auto f = [](double x) { return std::exp(std::sin(x)); };
  const double ref = quadrature_h(testutil::sampled(PeriodicGrid(1, 4096), f));
  double prev = 1.0;
  for (int L : {8, 16, 32}) {
    const PeriodicGrid g(1, L);
    const double err = std::abs(quadrature_h(testutil::sampled(g, f)) - ref);
    CHECK(err <= std::max(std::pow(g.h(), 4) * 1e-2, 1e-14));
    CHECK(err <= prev);
    prev = std::max(err, 1e-300);
  }
}

TEST_CASE("sobolev norms") {
  const PeriodicGrid g(1, 16);
  for (int s : {-3, 0, 2}) CHECK(sobolev_norm_h(GridField(g), s) == 0.0);
  CHECK(sobolev_norm_h(GridField(g, 1.0), 0) == doctest::Approx(std::sqrt(kTwoPi)));
  CHECK(sobolev_norm_h(GridField(PeriodicGrid(2, 8), 1.0), 0) == doctest::Approx(kTwoPi));
  const auto c3 = testutil::sampled(g, [](double x) { return std::cos(3 * x); });
  CHECK(sobolev_norm_h(c3, -2) == doctest::Approx(std::sqrt(kPi) / 10).epsilon(1e-12));
  for (std::uint32_t k = 0; k < 20; ++k) {
    const auto u = random_field(PeriodicGrid(2, 8), 25, k);
    CHECK(sobolev_norm_h(u, 0) == doctest::Approx(lp_norm_h(u, Lp::two)).epsilon(1e-10));
    CHECK(sobolev_norm_h(u, -1) <= sobolev_norm_h(u, 0));
  }
  const auto back = from_fourier_coefficients(g, fourier_coefficients(c3));
  CHECK(lp_norm_h(back - c3, Lp::inf) < 1e-13);
  CHECK(one_sided_sobolev_norm_h(GridField(g, 3.0), 1) == doctest::Approx(3.0 * std::sqrt(kTwoPi)));
}

TEST_CASE("lp norms and interpolation") {
  const PeriodicGrid g(1, 8);
  CHECK(lp_norm_h(GridField(g, 1.0), Lp::one) == doctest::Approx(kTwoPi));
  CHECK(lp_norm_h(GridField(g, 1.0), Lp::inf) == 1.0);
  for (std::uint32_t k = 0; k < 20; ++k) {
    const auto u = random_field(g, 26, 2 * k), v = random_field(g, 26, 2 * k + 1);
    CHECK(std::abs(inner_product_h(u, v)) <= lp_norm_h(u, Lp::one) * lp_norm_h(v, Lp::inf) + 1e-14);
  }
  const auto c = interpolate_Ih([](std::span<const double>) { return 4.0; }, g);
  CHECK(c.min() == 4.0);
  CHECK(c.max() == 4.0);
  const auto s = testutil::sampled(PeriodicGrid(1, 4), [](double x) { return std::sin(x); });
  CHECK(s[0] == doctest::Approx(0.0).scale(1.0));
  CHECK(s[1] == doctest::Approx(-1.0));
  CHECK(s[2] == doctest::Approx(0.0).scale(1.0));
  CHECK(s[3] == doctest::Approx(1.0));
  const auto c2 = testutil::sampled(PeriodicGrid(1, 16), [](double x) { return std::cos(2 * x); });
  CHECK(inner_product_h(c2, c2) == doctest::Approx(kPi).epsilon(1e-14));
}

TEST_CASE("field serialization round trip") {
  const PeriodicGrid g(2, 4);
  auto u = random_field(g, 27);
  u.species = 1;
  std::stringstream ss;
  write_field(ss, u);
  const auto v = read_field(ss);
  CHECK(v.grid() == g);
  REQUIRE(v.species);
  CHECK(*v.species == 1);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(v[i] == u[i]);
  std::ostringstream csv;
  write_field_csv(csv, u);
  CHECK(csv.str().rfind("x1,x2,value", 0) == 0);
}

TEST_CASE("off-grid sampling") {
  const PeriodicGrid g(1, 64);
  const auto u = testutil::sampled(g, [](double x) { return std::sin(x); });
  for (double x : {-3.0, -0.123, 1.0, 3.1}) {
    std::vector<double> p{x};
    CHECK(sample_at(u, p) == doctest::Approx(std::sin(x)).epsilon(1e-8).scale(1.0));
  }
}
