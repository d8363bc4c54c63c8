#pragma once

#include <cmath>
#include <span>

#include "dklab/grid.hpp"
#include "dklab/rng.hpp"

namespace testutil {

inline dklab::GridField random_field(const dklab::PeriodicGrid& g, std::uint64_t seed, std::uint32_t idx = 0) {
  dklab::RandomStream rng(seed, {0, 0, idx, 0, dklab::RngPurpose::test_data});
  dklab::GridField u(g);
  for (auto& v : u.values()) v = rng.normal();
  return u;
}

inline dklab::GridField sampled(const dklab::PeriodicGrid& g, double (*f)(double)) {
  return dklab::interpolate_Ih([f](std::span<const double> x) { return f(x[0]); }, g);
}

}  // namespace testutil
