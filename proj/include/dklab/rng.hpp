#pragma once

// Counter-based Philox4x32-10 streams. Every random number is a pure function of
// (seed, replica, species, index, step, purpose, draw number), so results do not
// depend on thread scheduling.

#include <array>
#include <cstdint>

namespace dklab {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key);

enum class RngPurpose : std::uint32_t {
  initial_positions = 1,
  particle_noise = 2,
  dk_noise = 3,
  features = 4,
  bootstrap = 5,
  test_data = 6,
};

struct StreamKey {
  std::uint32_t replica = 0;
  std::uint32_t species = 0;
  std::uint32_t index = 0;
  std::uint32_t step = 0;
  RngPurpose purpose = RngPurpose::test_data;
};

class RandomStream {
 public:
  RandomStream(std::uint64_t seed, const StreamKey& key);

  std::uint32_t next_u32();
  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform();
  double normal();

 private:
  void refill();

  PhiloxKey key_;
  PhiloxCounter ctr_;
  PhiloxCounter buf_{};
  int used_ = 4;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dklab
