#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <string_view>

#include <Eigen/Core>

namespace rsmc {

// Philox4x32-10 applied to a single 128-bit block.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key);

// Counter-based generator: the stream is fully determined by its 64-bit key, and
// the n-th output is a pure function of (key, n). Satisfies UniformRandomBitGenerator.
class Philox {
 public:
  using result_type = std::uint32_t;

  explicit Philox(std::uint64_t key = 0) : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)} {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  std::uint64_t key() const { return (std::uint64_t(key_[1]) << 32) | key_[0]; }
  std::uint64_t position() const { return block_ * 4 + lane_ - 4; }

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint64_t block_ = 0;
  int lane_ = 4;
  std::array<std::uint32_t, 4> buf_{};
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view s);

// Child key from a parent key and a path of labels; order matters.
std::uint64_t derive_key(std::uint64_t parent, std::initializer_list<std::uint64_t> path);

// Random source handed to samplers: owns one Philox stream plus the distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : engine_(key) {}

  double normal() { return normal_(engine_); }
  double uniform() { return std::generate_canonical<double, 53>(engine_); }
  Eigen::VectorXd normal_vector(int d);
  std::uint64_t key() const { return engine_.key(); }
  Philox& engine() { return engine_; }

 private:
  Philox engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace rsmc
