#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (master seed, purpose, index, event, draw number), so results do not depend
// on the order in which workers consume them.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "thermochaos/core.hpp"

namespace thermochaos {

// Philox4x32-10 (Salmon et al., SC'11).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57;
  static constexpr std::uint32_t kW0 = 0x9E3779B9;
  static constexpr std::uint32_t kW1 = 0xBB67AE85;
};

enum class Purpose : std::uint32_t {
  history = 1,
  initial_velocity = 2,
  initial_position = 3,
  direction = 4,
  bootstrap = 5,
  projection = 6,
  ensemble = 7,
  f_samples = 8,
  spot_check = 9,
  test = 10,
};

// A keyed stream of uniform variates. Draws within one key are numbered
// sequentially; copying a stream copies its position.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, Purpose purpose, std::uint32_t index = 0, std::uint64_t event = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        purpose_(static_cast<std::uint32_t>(purpose)),
        index_(index),
        event_(event) {}

  std::uint64_t seed() const { return (static_cast<std::uint64_t>(key_[1]) << 32) | key_[0]; }

  // Same seed and purpose, different key.
  RandomStream substream(std::uint32_t index, std::uint64_t event) const {
    RandomStream s = *this;
    s.index_ = index;
    s.event_ = event;
    s.draw_ = 0;
    s.have_ = 0;
    return s;
  }

  std::uint32_t next_u32() {
    if (have_ == 0) refill();
    return block_[4 - have_--];
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    const std::uint64_t a = next_u32() >> 5;
    const std::uint64_t b = next_u32() >> 6;
    return static_cast<double>((a << 26) | b) * 0x1.0p-53;
  }

  // Uniform on (0, 1).
  double uniform_open() {
    const std::uint64_t a = next_u32() >> 5;
    const std::uint64_t b = next_u32() >> 6;
    return (static_cast<double>((a << 26) | b) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    const double r = std::sqrt(-2.0 * std::log(uniform_open()));
    return r * std::cos(2.0 * std::numbers::pi * uniform());
  }

  double exponential(double rate) { return -std::log(uniform_open()) / rate; }

  std::uint32_t below(std::uint32_t n) {
    auto k = static_cast<std::uint32_t>(uniform() * n);
    return k < n ? k : n - 1;
  }

 private:
  void refill() {
    // event is limited to 56 bits; the top byte of word 1 carries the purpose.
    const Philox4x32::Counter ctr{draw_++, (purpose_ << 24) | static_cast<std::uint32_t>((event_ >> 32) & 0xFFFFFF),
                                  index_, static_cast<std::uint32_t>(event_)};
    block_ = Philox4x32::generate(ctr, key_);
    have_ = 4;
  }

  Philox4x32::Key key_;
  std::uint32_t purpose_;
  std::uint32_t index_;
  std::uint64_t event_;
  std::uint32_t draw_ = 0;
  Philox4x32::Counter block_{};
  int have_ = 0;
};

}  // namespace thermochaos
