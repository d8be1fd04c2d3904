#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "mclink/rng.hpp"

namespace mclink {

/// The fixed pilot header prepended to every transmission.
inline constexpr std::array<int, 5> kPilot = {1, 1, 1, 1, 0};

/// A transmitted or decoded binary sequence. When pilot_len > 0 the first
/// pilot_len bits are the synchronization header and the rest is payload.
struct BitSequence {
  std::vector<int> bits;
  int pilot_len = 0;

  BitSequence() = default;
  explicit BitSequence(std::vector<int> b, int pilot = 0) : bits(std::move(b)), pilot_len(pilot) {
    validate();
  }

  size_t size() const { return bits.size(); }
  bool empty() const { return bits.empty(); }
  int operator[](size_t i) const { return bits[i]; }

  std::span<const int> payload() const {
    return std::span<const int>(bits).subspan(static_cast<size_t>(pilot_len));
  }
  std::span<const int> pilot() const {
    return std::span<const int>(bits).first(static_cast<size_t>(pilot_len));
  }

  void validate() const {
    if (pilot_len < 0 || static_cast<size_t>(pilot_len) > bits.size())
      throw std::invalid_argument("BitSequence: pilot_len out of range");
    for (int b : bits)
      if (b != 0 && b != 1) throw std::invalid_argument("BitSequence: bits must be 0 or 1");
    if (pilot_len == static_cast<int>(kPilot.size())) {
      for (size_t i = 0; i < kPilot.size(); ++i)
        if (bits[i] != kPilot[i]) throw std::invalid_argument("BitSequence: pilot header must be 1,1,1,1,0");
    } else if (pilot_len != 0) {
      throw std::invalid_argument("BitSequence: pilot_len must be 0 or 5");
    }
  }
};

/// Pilot header followed by the given payload.
inline BitSequence with_pilot(const std::vector<int>& payload) {
  std::vector<int> all(kPilot.begin(), kPilot.end());
  all.insert(all.end(), payload.begin(), payload.end());
  return BitSequence(std::move(all), static_cast<int>(kPilot.size()));
}

inline std::vector<int> random_payload(size_t n, uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<int> out(n);
  for (auto& b : out) b = uniform_int(rng, 0, 1);
  return out;
}

inline size_t hamming_distance(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw std::invalid_argument("hamming_distance: length mismatch");
  size_t d = 0;
  for (size_t i = 0; i < a.size(); ++i) d += (a[i] != b[i]) ? 1u : 0u;
  return d;
}

}  // namespace mclink
