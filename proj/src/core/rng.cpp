#include "core/rng.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace mga {

namespace {

uint64_t splitmix64(uint64_t& x) {
  x += 0x9E3779B97F4A7C15ull;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(uint64_t seed) {
  uint64_t sm = seed;
  for (auto& s : s_) s = splitmix64(sm);
}

uint64_t Rng::next_u64() {
  const uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  // top 53 bits -> [0, 1)
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

uint64_t Rng::below(uint64_t n) {
  if (n == 0) throw DegenerateInputError("Rng::below: n must be positive");
  // rejection sampling over the top of the range to avoid modulo bias
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

double Rng::normal() {
  // Box-Muller; u1 nudged away from 0 so log stays finite.
  double u1 = uniform();
  double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::vector<uint64_t> Rng::state() const { return {s_[0], s_[1], s_[2], s_[3]}; }

void Rng::set_state(const std::vector<uint64_t>& s) {
  if (s.size() != 4) throw WiringError("Rng::set_state: expected 4 words");
  for (int i = 0; i < 4; ++i) s_[i] = s[i];
}

uint64_t Rng::mix(uint64_t seed, uint64_t tag) {
  uint64_t x = seed ^ (0x9E3779B97F4A7C15ull + (tag << 1));
  uint64_t a = splitmix64(x);
  uint64_t b = splitmix64(x);
  return a ^ rotl(b, 23) ^ tag;
}

}  // namespace mga
