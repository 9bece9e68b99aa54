#pragma once

#include <cstdint>
#include <vector>

namespace mga {

// xoshiro256** with splitmix64 seeding. Self-contained so that corpora and
// training trajectories replay bit-exactly from a stored seed; the state is
// four u64 words and serializes into checkpoints.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  // uniform in [0, 1)
  double uniform();
  // uniform integer in [0, n)
  uint64_t below(uint64_t n);
  // standard normal via Box-Muller; consumes two uniforms per call so the
  // stream position never depends on call parity
  double normal();

  std::vector<uint64_t> state() const;
  void set_state(const std::vector<uint64_t>& s);

  // Deterministic stream derivation: mixes a seed with a stream tag.
  static uint64_t mix(uint64_t seed, uint64_t tag);

 private:
  uint64_t s_[4];
};

}  // namespace mga
