#ifndef BRATI_RNG_HPP
#define BRATI_RNG_HPP

#include <cstdint>

namespace brati {

// SplitMix64 (Steele, Lea & Flood, "Fast splittable pseudorandom number
// generators"). One 64-bit word of state, one multiply-xorshift chain per
// draw. Every stochastic choice in the library (mask sampling, parameter
// init, shuffles, dropout) goes through this generator so that a run is
// fully determined by its integer seed, and so that any other
// implementation can reproduce the exact sequences from this definition.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n) via 128-bit multiply-shift (no modulo bias ramp).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  // Child generator for an independent stream (e.g. one per mask column or
  // per training window). Derived from the current state and the stream
  // index, so split(a) and split(b) are decorrelated for a != b.
  SplitMix64 split(std::uint64_t stream) const {
    return SplitMix64(mix(state_, 0xD1B54A32D192ED03ULL ^ stream));
  }

  // Stateless seed derivation used to tag sub-streams, e.g.
  // derive(seed, epoch, batch, window).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = mix(seed, a);
    s = mix(s, 0x9E3779B97F4A7C15ULL ^ b);
    return mix(s, 0x2545F4914F6CDD1DULL ^ c);
  }

 private:
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    SplitMix64 g(a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2)));
    return g.next();
  }

  std::uint64_t state_;
};

}  // namespace brati

#endif
