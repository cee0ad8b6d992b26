// Seeded RNG wrapper. mt19937_64 gives a platform-stable stream; the
// distribution helpers below avoid the implementation-defined std::
// distributions so that runs reproduce bit-for-bit everywhere.
#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace afc {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Derive an independent stream seed from a base seed and a stream tag.
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream + 0x6A09E667F3BCC909ull));
}

class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return (eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n > 0. Modulo bias is negligible for n << 2^64.
  uint64_t uniform_index(uint64_t n) { return eng_() % n; }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(uniform_index(static_cast<uint64_t>(hi - lo + 1)));
  }

  // Standard normal via Box-Muller (deterministic, no cached spare).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  std::string serialize() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace afc
