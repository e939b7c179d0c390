#ifndef RNMT_RNG_HPP
#define RNMT_RNG_HPP

#include <cstdint>
#include <random>

namespace rnmt {

// Seeded RNG with hand-rolled value mappings. std::mt19937_64 output is
// pinned by the standard, but the <random> distributions are not, so we
// map raw draws ourselves to keep byte-identical output everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], rejection-sampled so there is no modulo bias.
  int uniform_int(int lo, int hi) {
    std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    std::uint64_t limit = (~std::uint64_t{0} / range) * range;
    std::uint64_t draw;
    do {
      draw = engine_();
    } while (draw >= limit);
    return lo + static_cast<int>(draw % range);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(
          uniform_int(0, static_cast<int>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace rnmt

#endif
