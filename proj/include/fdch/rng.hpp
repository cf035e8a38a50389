#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace fdch {

// SplitMix64 (Steele, Lea, Flood: "Fast splittable pseudorandom number
// generators"). The state is a counter advanced by a fixed odd increment and
// each output is a bijective mix of that counter, so the stream is a pure
// function of (seed, call index) and reproduces exactly on any platform with
// 64-bit integers. All randomness in this project (init, splits, synthetic
// data, shuffles) is drawn from this generator; draw orders are documented at
// the call sites.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Skips n outputs in O(1).
  void skip(std::uint64_t n) { state_ += n * 0x9e3779b97f4a7c15ULL; }

  // Uniform in [0,1) with 53 random mantissa bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [-1,1).
  double uniform_sym() { return 2.0 * uniform01() - 1.0; }

  // Standard normal via Box-Muller, cosine branch only: always two uniform
  // draws per call, so the stream layout does not depend on call parity.
  double gaussian() {
    const double u1 = 1.0 - uniform01();  // (0,1], keeps the log finite
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * pi_ * u2);
  }

  // Uniform integer in [0,n) by 128-bit multiply-shift.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  // In-place Fisher-Yates, last index to first.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static constexpr double pi_ = 3.14159265358979323846;
  std::uint64_t state_;
};

// The stream-th output of SplitMix64(master); used to hand independent
// sub-seeds to the networks, the shuffler, etc. from one master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  SplitMix64 g(master);
  g.skip(stream);
  return g.next();
}

}  // namespace fdch
