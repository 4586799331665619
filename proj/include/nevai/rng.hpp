#pragma once

#include <cstdint>
#include <random>

namespace nevai {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream per (seed, index): draws can run in any order or on any thread.
class StreamRng {
 public:
  StreamRng(std::uint64_t seed, std::uint64_t index) : eng_(splitmix64(splitmix64(seed) ^ splitmix64(~index))) {}

  // Uniform on [0, 1) with 53 random bits; same on every platform.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1p-53; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace nevai
