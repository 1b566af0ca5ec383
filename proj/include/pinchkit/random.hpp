#pragma once

#include <cstdint>
#include <random>

namespace pinchkit {

/// splitmix64 finalizer; used to derive independent per-task seeds.
inline std::uint64_t mixSeed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t taskSeed(std::uint64_t global_seed, std::uint64_t task_index) {
  return mixSeed(mixSeed(global_seed) ^ (task_index * 0xd1b54a32d192ed03ULL));
}

/// mt19937_64 with distribution code kept in-house so streams are identical
/// across standard library implementations.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(mixSeed(seed)) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

private:
  std::mt19937_64 engine_;
};

}  // namespace pinchkit
