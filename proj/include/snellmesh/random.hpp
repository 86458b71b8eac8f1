#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace snell {

// splitmix64 finalizer; used only to derive independent seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Random stream owned by one consumer. Not thread-safe; give each thread its own.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // 53-bit uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() { return normal_(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

enum class Phase : std::uint64_t { init = 1, selection = 2, mutation = 3, perturbation = 4 };

// Seed policy: master seed -> per-run seed -> one stream per (time step, phase).
// Changing N never reorders draws across steps.
inline std::uint64_t run_seed(std::uint64_t master, std::uint64_t run) {
  return mix_seed(master ^ 0x5eed5eed5eed5eedULL, run);
}

inline Stream step_stream(std::uint64_t seed, std::size_t step, Phase phase) {
  return Stream(mix_seed(mix_seed(seed, static_cast<std::uint64_t>(phase)), step));
}

}  // namespace snell
