#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

namespace uil {

// Deterministic generator used everywhere randomness is needed. splitmix64 is
// stable across platforms, unlike the std:: distributions, which are allowed
// to vary between standard library implementations.
struct Rng {
  uint64_t state;

  explicit Rng(uint64_t seed) : state(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) { return lo + uniform_int(hi - lo + 1); }

  bool bernoulli(double p) { return uniform() < p; }

  // In-place Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[i], v[j]);
    }
  }

  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    shuffle(p);
    return p;
  }

  // Derive an independent stream; mixing a label keeps sub-streams decoupled
  // from the draw order of the parent.
  Rng fork(uint64_t label) {
    uint64_t z = next_u64();
    return Rng(z ^ (label * 0xd1342543de82ef95ull + 0x2545f4914f6cdd1dull));
  }
};

}  // namespace uil
