// random.hpp - deterministic random stream used by the generator, k-means and SVM.
// splitmix64 core with hand-rolled conversions so that sequences are identical
// across platforms and standard-library implementations.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace pqap {

class RandomStream {
public:
  explicit RandomStream(std::uint64_t seed)
      : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  int uniform_int(int n) {
    return n > 0 ? int(next_u64() % std::uint64_t(n)) : 0;
  }

  // standard normal via Box-Muller; the second draw is cached
  double normal() {
    if (has_cache_) {
      has_cache_ = false;
      return cache_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cache_ = r * std::sin(a);
    has_cache_ = true;
    return r * std::cos(a);
  }

  // first k entries of a random permutation of [0, n)
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    for (int i = 0; i < k; ++i) {
      int j = i + uniform_int(n - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

  void shuffle(std::vector<int>& v) {
    for (int i = int(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[i], v[j]);
    }
  }

private:
  std::uint64_t state_;
  double cache_ = 0.0;
  bool has_cache_ = false;
};

}  // namespace pqap
