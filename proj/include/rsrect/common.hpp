#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace rsrect {

// Thread cap for parallel_for. 0 resets to hardware concurrency.
void set_max_threads(int n);
int max_threads();

// Chunk layout depends only on n, never on the thread count, so
// per-chunk reductions combined in chunk order are reproducible
// bit-for-bit at any parallelism level.
std::vector<std::pair<int64_t, int64_t>> parallel_chunks(int64_t n);

// Runs body(begin, end) over disjoint chunks of [0, n).
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body);

// Deterministic RNG: mt19937_64 engine with explicit mappings to
// floats so streams are identical across platforms and library
// versions (std distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // [0, 1), 53-bit resolution
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller, one spare cached
  double normal();

  uint32_t below(uint32_t n) { return n ? uint32_t(eng_() % n) : 0; }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Stable seed derivation for nested generators (dataset items etc.).
uint64_t mix_seed(uint64_t base, uint64_t a, uint64_t b = 0);

uint64_t fnv1a64(const void* data, size_t len);
uint64_t fnv1a64_file(const std::string& path);

}  // namespace rsrect
