#include "rsrect/common.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace rsrect {

namespace {
int g_max_threads = 0;  // 0 = not yet resolved

int resolve_threads() {
  if (g_max_threads > 0) return g_max_threads;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : int(hw);
}
}  // namespace

void set_max_threads(int n) { g_max_threads = n > 0 ? n : 0; }

int max_threads() { return resolve_threads(); }

std::vector<std::pair<int64_t, int64_t>> parallel_chunks(int64_t n) {
  std::vector<std::pair<int64_t, int64_t>> out;
  if (n <= 0) return out;
  // grain chosen from n alone
  int64_t chunks = n < 64 ? n : 64;
  int64_t sz = (n + chunks - 1) / chunks;
  for (int64_t b = 0; b < n; b += sz) {
    out.emplace_back(b, std::min(n, b + sz));
  }
  return out;
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body) {
  if (n <= 0) return;
  int nthreads = resolve_threads();
  if (nthreads <= 1 || n < 2) {
    body(0, n);
    return;
  }
  auto chunks = parallel_chunks(n);
  if (chunks.size() == 1) {
    body(chunks[0].first, chunks[0].second);
    return;
  }
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      size_t k = next.fetch_add(1);
      if (k >= chunks.size()) break;
      body(chunks[k].first, chunks[k].second);
    }
  };
  int spawn = int(std::min<size_t>(size_t(nthreads), chunks.size())) - 1;
  std::vector<std::thread> pool;
  pool.reserve(spawn);
  for (int i = 0; i < spawn; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = 0.0, u2 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  u2 = uniform();
  double mag = std::sqrt(-2.0 * std::log(u1));
  double z0 = mag * std::cos(2.0 * M_PI * u2);
  spare_ = mag * std::sin(2.0 * M_PI * u2);
  have_spare_ = true;
  return z0;
}

uint64_t mix_seed(uint64_t base, uint64_t a, uint64_t b) {
  // splitmix64 finalizer over a simple combination
  uint64_t z = base + 0x9E3779B97F4A7C15ull * (a + 1) + 0xBF58476D1CE4E5B9ull * (b + 1);
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

uint64_t fnv1a64(const void* data, size_t len) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for hashing: " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= uint8_t(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

}  // namespace rsrect
