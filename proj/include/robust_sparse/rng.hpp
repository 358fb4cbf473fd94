#pragma once

#include <array>
#include <cstdint>

namespace rs {

// Philox4x32-10 (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
// Every random quantity in the library is a pure function of (seed, counter),
// so rows of a synthetic dataset can be regenerated in any order.
using PhiloxCounter = std::array<uint32_t, 4>;
using PhiloxKey = std::array<uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key);

inline PhiloxKey key_from_seed(uint64_t seed) {
  return {static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)};
}

// 53-bit uniform on the open interval (0,1).
inline double u64_to_open01(uint64_t u) {
  return (static_cast<double>(u >> 11) + 0.5) * 0x1p-53;
}

// Sequential stream: counter = (block index lo, block index hi, stream lo, stream hi).
class Philox {
 public:
  Philox(uint64_t seed, uint64_t stream) : key_(key_from_seed(seed)), stream_(stream) {}

  uint32_t next_u32();
  uint64_t next_u64() {
    uint64_t lo = next_u32();
    return (static_cast<uint64_t>(next_u32()) << 32) | lo;
  }
  double uniform() { return u64_to_open01(next_u64()); }
  double normal();
  // integer in [0, m)
  uint64_t below(uint64_t m);

 private:
  PhiloxKey key_;
  uint64_t stream_;
  uint64_t block_ = 0;
  PhiloxCounter buf_{};
  int avail_ = 0;
};

// Marsaglia & Tsang (2000) ziggurat with 128 layers driven by one 32-bit word.
// The rare rejection branch pulls extra words from `more`.
struct ZigguratTables {
  uint32_t kn[128];
  double wn[128];
  double fn[128];
  ZigguratTables();
};
const ZigguratTables& ziggurat_tables();

double ziggurat_slow(int32_t hz, uint32_t iz, Philox& more);

// Standard normal z[row][j] of a 2-D counter grid identified by (seed, tag).
// fill_normal_row writes z[row][0..d) and agrees entry-for-entry with normal_at.
void fill_normal_row(uint64_t seed, uint32_t tag, uint64_t row, int d, double* out);
double normal_at(uint64_t seed, uint32_t tag, uint64_t row, int j);
// z[row][cols[i]] for i < m
void fill_normal_entries(uint64_t seed, uint32_t tag, uint64_t row, const int* cols, int m,
                         double* out);
// uniform u[row] in (0,1) for per-row decisions (mixture label, cluster pick, ...)
double uniform_at(uint64_t seed, uint32_t tag, uint64_t row, uint32_t slot = 0);

}  // namespace rs
