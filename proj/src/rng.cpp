#include "robust_sparse/rng.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace rs {

namespace {
constexpr uint32_t kMul0 = 0xD2511F53u;
constexpr uint32_t kMul1 = 0xCD9E8D57u;
constexpr uint32_t kWeyl0 = 0x9E3779B9u;
constexpr uint32_t kWeyl1 = 0xBB67AE85u;
constexpr uint32_t kFallbackTag = 0x80000000u;

inline void philox_round(uint32_t& c0, uint32_t& c1, uint32_t& c2, uint32_t& c3, uint32_t k0,
                         uint32_t k1) {
  uint64_t p0 = uint64_t(kMul0) * c0;
  uint64_t p1 = uint64_t(kMul1) * c2;
  uint32_t n0 = uint32_t(p1 >> 32) ^ c1 ^ k0;
  uint32_t n1 = uint32_t(p1);
  uint32_t n2 = uint32_t(p0 >> 32) ^ c3 ^ k1;
  uint32_t n3 = uint32_t(p0);
  c0 = n0;
  c1 = n1;
  c2 = n2;
  c3 = n3;
}
}  // namespace

PhiloxCounter philox4x32_10(PhiloxCounter c, PhiloxKey k) {
  uint32_t k0 = k[0], k1 = k[1];
  for (int r = 0; r < 10; ++r) {
    philox_round(c[0], c[1], c[2], c[3], k0, k1);
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  return c;
}

uint32_t Philox::next_u32() {
  if (avail_ == 0) {
    buf_ = philox4x32_10({uint32_t(block_), uint32_t(block_ >> 32), uint32_t(stream_),
                          uint32_t(stream_ >> 32)},
                         key_);
    ++block_;
    avail_ = 4;
  }
  return buf_[4 - avail_--];
}

uint64_t Philox::below(uint64_t m) {
  // Lemire's nearly-divisionless method on 64-bit words
  __uint128_t prod = __uint128_t(next_u64()) * m;
  uint64_t lo = uint64_t(prod);
  if (lo < m) {
    uint64_t t = (0 - m) % m;
    while (lo < t) {
      prod = __uint128_t(next_u64()) * m;
      lo = uint64_t(prod);
    }
  }
  return uint64_t(prod >> 64);
}

ZigguratTables::ZigguratTables() {
  const double m1 = 2147483648.0;
  const double vn = 9.91256303526217e-3;
  double dn = 3.442619855899, tn = dn;
  double q = vn / std::exp(-0.5 * dn * dn);
  kn[0] = uint32_t((dn / q) * m1);
  kn[1] = 0;
  wn[0] = q / m1;
  wn[127] = dn / m1;
  fn[0] = 1.0;
  fn[127] = std::exp(-0.5 * dn * dn);
  for (int i = 126; i >= 1; --i) {
    dn = std::sqrt(-2.0 * std::log(vn / dn + std::exp(-0.5 * dn * dn)));
    kn[i + 1] = uint32_t((dn / tn) * m1);
    tn = dn;
    fn[i] = std::exp(-0.5 * dn * dn);
    wn[i] = dn / m1;
  }
}

const ZigguratTables& ziggurat_tables() {
  static const ZigguratTables t;
  return t;
}

static inline uint32_t abs_hz(int32_t hz) {
  return hz < 0 ? uint32_t(-int64_t(hz)) : uint32_t(hz);
}

double ziggurat_slow(int32_t hz, uint32_t iz, Philox& more) {
  const ZigguratTables& t = ziggurat_tables();
  const double r = 3.442619855899;
  for (;;) {
    double x = hz * t.wn[iz];
    if (iz == 0) {
      double y;
      do {
        x = -std::log(more.uniform()) / r;
        y = -std::log(more.uniform());
      } while (y + y < x * x);
      return hz > 0 ? r + x : -r - x;
    }
    if (t.fn[iz] + more.uniform() * (t.fn[iz - 1] - t.fn[iz]) < std::exp(-0.5 * x * x)) return x;
    hz = int32_t(more.next_u32());
    iz = uint32_t(hz) & 127u;
    if (abs_hz(hz) < t.kn[iz]) return hz * t.wn[iz];
  }
}

double Philox::normal() {
  const ZigguratTables& t = ziggurat_tables();
  int32_t hz = int32_t(next_u32());
  uint32_t iz = uint32_t(hz) & 127u;
  if (abs_hz(hz) < t.kn[iz]) return hz * t.wn[iz];
  return ziggurat_slow(hz, iz, *this);
}

namespace {
inline double entry_from_word(uint32_t word, uint64_t seed, uint32_t tag, uint64_t row, int j) {
  const ZigguratTables& t = ziggurat_tables();
  int32_t hz = int32_t(word);
  uint32_t iz = uint32_t(hz) & 127u;
  if (abs_hz(hz) < t.kn[iz]) return hz * t.wn[iz];
  // private fallback stream for this grid cell
  uint64_t stream = (uint64_t(row) << 16) ^ uint64_t(uint32_t(j));
  Philox more(seed ^ 0x5851F42D4C957F2Dull, stream ^ (uint64_t(tag | kFallbackTag) << 48));
  return ziggurat_slow(hz, iz, more);
}
}  // namespace

// Entry j of a grid row is lane (j/16)%4 of Philox block (j/64)*16 + j%16, so a
// group of 64 consecutive entries is the four output words of 16 consecutive blocks.
static void row_words(uint64_t seed, uint32_t tag, uint64_t row, int groups, uint32_t* words) {
  const PhiloxKey key = key_from_seed(seed);
  const uint32_t rlo = uint32_t(row), rhi = uint32_t(row >> 32);
#if defined(__AVX512F__)
  const __m512i m0 = _mm512_set1_epi64(kMul0), m1 = _mm512_set1_epi64(kMul1);
  const __m512i iota = _mm512_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15);
  for (int g0 = 0; g0 < groups; g0 += 4) {
    const int nc = std::min(4, groups - g0);
    __m512i x0[4], x1[4], x2[4], x3[4];
    for (int c = 0; c < 4; ++c) {
      x0[c] = _mm512_set1_epi32(int(rlo));
      x1[c] = _mm512_set1_epi32(int(rhi));
      x2[c] = _mm512_add_epi32(_mm512_set1_epi32((g0 + c) * 16), iota);
      x3[c] = _mm512_set1_epi32(int(tag));
    }
    uint32_t k0 = key[0], k1 = key[1];
    for (int r = 0; r < 10; ++r) {
      const __m512i vk0 = _mm512_set1_epi32(int(k0)), vk1 = _mm512_set1_epi32(int(k1));
      for (int c = 0; c < 4; ++c) {
        __m512i p0e = _mm512_mul_epu32(x0[c], m0);
        __m512i p0o = _mm512_mul_epu32(_mm512_srli_epi64(x0[c], 32), m0);
        __m512i p1e = _mm512_mul_epu32(x2[c], m1);
        __m512i p1o = _mm512_mul_epu32(_mm512_srli_epi64(x2[c], 32), m1);
        __m512i hi0 = _mm512_mask_blend_epi32(0xAAAA, _mm512_srli_epi64(p0e, 32), p0o);
        __m512i lo0 = _mm512_mask_blend_epi32(0xAAAA, p0e, _mm512_slli_epi64(p0o, 32));
        __m512i hi1 = _mm512_mask_blend_epi32(0xAAAA, _mm512_srli_epi64(p1e, 32), p1o);
        __m512i lo1 = _mm512_mask_blend_epi32(0xAAAA, p1e, _mm512_slli_epi64(p1o, 32));
        x0[c] = _mm512_ternarylogic_epi32(hi1, x1[c], vk0, 0x96);
        x2[c] = _mm512_ternarylogic_epi32(hi0, x3[c], vk1, 0x96);
        x1[c] = lo1;
        x3[c] = lo0;
      }
      k0 += kWeyl0;
      k1 += kWeyl1;
    }
    for (int c = 0; c < nc; ++c) {
      uint32_t* w = words + 64 * (g0 + c);
      _mm512_storeu_si512(w, x0[c]);
      _mm512_storeu_si512(w + 16, x1[c]);
      _mm512_storeu_si512(w + 32, x2[c]);
      _mm512_storeu_si512(w + 48, x3[c]);
    }
  }
#else
  for (int g = 0; g < groups; ++g) {
    for (int b = 0; b < 16; ++b) {
      PhiloxCounter c = philox4x32_10({rlo, rhi, uint32_t(g * 16 + b), tag}, key);
      for (int l = 0; l < 4; ++l) words[64 * g + 16 * l + b] = c[l];
    }
  }
#endif
}

void fill_normal_row(uint64_t seed, uint32_t tag, uint64_t row, int d, double* out) {
  const int groups = (d + 63) / 64;
  thread_local std::vector<uint32_t> words;
  if (int(words.size()) < 64 * groups) words.resize(64 * groups);
  row_words(seed, tag, row, groups, words.data());
  const ZigguratTables& t = ziggurat_tables();
  int j = 0;
#if defined(__AVX512F__)
  const __m512i mask127 = _mm512_set1_epi32(127);
  for (; j + 16 <= d; j += 16) {
    __m512i hz = _mm512_loadu_si512(words.data() + j);
    __m512i iz = _mm512_and_si512(hz, mask127);
    __m512i kn = _mm512_i32gather_epi32(iz, reinterpret_cast<const int*>(t.kn), 4);
    __mmask16 bad = _mm512_cmpge_epu32_mask(_mm512_abs_epi32(hz), kn);
    __m512d wlo = _mm512_i32gather_pd(_mm512_castsi512_si256(iz), t.wn, 8);
    __m512d whi = _mm512_i32gather_pd(_mm512_extracti64x4_epi64(iz, 1), t.wn, 8);
    __m512d vlo = _mm512_mul_pd(_mm512_cvtepi32_pd(_mm512_castsi512_si256(hz)), wlo);
    __m512d vhi = _mm512_mul_pd(_mm512_cvtepi32_pd(_mm512_extracti64x4_epi64(hz, 1)), whi);
    _mm512_storeu_pd(out + j, vlo);
    _mm512_storeu_pd(out + j + 8, vhi);
    while (bad) {
      int l = __builtin_ctz(bad);
      bad &= bad - 1;
      out[j + l] = entry_from_word(words[j + l], seed, tag, row, j + l);
    }
  }
#endif
  for (; j < d; ++j) {
    int32_t hz = int32_t(words[j]);
    uint32_t iz = uint32_t(hz) & 127u;
    if (abs_hz(hz) < t.kn[iz])
      out[j] = hz * t.wn[iz];
    else
      out[j] = entry_from_word(words[j], seed, tag, row, j);
  }
}

double normal_at(uint64_t seed, uint32_t tag, uint64_t row, int j) {
  const uint32_t block = uint32_t(j / 64) * 16 + uint32_t(j % 16);
  PhiloxCounter c =
      philox4x32_10({uint32_t(row), uint32_t(row >> 32), block, tag}, key_from_seed(seed));
  return entry_from_word(c[(j / 16) % 4], seed, tag, row, j);
}

void fill_normal_entries(uint64_t seed, uint32_t tag, uint64_t row, const int* cols, int m,
                         double* out) {
#if defined(__AVX512F__)
  const PhiloxKey key = key_from_seed(seed);
  const __m512i m0 = _mm512_set1_epi64(kMul0), m1 = _mm512_set1_epi64(kMul1);
  const ZigguratTables& t = ziggurat_tables();
  alignas(64) int32_t blk[64], lane[64];
  alignas(64) uint32_t words[64];
  alignas(64) double tmp[64];
  for (int i = 0; i < m; i += 64) {
    const int cnt = std::min(64, m - i);
    const int nc = (cnt + 15) / 16;
    for (int l = 0; l < 16 * nc; ++l) {
      uint32_t j = l < cnt ? uint32_t(cols[i + l]) : 0u;
      blk[l] = int32_t((j >> 6) * 16 + (j & 15));
      lane[l] = int32_t((j >> 4) & 3);
    }
    __m512i x0[4], x1[4], x2[4], x3[4];
    for (int c = 0; c < 4; ++c) {
      x0[c] = _mm512_set1_epi32(int(uint32_t(row)));
      x1[c] = _mm512_set1_epi32(int(uint32_t(row >> 32)));
      x2[c] = _mm512_load_si512(blk + 16 * (c < nc ? c : 0));
      x3[c] = _mm512_set1_epi32(int(tag));
    }
    uint32_t k0 = key[0], k1 = key[1];
    for (int r = 0; r < 10; ++r) {
      const __m512i vk0 = _mm512_set1_epi32(int(k0)), vk1 = _mm512_set1_epi32(int(k1));
      for (int c = 0; c < 4; ++c) {
        __m512i p0e = _mm512_mul_epu32(x0[c], m0);
        __m512i p0o = _mm512_mul_epu32(_mm512_srli_epi64(x0[c], 32), m0);
        __m512i p1e = _mm512_mul_epu32(x2[c], m1);
        __m512i p1o = _mm512_mul_epu32(_mm512_srli_epi64(x2[c], 32), m1);
        __m512i hi0 = _mm512_mask_blend_epi32(0xAAAA, _mm512_srli_epi64(p0e, 32), p0o);
        __m512i lo0 = _mm512_mask_blend_epi32(0xAAAA, p0e, _mm512_slli_epi64(p0o, 32));
        __m512i hi1 = _mm512_mask_blend_epi32(0xAAAA, _mm512_srli_epi64(p1e, 32), p1o);
        __m512i lo1 = _mm512_mask_blend_epi32(0xAAAA, p1e, _mm512_slli_epi64(p1o, 32));
        x0[c] = _mm512_ternarylogic_epi32(hi1, x1[c], vk0, 0x96);
        x2[c] = _mm512_ternarylogic_epi32(hi0, x3[c], vk1, 0x96);
        x1[c] = lo1;
        x3[c] = lo0;
      }
      k0 += kWeyl0;
      k1 += kWeyl1;
    }
    for (int c = 0; c < nc; ++c) {
      __m512i ln = _mm512_load_si512(lane + 16 * c);
      __m512i w = x0[c];
      w = _mm512_mask_mov_epi32(w, _mm512_cmpeq_epi32_mask(ln, _mm512_set1_epi32(1)), x1[c]);
      w = _mm512_mask_mov_epi32(w, _mm512_cmpeq_epi32_mask(ln, _mm512_set1_epi32(2)), x2[c]);
      w = _mm512_mask_mov_epi32(w, _mm512_cmpeq_epi32_mask(ln, _mm512_set1_epi32(3)), x3[c]);
      _mm512_store_si512(words + 16 * c, w);
      __m512i iz = _mm512_and_si512(w, _mm512_set1_epi32(127));
      __m512d wlo = _mm512_i32gather_pd(_mm512_castsi512_si256(iz), t.wn, 8);
      __m512d whi = _mm512_i32gather_pd(_mm512_extracti64x4_epi64(iz, 1), t.wn, 8);
      _mm512_store_pd(tmp + 16 * c,
                      _mm512_mul_pd(_mm512_cvtepi32_pd(_mm512_castsi512_si256(w)), wlo));
      _mm512_store_pd(tmp + 16 * c + 8,
                      _mm512_mul_pd(_mm512_cvtepi32_pd(_mm512_extracti64x4_epi64(w, 1)), whi));
    }
    for (int l = 0; l < cnt; ++l) {
      int32_t hz = int32_t(words[l]);
      if (abs_hz(hz) >= t.kn[uint32_t(hz) & 127u])
        tmp[l] = entry_from_word(words[l], seed, tag, row, cols[i + l]);
    }
    std::copy(tmp, tmp + cnt, out + i);
  }
#else
  for (int i = 0; i < m; ++i) out[i] = normal_at(seed, tag, row, cols[i]);
#endif
}

double uniform_at(uint64_t seed, uint32_t tag, uint64_t row, uint32_t slot) {
  PhiloxCounter c = philox4x32_10(
      {uint32_t(row), uint32_t(row >> 32), 0xFFFF0000u | slot, tag}, key_from_seed(seed));
  return u64_to_open01((uint64_t(c[1]) << 32) | c[0]);
}

}  // namespace rs
