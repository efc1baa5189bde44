#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>

#if defined(__x86_64__) && defined(__GNUC__)
#include <immintrin.h>
#define STOCHPOOL_HAVE_X86_DISPATCH 1
#endif

namespace stochpool {

/// Philox4x32 with 10 rounds (Salmon et al., SC'11). Pure function of
/// (counter, key); every stream in the library is built on top of it.
inline std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                  std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kMulA = 0xD2511F53u;
  constexpr std::uint32_t kMulB = 0xCD9E8D57u;
  constexpr std::uint32_t kWeylA = 0x9E3779B9u;
  constexpr std::uint32_t kWeylB = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t prod_a = std::uint64_t{kMulA} * ctr[0];
    const std::uint64_t prod_b = std::uint64_t{kMulB} * ctr[2];
    const auto hi_a = static_cast<std::uint32_t>(prod_a >> 32);
    const auto lo_a = static_cast<std::uint32_t>(prod_a);
    const auto hi_b = static_cast<std::uint32_t>(prod_b >> 32);
    const auto lo_b = static_cast<std::uint32_t>(prod_b);
    ctr = {hi_b ^ ctr[1] ^ key[0], lo_b, hi_a ^ ctr[3] ^ key[1], lo_a};
    key[0] += kWeylA;
    key[1] += kWeylB;
  }
  return ctr;
}

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Ziggurat tables for the standard normal (128 layers, Doornik's layout).
struct ZigguratTables {
  static constexpr int kLayers = 128;
  static constexpr double kTailStart = 3.442619855899;
  static constexpr double kLayerArea = 9.91256303526217e-3;
  std::array<double, kLayers + 1> x{};
  std::array<double, kLayers> ratio{};
  // Fast-path forms for a 24-bit abscissa m: accept when m < accept_below,
  // value m * x_scaled.
  std::array<std::uint32_t, kLayers> accept_below{};
  std::array<double, kLayers> x_scaled{};

  ZigguratTables() {
    double f = std::exp(-0.5 * kTailStart * kTailStart);
    x[0] = kLayerArea / f;
    x[1] = kTailStart;
    x[kLayers] = 0.0;
    for (int i = 2; i < kLayers; ++i) {
      x[i] = std::sqrt(-2.0 * std::log(kLayerArea / x[i - 1] + f));
      f = std::exp(-0.5 * x[i] * x[i]);
    }
    for (int i = 0; i < kLayers; ++i) {
      ratio[i] = x[i + 1] / x[i];
      // m * 2^-24 < ratio  <=>  m < ceil(ratio * 2^24), exact for these magnitudes
      accept_below[i] = static_cast<std::uint32_t>(std::ceil(ratio[i] * 0x1.0p24));
      x_scaled[i] = x[i] * 0x1.0p-24;
    }
  }
};

/// Philox refill implementation: -1 picks the widest the CPU supports,
/// 0 forces scalar, 1 AVX2, 2 AVX-512. All produce identical draws; tests
/// use this to compare them.
inline int& simd_level_override() {
  static int level = -1;
  return level;
}

inline const ZigguratTables kZigguratTables{};

inline const ZigguratTables& ziggurat_tables() { return kZigguratTables; }

}  // namespace detail

/// A reproducible random stream keyed by (seed, stream_id). Draw `i` of a
/// stream is a pure function of (seed, stream_id, i): Philox is evaluated at
/// counter (i / 2, stream_id) with the seed as key. Copying a stream copies its
/// position, so a copy replays the same draws.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
      : seed_(seed), stream_id_(stream_id) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  /// Number of 64-bit draws consumed so far (a pending 32-bit half counts
  /// as consumed).
  std::uint64_t draws() const { return position_; }

  /// Draw `index` of stream (seed, stream_id) without touching any state.
  static std::uint64_t bits_at(std::uint64_t seed, std::uint64_t stream_id,
                               std::uint64_t index) {
    const std::uint64_t block = index >> 1;
    const auto out = philox4x32_10(
        {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
         static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)},
        {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
    const std::size_t lane = (index & 1u) * 2;
    return std::uint64_t{out[lane]} | (std::uint64_t{out[lane + 1]} << 32);
  }

  std::uint64_t next_u64() {
    const std::uint64_t base = position_ & ~std::uint64_t{kBufferDraws - 1};
    if (!cache_valid_ || cached_base_ != base) refill(base);
    return cache_[position_++ & (kBufferDraws - 1)];
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1]; safe to pass to log().
  double uniform_open_zero() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound) by Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next_u64();
      __extension__ using u128 = unsigned __int128;
      const u128 m = static_cast<u128>(r) * bound;
      if (static_cast<std::uint64_t>(m) >= threshold) {
        return static_cast<std::uint64_t>(m >> 64);
      }
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// 32 random bits; each 64-bit draw is consumed as its low half, then its
  /// high half.
  std::uint32_t next_u32() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const std::uint64_t bits = next_u64();
    spare_ = static_cast<std::uint32_t>(bits >> 32);
    has_spare_ = true;
    return static_cast<std::uint32_t>(bits);
  }

  /// Standard normal via a 128-layer ziggurat on 32-bit words: 7 bits pick
  /// the layer, 1 bit the sign, 24 bits the abscissa. Wedge and tail
  /// rejections draw full 64-bit uniforms.
  double normal() {
    const std::uint32_t bits = next_u32();
    double value;
    return zig_fast(bits, value) ? value : zig_slow(bits);
  }

  /// Independent child stream identified by `index`; does not advance this one.
  RngStream substream(std::uint64_t index) const {
    return RngStream(seed_, detail::mix64(stream_id_ ^ detail::mix64(index + 0x5851F42D4C957F2Dull)));
  }

  /// Consumes one draw and returns a fresh stream keyed by it. Operators that
  /// need many per-sample streams call this once per invocation, so repeated
  /// calls with the same caller stream see new randomness.
  RngStream split() { return RngStream(seed_, detail::mix64(next_u64() ^ stream_id_)); }

  /// Same values and stream position as calling normal() out.size() times.
  void fill_normal(std::span<double> out) {
    std::size_t i = 0;
    const std::size_t n = out.size();
    while (i < n) {
      if (has_spare_ || i + 1 == n) {
        out[i++] = normal();
        continue;
      }
      const std::uint64_t bits = next_u64();
      const auto lo = static_cast<std::uint32_t>(bits);
      const auto hi = static_cast<std::uint32_t>(bits >> 32);
      double value;
      if (!zig_fast(lo, value)) {
        spare_ = hi;
        has_spare_ = true;
        out[i++] = zig_slow(lo);
        continue;
      }
      out[i++] = value;
      out[i++] = zig_fast(hi, value) ? value : zig_slow(hi);
    }
  }

 private:
  static bool zig_fast(std::uint32_t bits, double& value) {
    const auto& zig = detail::kZigguratTables;
    const auto layer = bits & 0x7Fu;
    const std::uint32_t m = bits >> 8;
    // Bit 7 goes straight to the IEEE sign bit; a branch here would
    // mispredict half the time.
    const std::uint64_t sign = std::uint64_t{bits & 0x80u} << 56;
    value = std::bit_cast<double>(
        std::bit_cast<std::uint64_t>(static_cast<double>(static_cast<std::int32_t>(m)) * zig.x_scaled[layer]) ^
        sign);
    return m < zig.accept_below[layer];
  }

  __attribute__((noinline)) double zig_slow(std::uint32_t bits) {
    const auto& zig = detail::ziggurat_tables();
    const auto layer = static_cast<int>(bits & 0x7Fu);
    const bool negative = (bits & 0x80u) != 0;
    if (layer == 0) return tail(negative);
    const double x = static_cast<double>(bits >> 8) * 0x1.0p-24 * zig.x[layer];
    const double f0 = std::exp(-0.5 * (zig.x[layer] * zig.x[layer] - x * x));
    const double f1 = std::exp(-0.5 * (zig.x[layer + 1] * zig.x[layer + 1] - x * x));
    if (f1 + uniform() * (f0 - f1) < 1.0) return negative ? -x : x;
    return normal();
  }

  double tail(bool negative) {
    constexpr double r = detail::ZigguratTables::kTailStart;
    double x;
    double y;
    do {
      x = std::log(uniform_open_zero()) / r;
      y = std::log(uniform_open_zero());
    } while (-2.0 * y < x * x);
    return negative ? x - r : r - x;
  }

  static constexpr std::size_t kBlocks = 32;
  static constexpr std::size_t kBufferDraws = 2 * kBlocks;

  static int simd_level() {
#ifdef STOCHPOOL_HAVE_X86_DISPATCH
    static const int supported = __builtin_cpu_supports("avx512f") ? 2
                                 : __builtin_cpu_supports("avx2")  ? 1
                                                                   : 0;
    const int forced = detail::simd_level_override();
    return forced < 0 ? supported : std::min(forced, supported);
#else
    return 0;
#endif
  }

  __attribute__((noinline)) void refill(std::uint64_t base) {
#ifdef STOCHPOOL_HAVE_X86_DISPATCH
    const int level = simd_level();
    if (level == 2) {
      refill_avx512(base);
    } else if (level == 1) {
      refill_avx2(base);
    } else {
      refill_scalar(base);
    }
#else
    refill_scalar(base);
#endif
    cached_base_ = base;
    cache_valid_ = true;
  }


  void refill_scalar(std::uint64_t base) {
    const std::uint64_t first_block = base >> 1;
    const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed_),
                                           static_cast<std::uint32_t>(seed_ >> 32)};
    for (std::size_t i = 0; i < kBlocks; ++i) {
      const std::uint64_t block = first_block + i;
      const auto out = philox4x32_10(
          {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
           static_cast<std::uint32_t>(stream_id_), static_cast<std::uint32_t>(stream_id_ >> 32)},
          key);
      cache_[2 * i] = std::uint64_t{out[0]} | (std::uint64_t{out[1]} << 32);
      cache_[2 * i + 1] = std::uint64_t{out[2]} | (std::uint64_t{out[3]} << 32);
    }
  }

#ifdef STOCHPOOL_HAVE_X86_DISPATCH
  // Same values as refill_scalar; four counters per vector, four vectors in
  // flight. Each 64-bit lane carries one 32-bit Philox word in its low half.
  __attribute__((target("avx2"))) void refill_avx2(std::uint64_t base) {
    constexpr int kVectors = kBlocks / 4;
    const std::uint64_t first_block = base >> 1;
    const __m256i low_mask = _mm256_set1_epi64x(0xFFFFFFFFll);
    const __m256i mul_a = _mm256_set1_epi64x(0xD2511F53ll);
    const __m256i mul_b = _mm256_set1_epi64x(0xCD9E8D57ll);
    __m256i c0[kVectors], c1[kVectors], c2[kVectors], c3[kVectors];
    for (int v = 0; v < kVectors; ++v) {
      const std::uint64_t b0 = first_block + 4 * static_cast<std::uint64_t>(v);
      const __m256i blocks = _mm256_setr_epi64x(static_cast<long long>(b0), static_cast<long long>(b0 + 1),
                                                static_cast<long long>(b0 + 2), static_cast<long long>(b0 + 3));
      c0[v] = _mm256_and_si256(blocks, low_mask);
      c1[v] = _mm256_srli_epi64(blocks, 32);
      c2[v] = _mm256_set1_epi64x(static_cast<long long>(stream_id_ & 0xFFFFFFFFu));
      c3[v] = _mm256_set1_epi64x(static_cast<long long>(stream_id_ >> 32));
    }
    std::uint32_t k0 = static_cast<std::uint32_t>(seed_);
    std::uint32_t k1 = static_cast<std::uint32_t>(seed_ >> 32);
    for (int round = 0; round < 10; ++round) {
      const __m256i key0 = _mm256_set1_epi64x(k0);
      const __m256i key1 = _mm256_set1_epi64x(k1);
      for (int v = 0; v < kVectors; ++v) {
        const __m256i prod_a = _mm256_mul_epu32(c0[v], mul_a);
        const __m256i prod_b = _mm256_mul_epu32(c2[v], mul_b);
        const __m256i n0 = _mm256_xor_si256(_mm256_xor_si256(_mm256_srli_epi64(prod_b, 32), c1[v]), key0);
        const __m256i n2 = _mm256_xor_si256(_mm256_xor_si256(_mm256_srli_epi64(prod_a, 32), c3[v]), key1);
        c1[v] = _mm256_and_si256(prod_b, low_mask);
        c3[v] = _mm256_and_si256(prod_a, low_mask);
        c0[v] = n0;
        c2[v] = n2;
      }
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    for (int v = 0; v < kVectors; ++v) {
      alignas(32) std::uint64_t w0[4], w1[4], w2[4], w3[4];
      _mm256_store_si256(reinterpret_cast<__m256i*>(w0), c0[v]);
      _mm256_store_si256(reinterpret_cast<__m256i*>(w1), c1[v]);
      _mm256_store_si256(reinterpret_cast<__m256i*>(w2), c2[v]);
      _mm256_store_si256(reinterpret_cast<__m256i*>(w3), c3[v]);
      for (int lane = 0; lane < 4; ++lane) {
        const std::size_t i = 4 * static_cast<std::size_t>(v) + lane;
        cache_[2 * i] = (w0[lane] & 0xFFFFFFFFu) | (w1[lane] << 32);
        cache_[2 * i + 1] = (w2[lane] & 0xFFFFFFFFu) | (w3[lane] << 32);
      }
    }
  }

  __attribute__((target("avx512f"))) void refill_avx512(std::uint64_t base) {
    constexpr int kVectors = kBlocks / 8;
    const std::uint64_t first_block = base >> 1;
    const __m512i low_mask = _mm512_set1_epi64(0xFFFFFFFFll);
    const __m512i mul_a = _mm512_set1_epi64(0xD2511F53ll);
    const __m512i mul_b = _mm512_set1_epi64(0xCD9E8D57ll);
    const __m512i lane_offsets = _mm512_setr_epi64(0, 1, 2, 3, 4, 5, 6, 7);
    __m512i c0[kVectors], c1[kVectors], c2[kVectors], c3[kVectors];
    for (int v = 0; v < kVectors; ++v) {
      const __m512i blocks = _mm512_add_epi64(
          _mm512_set1_epi64(static_cast<long long>(first_block + 8 * static_cast<std::uint64_t>(v))),
          lane_offsets);
      c0[v] = _mm512_and_si512(blocks, low_mask);
      c1[v] = _mm512_srli_epi64(blocks, 32);
      c2[v] = _mm512_set1_epi64(static_cast<long long>(stream_id_ & 0xFFFFFFFFu));
      c3[v] = _mm512_set1_epi64(static_cast<long long>(stream_id_ >> 32));
    }
    std::uint32_t k0 = static_cast<std::uint32_t>(seed_);
    std::uint32_t k1 = static_cast<std::uint32_t>(seed_ >> 32);
    for (int round = 0; round < 10; ++round) {
      const __m512i key0 = _mm512_set1_epi64(k0);
      const __m512i key1 = _mm512_set1_epi64(k1);
      for (int v = 0; v < kVectors; ++v) {
        const __m512i prod_a = _mm512_mul_epu32(c0[v], mul_a);
        const __m512i prod_b = _mm512_mul_epu32(c2[v], mul_b);
        const __m512i n0 = _mm512_xor_si512(_mm512_xor_si512(_mm512_srli_epi64(prod_b, 32), c1[v]), key0);
        const __m512i n2 = _mm512_xor_si512(_mm512_xor_si512(_mm512_srli_epi64(prod_a, 32), c3[v]), key1);
        c1[v] = prod_b;  // high halves are ignored by the next multiply and masked below
        c3[v] = prod_a;
        c0[v] = n0;
        c2[v] = n2;
      }
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    for (int v = 0; v < kVectors; ++v) {
      const __m512i w01 = _mm512_or_si512(_mm512_and_si512(c0[v], low_mask), _mm512_slli_epi64(c1[v], 32));
      const __m512i w23 = _mm512_or_si512(_mm512_and_si512(c2[v], low_mask), _mm512_slli_epi64(c3[v], 32));
      // Interleave to cache order: block i -> draws 2i (words 0,1) and 2i+1 (words 2,3).
      const __m512i even = _mm512_setr_epi64(0, 8, 1, 9, 2, 10, 3, 11);
      const __m512i odd = _mm512_setr_epi64(4, 12, 5, 13, 6, 14, 7, 15);
      _mm512_storeu_si512(&cache_[16 * static_cast<std::size_t>(v)], _mm512_permutex2var_epi64(w01, even, w23));
      _mm512_storeu_si512(&cache_[16 * static_cast<std::size_t>(v) + 8], _mm512_permutex2var_epi64(w01, odd, w23));
    }
  }
#endif

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t position_ = 0;
  std::uint64_t cached_base_ = 0;
  bool cache_valid_ = false;
  bool has_spare_ = false;
  std::uint32_t spare_ = 0;
  std::array<std::uint64_t, kBufferDraws> cache_{};
};

}  // namespace stochpool
