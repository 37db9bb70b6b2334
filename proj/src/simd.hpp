#pragma once

// 16-lane float vectors via GCC/Clang vector extensions. With AVX-512 each
// op is one instruction; narrower targets split it transparently.

#include <cstdint>
#include <cstring>

namespace colorctrl::simd {

typedef float f32x16 __attribute__((vector_size(64)));
typedef std::int32_t i32x16 __attribute__((vector_size(64)));

inline constexpr std::size_t kWidth = 16;

inline f32x16 load(const float* p) {
    f32x16 v;
    std::memcpy(&v, p, sizeof(v));
    return v;
}

inline void store(float* p, f32x16 v) { std::memcpy(p, &v, sizeof(v)); }

inline f32x16 splat(float x) { return f32x16{} + x; }

// Lane-wise twin of exp_approx(); keep the two expressions identical.
inline f32x16 exp(f32x16 x) {
    const f32x16 kLog2e = splat(1.44269504088896341f);
    const f32x16 kLn2Hi = splat(0.693359375f);
    const f32x16 kLn2Lo = splat(-2.12194440e-4f);
    const f32x16 kRound = splat(12582912.0f);
    const f32x16 lo = splat(-87.0f);
    const f32x16 hi = splat(88.0f);
    const i32x16 underflow = x < lo;
    x = x > hi ? hi : x;
    x = x < lo ? lo : x;
    const f32x16 n = (x * kLog2e + kRound) - kRound;
    const f32x16 r = (x - n * kLn2Hi) - n * kLn2Lo;
    f32x16 p = splat(1.0f / 720.0f);
    p = p * r + 1.0f / 120.0f;
    p = p * r + 1.0f / 24.0f;
    p = p * r + 1.0f / 6.0f;
    p = p * r + 0.5f;
    p = p * r + 1.0f;
    p = p * r + 1.0f;
    const i32x16 bits = (__builtin_convertvector(n, i32x16) + 127) << 23;
    f32x16 scale;
    std::memcpy(&scale, &bits, sizeof(scale));
    const f32x16 result = p * scale;
    return underflow ? f32x16{} : result;
}

inline f32x16 abs(f32x16 x) {
    i32x16 bits;
    std::memcpy(&bits, &x, sizeof(bits));
    bits &= 0x7fffffff;
    std::memcpy(&x, &bits, sizeof(x));
    return x;
}

// Lane-wise twin of gelu().
inline f32x16 gelu(f32x16 x) {
    const f32x16 u = 0.7978845608028654f * (x + 0.044715f * x * x * x);
    const f32x16 e = simd::exp(-2.0f * simd::abs(u));
    const f32x16 t = (1.0f - e) / (1.0f + e);
    const f32x16 signed_t = u < 0.0f ? -t : t;
    return 0.5f * x * (1.0f + signed_t);
}

}  // namespace colorctrl::simd
