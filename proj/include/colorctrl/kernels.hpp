#pragma once

// Numeric kernels in two flavours:
//   kernels::   OpenMP-parallel, cache-friendly loop orders (used by the model)
//   reference:: plain serial loops, kept as the test oracle
// Both accumulate every matmul output element in ascending k order, so with
// contraction disabled (-ffp-contract=off) they agree bit for bit. Row sums in
// softmax use a fixed 16-lane order (see softmax_row_sum) in both flavours.

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>

#include "colorctrl/tensor.hpp"

namespace colorctrl {

// exp(x) via Cody-Waite reduction and a degree-6 Taylor polynomial on
// [-ln2/2, ln2/2]. Relative error below 2e-7. Returns exactly 0 for x < -87,
// which is what makes masked key columns vanish from attention outputs.
// The vector kernels evaluate the same expression lane-wise, so scalar and
// vector results agree bit for bit.
inline float exp_approx(float x) {
    constexpr float kLog2e = 1.44269504088896341f;
    constexpr float kLn2Hi = 0.693359375f;
    constexpr float kLn2Lo = -2.12194440e-4f;
    constexpr float kRound = 12582912.0f;  // 1.5 * 2^23: adding and subtracting rounds to nearest
    const bool underflow = x < -87.0f;
    x = x > 88.0f ? 88.0f : x;
    x = x < -87.0f ? -87.0f : x;
    const float n = (x * kLog2e + kRound) - kRound;
    const float r = (x - n * kLn2Hi) - n * kLn2Lo;
    float p = 1.0f / 720.0f;
    p = p * r + 1.0f / 120.0f;
    p = p * r + 1.0f / 24.0f;
    p = p * r + 1.0f / 6.0f;
    p = p * r + 0.5f;
    p = p * r + 1.0f;
    p = p * r + 1.0f;
    const auto bits = static_cast<std::uint32_t>(static_cast<std::int32_t>(n) + 127) << 23;
    const float result = p * std::bit_cast<float>(bits);
    return underflow ? 0.0f : result;
}

// tanh-form GELU.
inline float gelu(float x) {
    constexpr float kC = 0.7978845608028654f;  // sqrt(2/pi)
    const float u = kC * (x + 0.044715f * x * x * x);
    const float e = exp_approx(-2.0f * std::fabs(u));
    const float t = (1.0f - e) / (1.0f + e);
    return 0.5f * x * (1.0f + (u < 0.0f ? -t : t));
}

inline float silu(float x) { return x / (1.0f + exp_approx(-x)); }

inline constexpr std::size_t kSumLanes = 16;

// Sum in the fixed order shared by all softmax implementations: lane l
// accumulates elements l, l+16, l+32, ... ascending, then lanes are added
// 0..15 in order.
inline float softmax_row_sum(std::span<const float> row) {
    float lanes[kSumLanes] = {};
    std::size_t j = 0;
    for (; j + kSumLanes <= row.size(); j += kSumLanes) {
        for (std::size_t l = 0; l < kSumLanes; ++l) lanes[l] += row[j + l];
    }
    for (std::size_t l = 0; j + l < row.size(); ++l) lanes[l] += row[j + l];
    float total = 0.0f;
    for (float v : lanes) total += v;
    return total;
}

namespace kernels {

Tensor2 matmul(const Tensor2& a, const Tensor2& b);
// out must already be a.rows() x b.cols(); it is overwritten.
void matmul_into(const Tensor2& a, const Tensor2& b, Tensor2& out);
// a * b^T without materialising the transpose in the caller.
Tensor2 matmul_bt(const Tensor2& a, const Tensor2& b);

void softmax_rows_inplace(Tensor2& s, float scale);
Tensor2 softmax_rows(const Tensor2& s, float scale);

void layer_norm_rows_inplace(Tensor2& x, float eps = 1e-6f);
void gelu_inplace(Tensor2& x);
void add_row_bias(Tensor2& x, std::span<const float> bias);

}  // namespace kernels

namespace reference {

Tensor2 matmul(const Tensor2& a, const Tensor2& b);
Tensor2 matmul_bt(const Tensor2& a, const Tensor2& b);
Tensor2 softmax_rows(const Tensor2& s, float scale);
Tensor2 layer_norm_rows(const Tensor2& x, float eps = 1e-6f);
Tensor2 gelu(const Tensor2& x);

}  // namespace reference

// Public entry points. Throw ShapeError on incompatible shapes.
inline Tensor2 matmul(const Tensor2& a, const Tensor2& b) { return kernels::matmul(a, b); }
inline Tensor2 softmax_rows(const Tensor2& s, float scale) { return kernels::softmax_rows(s, scale); }

}  // namespace colorctrl
