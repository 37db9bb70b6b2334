#include <algorithm>
#include <cmath>
#include <string>

#include "colorctrl/errors.hpp"
#include "colorctrl/kernels.hpp"
#include "simd.hpp"

namespace colorctrl::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

void check_matmul(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
}

void softmax_row(float* row, std::size_t n, float scale) {
    // Max is exact, so the lane-parallel scan matches any serial order.
    float max_v = row[0];
    std::size_t j = 0;
    if (n >= simd::kWidth) {
        simd::f32x16 vm = simd::load(row);
        for (j = simd::kWidth; j + simd::kWidth <= n; j += simd::kWidth) {
            const simd::f32x16 v = simd::load(row + j);
            vm = v > vm ? v : vm;
        }
        for (std::size_t l = 0; l < simd::kWidth; ++l) max_v = vm[l] > max_v ? vm[l] : max_v;
    }
    for (; j < n; ++j) max_v = row[j] > max_v ? row[j] : max_v;
    j = 0;
    const simd::f32x16 vmax = simd::splat(max_v);
    for (; j + simd::kWidth <= n; j += simd::kWidth) {
        simd::store(row + j, simd::exp(scale * (simd::load(row + j) - vmax)));
    }
    for (; j < n; ++j) row[j] = exp_approx(scale * (row[j] - max_v));
    const float inv = 1.0f / softmax_row_sum({row, n});
    for (j = 0; j < n; ++j) row[j] *= inv;
}

// C[rows, cols] = A[rows, :] * B[:, cols] for a ROWS x (16 * VECS) tile held in
// registers. Each lane accumulates its own k terms in ascending order.
template <std::size_t ROWS, std::size_t VECS>
inline void tile(const float* a, std::size_t lda, const float* b, std::size_t ldb, float* c, std::size_t ldc,
                 std::size_t k_dim) {
    simd::f32x16 acc[ROWS][VECS] = {};
    for (std::size_t k = 0; k < k_dim; ++k) {
        simd::f32x16 bv[VECS];
        for (std::size_t v = 0; v < VECS; ++v) bv[v] = simd::load(b + k * ldb + v * simd::kWidth);
        for (std::size_t r = 0; r < ROWS; ++r) {
            const simd::f32x16 av = simd::splat(a[r * lda + k]);
            for (std::size_t v = 0; v < VECS; ++v) acc[r][v] += av * bv[v];
        }
    }
    for (std::size_t r = 0; r < ROWS; ++r) {
        for (std::size_t v = 0; v < VECS; ++v) simd::store(c + r * ldc + v * simd::kWidth, acc[r][v]);
    }
}

template <std::size_t ROWS>
void row_block(const float* a, std::size_t lda, const float* b, std::size_t n, float* c, std::size_t k_dim) {
    std::size_t j = 0;
    for (; j + 4 * simd::kWidth <= n; j += 4 * simd::kWidth) tile<ROWS, 4>(a, lda, b + j, n, c + j, n, k_dim);
    for (; j + simd::kWidth <= n; j += simd::kWidth) tile<ROWS, 1>(a, lda, b + j, n, c + j, n, k_dim);
    for (; j < n; ++j) {
        for (std::size_t r = 0; r < ROWS; ++r) {
            float acc = 0.0f;
            for (std::size_t k = 0; k < k_dim; ++k) acc += a[r * lda + k] * b[k * n + j];
            c[r * n + j] = acc;
        }
    }
}

}  // namespace

void matmul_into(const Tensor2& a, const Tensor2& b, Tensor2& out) {
    check_matmul(a, b);
    if (out.rows() != a.rows() || out.cols() != b.cols()) throw ShapeError("matmul_into: bad output shape");
    const std::size_t m = a.rows();
    const std::size_t k_dim = a.cols();
    const std::size_t n = b.cols();
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    float* pc = out.data().data();
    const bool parallel = m * k_dim * n >= kParallelWork;
    constexpr std::size_t kRows = 4;
    const auto blocks = static_cast<std::ptrdiff_t>((m + kRows - 1) / kRows);
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
        const std::size_t i = static_cast<std::size_t>(blk) * kRows;
        if (i + kRows <= m) {
            row_block<kRows>(pa + i * k_dim, k_dim, pb, n, pc + i * n, k_dim);
        } else {
            for (std::size_t r = i; r < m; ++r) row_block<1>(pa + r * k_dim, k_dim, pb, n, pc + r * n, k_dim);
        }
    }
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    check_matmul(a, b);
    Tensor2 out(a.rows(), b.cols());
    matmul_into(a, b, out);
    return out;
}

Tensor2 matmul_bt(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_bt: inner dimension mismatch");
    const Tensor2 bt = b.transposed();
    return kernels::matmul(a, bt);
}

void softmax_rows_inplace(Tensor2& s, float scale) {
    const std::size_t n = s.cols();
    if (n == 0) return;
    float* p = s.data().data();
    const bool parallel = s.size() >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(s.rows()); ++r) {
        softmax_row(p + static_cast<std::size_t>(r) * n, n, scale);
    }
}

Tensor2 softmax_rows(const Tensor2& s, float scale) {
    Tensor2 out = s;
    softmax_rows_inplace(out, scale);
    return out;
}

void layer_norm_rows_inplace(Tensor2& x, float eps) {
    const std::size_t n = x.cols();
    if (n == 0) return;
    float* p = x.data().data();
    const float inv_n = 1.0f / static_cast<float>(n);
#pragma omp parallel for schedule(static) if (x.size() >= kParallelWork)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(x.rows()); ++r) {
        float* row = p + static_cast<std::size_t>(r) * n;
        float mean = 0.0f;
        for (std::size_t j = 0; j < n; ++j) mean += row[j];
        mean *= inv_n;
        float var = 0.0f;
        for (std::size_t j = 0; j < n; ++j) {
            const float d = row[j] - mean;
            var += d * d;
        }
        var *= inv_n;
        const float inv = 1.0f / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) row[j] = (row[j] - mean) * inv;
    }
}

void gelu_inplace(Tensor2& x) {
    float* p = x.data().data();
    const auto n = static_cast<std::ptrdiff_t>(x.size());
    const std::ptrdiff_t vec_end = n - n % static_cast<std::ptrdiff_t>(simd::kWidth);
#pragma omp parallel for schedule(static) if (x.size() >= kParallelWork)
    for (std::ptrdiff_t i = 0; i < vec_end; i += static_cast<std::ptrdiff_t>(simd::kWidth)) {
        simd::store(p + i, simd::gelu(simd::load(p + i)));
    }
    for (std::ptrdiff_t i = vec_end; i < n; ++i) p[i] = gelu(p[i]);
}

void add_row_bias(Tensor2& x, std::span<const float> bias) {
    if (bias.size() != x.cols()) throw ShapeError("add_row_bias: bias length mismatch");
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias[j];
    }
}

}  // namespace colorctrl::kernels
