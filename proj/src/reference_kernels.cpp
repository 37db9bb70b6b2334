#include <cmath>

#include "colorctrl/errors.hpp"
#include "colorctrl/kernels.hpp"

namespace colorctrl::reference {

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.rows()) throw ShapeError("reference::matmul: inner dimension mismatch");
    Tensor2 out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            float acc = 0.0f;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
            out(i, j) = acc;
        }
    }
    return out;
}

Tensor2 matmul_bt(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.cols()) throw ShapeError("reference::matmul_bt: inner dimension mismatch");
    Tensor2 out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            float acc = 0.0f;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(j, k);
            out(i, j) = acc;
        }
    }
    return out;
}

Tensor2 softmax_rows(const Tensor2& s, float scale) {
    Tensor2 out(s.rows(), s.cols());
    for (std::size_t i = 0; i < s.rows(); ++i) {
        float max_v = s(i, 0);
        for (std::size_t j = 1; j < s.cols(); ++j) max_v = s(i, j) > max_v ? s(i, j) : max_v;
        for (std::size_t j = 0; j < s.cols(); ++j) {
            out(i, j) = exp_approx(scale * (s(i, j) - max_v));
        }
        const float sum = softmax_row_sum(out.row(i));
        const float inv = 1.0f / sum;
        for (std::size_t j = 0; j < s.cols(); ++j) out(i, j) *= inv;
    }
    return out;
}

Tensor2 layer_norm_rows(const Tensor2& x, float eps) {
    Tensor2 out(x.rows(), x.cols());
    const float inv_n = 1.0f / static_cast<float>(x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        float mean = 0.0f;
        for (std::size_t j = 0; j < x.cols(); ++j) mean += x(i, j);
        mean *= inv_n;
        float var = 0.0f;
        for (std::size_t j = 0; j < x.cols(); ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
        var *= inv_n;
        const float inv = 1.0f / std::sqrt(var + eps);
        for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - mean) * inv;
    }
    return out;
}

Tensor2 gelu(const Tensor2& x) {
    Tensor2 out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = colorctrl::gelu(x.data()[i]);
    return out;
}

}  // namespace colorctrl::reference
