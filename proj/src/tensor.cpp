#include "colorctrl/tensor.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "colorctrl/errors.hpp"

namespace colorctrl {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, float fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Tensor2 Tensor2::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<float> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged rows in Tensor2::from_rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor2(r, c, std::move(data));
}

Tensor2 Tensor2::identity(std::size_t n) {
    Tensor2 t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0f;
    return t;
}

Tensor2 Tensor2::rows_slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > rows_) throw ShapeError("row slice out of range");
    std::vector<float> out(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
                           data_.begin() + static_cast<std::ptrdiff_t>(end * cols_));
    return Tensor2(end - begin, cols_, std::move(out));
}

Tensor2 Tensor2::cols_slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > cols_) throw ShapeError("column slice out of range");
    Tensor2 out(rows_, end - begin);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = (*this)(r, c);
    }
    return out;
}

Tensor2 Tensor2::transposed() const {
    Tensor2 out(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
    }
    return out;
}

bool Tensor2::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

bool bitwise_equal(std::span<const float> a, std::span<const float> b) {
    return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

bool bitwise_equal(const Tensor2& a, const Tensor2& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && bitwise_equal(a.data(), b.data());
}

Tensor2 vstack(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.cols()) throw ShapeError("vstack: column mismatch");
    std::vector<float> data;
    data.reserve(a.size() + b.size());
    data.insert(data.end(), a.values().begin(), a.values().end());
    data.insert(data.end(), b.values().begin(), b.values().end());
    return Tensor2(a.rows() + b.rows(), a.cols(), std::move(data));
}

}  // namespace colorctrl
