#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace colorctrl {

// Dense row-major matrix of 32-bit floats.
class Tensor2 {
public:
    Tensor2() = default;
    Tensor2(std::size_t rows, std::size_t cols, float fill = 0.0f);
    // Throws ShapeError when data.size() != rows * cols.
    Tensor2(std::size_t rows, std::size_t cols, std::vector<float> data);

    static Tensor2 from_rows(std::initializer_list<std::initializer_list<float>> rows);
    static Tensor2 identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    const std::vector<float>& values() const { return data_; }

    // Copies of a contiguous row range / column range.
    Tensor2 rows_slice(std::size_t begin, std::size_t end) const;
    Tensor2 cols_slice(std::size_t begin, std::size_t end) const;
    Tensor2 transposed() const;

    bool all_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> data_;
};

// Exact bit-pattern comparison (distinguishes -0.0f from 0.0f).
bool bitwise_equal(const Tensor2& a, const Tensor2& b);
bool bitwise_equal(std::span<const float> a, std::span<const float> b);

// Stacks b under a. Column counts must agree.
Tensor2 vstack(const Tensor2& a, const Tensor2& b);

// Height x width x channels, row-major; used for pixel-space latents.
struct Tensor3 {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<float> data;

    Tensor3() = default;
    Tensor3(std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f)
        : height(h), width(w), channels(c), data(h * w * c, fill) {}

    float& at(std::size_t y, std::size_t x, std::size_t c) { return data[(y * width + x) * channels + c]; }
    float at(std::size_t y, std::size_t x, std::size_t c) const { return data[(y * width + x) * channels + c]; }
    bool same_shape(const Tensor3& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

}  // namespace colorctrl
