#pragma once

// Shared by the unit tests and the acceptance binary: a tiny seeded generator
// for property tests, brute-force oracles that share no code with the
// library's implementations, and small model configs that run in
// milliseconds.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "colorctrl/attention_control.hpp"
#include "colorctrl/config.hpp"
#include "colorctrl/image.hpp"
#include "colorctrl/model.hpp"
#include "colorctrl/rng.hpp"
#include "colorctrl/tensor.hpp"

namespace testing {

using namespace colorctrl;

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    // Inclusive range.
    std::size_t size(std::size_t lo, std::size_t hi) { return lo + rng_.next_u64() % (hi - lo + 1); }
    double unit() { return rng_.next_unit(); }
    float uniform(float lo, float hi) { return lo + static_cast<float>(unit()) * (hi - lo); }
    bool coin(double p = 0.5) { return unit() < p; }
    std::uint8_t byte() { return static_cast<std::uint8_t>(rng_.next_u64() & 0xff); }

    Tensor2 tensor(std::size_t r, std::size_t c, float stddev = 1.0f);
    // Each row a random softmax, so rows sum to one.
    Tensor2 stochastic(std::size_t n);
    std::vector<std::uint8_t> bits(std::size_t n, double p = 0.5);
    BinaryRaster raster(std::size_t w, std::size_t h, double p = 0.5);
    ImageBuffer image(std::size_t w, std::size_t h, std::size_t c);
    std::vector<float> scores01(std::size_t n);
    std::string prompt(std::size_t min_words, std::size_t max_words);

    Rng& rng() { return rng_; }

private:
    Rng rng_;
};

// Model small enough for exhaustive tests: 8x8 image, 16 vision tokens.
ModelConfig tiny_config();
// Grid with n_vision tokens (a perfect square), patch 2, for mask tests.
ModelConfig grid_config(std::size_t grid);

namespace oracle {

// Float accumulation in ascending k, the library's documented order.
Tensor2 matmul(const Tensor2& a, const Tensor2& b);
Tensor2 softmax(const Tensor2& s, float scale);

Tensor2 structure_preserve(const Tensor2& src, const Tensor2& tgt, std::size_t n_text);
Tensor2 color_preserve(const Tensor2& v_src, const Tensor2& v_tgt, std::span<const std::uint8_t> mask);
std::vector<std::uint8_t> binarize(std::span<const float> scores, float eps);
// Looks at every cell of the (2r+1)^2 window directly.
BinaryRaster dilate(const BinaryRaster& m, std::size_t r);
Tensor2 reweight(const Tensor2& scores, std::span<const std::size_t> rows, float scale, std::size_t n_text);
BinaryRaster upsample(std::span<const std::uint8_t> tokens, std::size_t grid, std::size_t patch);

struct JointOut {
    Tensor2 out_text;
    Tensor2 out_vision;
    Tensor2 map;
};
// One head of joint attention written as a single triple loop per product.
JointOut joint_attention(const Tensor2& x_text, const Tensor2& x_vision, const Linear& text_qkv,
                         const Linear& vision_qkv, std::size_t head, std::size_t n_heads,
                         std::span<const float> key_bias);

// Direct windowed SSIM in double: every window's Gaussian sums from scratch.
double ssim_bruteforce(const ImageBuffer& a, const ImageBuffer& b, std::size_t window = 11, double sigma = 1.5);

// 10 log10(255^2 / d^2) for two flat images differing by d everywhere.
double psnr_flat(double d);

}  // namespace oracle

// Random linear layer (in x out), non-zero bias.
Linear random_linear(Gen& g, std::size_t in, std::size_t out);

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);
std::string read_file(const std::filesystem::path& p);

}  // namespace testing
