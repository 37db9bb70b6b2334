#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "colorctrl/kernels.hpp"

namespace testing {

Tensor2 Gen::tensor(std::size_t r, std::size_t c, float stddev) {
    return Tensor2(r, c, seeded_normal(rng_, r * c, 0.0f, stddev));
}

Tensor2 Gen::stochastic(std::size_t n) {
    Tensor2 m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        std::vector<double> row(n);
        for (auto& v : row) sum += (v = std::exp(3.0 * (unit() - 0.5)));
        for (std::size_t j = 0; j < n; ++j) m(i, j) = static_cast<float>(row[j] / sum);
    }
    return m;
}

std::vector<std::uint8_t> Gen::bits(std::size_t n, double p) {
    std::vector<std::uint8_t> out(n);
    for (auto& b : out) b = coin(p) ? 1 : 0;
    return out;
}

BinaryRaster Gen::raster(std::size_t w, std::size_t h, double p) {
    BinaryRaster r(w, h);
    r.data = bits(w * h, p);
    return r;
}

ImageBuffer Gen::image(std::size_t w, std::size_t h, std::size_t c) {
    ImageBuffer img(w, h, c);
    for (auto& v : img.data) v = byte();
    return img;
}

std::vector<float> Gen::scores01(std::size_t n) {
    std::vector<float> out(n);
    for (auto& v : out) v = static_cast<float>(unit());
    // Pin the extremes so the vector looks like a min-max normalised one.
    if (n >= 2) {
        out[size(0, n - 1)] = 0.0f;
        out[size(0, n - 1)] = 1.0f;
    }
    return out;
}

std::string Gen::prompt(std::size_t min_words, std::size_t max_words) {
    static const char* kWords[] = {"a",     "the",   "red",    "small", "fox",    "car",    "house", "on",
                                   "under", "green", "bright", "cat",   "garden", "street", "old",   "blue",
                                   "tree",  "lamp",  "in",     "snow",  "wooden", "table",  "with",  "sky"};
    const std::size_t n = size(min_words, max_words);
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += kWords[size(0, std::size(kWords) - 1)];
    }
    return out;
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.image_size = 8;
    c.patch = 2;
    c.n_text = 6;
    c.d_model = 16;
    c.n_heads = 2;
    c.n_layers = 2;
    c.mlp_ratio = 2;
    c.vocab_size = 257;
    return c;
}

ModelConfig grid_config(std::size_t grid) {
    ModelConfig c = tiny_config();
    c.image_size = grid * c.patch;
    return c;
}

namespace oracle {

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
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

Tensor2 softmax(const Tensor2& s, float scale) {
    Tensor2 out(s.rows(), s.cols());
    for (std::size_t i = 0; i < s.rows(); ++i) {
        float mx = s(i, 0);
        for (std::size_t j = 0; j < s.cols(); ++j) mx = std::max(mx, s(i, j));
        for (std::size_t j = 0; j < s.cols(); ++j) out(i, j) = exp_approx(scale * (s(i, j) - mx));
        // the row-sum order is part of the numeric contract, not an implementation detail
        const float inv = 1.0f / softmax_row_sum(out.row(i));
        for (std::size_t j = 0; j < s.cols(); ++j) out(i, j) *= inv;
    }
    return out;
}

Tensor2 structure_preserve(const Tensor2& src, const Tensor2& tgt, std::size_t n_text) {
    Tensor2 out = tgt;
    for (std::size_t i = 0; i < tgt.rows(); ++i) {
        for (std::size_t j = 0; j < tgt.cols(); ++j) {
            if (i >= n_text && j >= n_text) out(i, j) = src(i, j);
        }
    }
    return out;
}

Tensor2 color_preserve(const Tensor2& v_src, const Tensor2& v_tgt, std::span<const std::uint8_t> mask) {
    Tensor2 out(v_tgt.rows(), v_tgt.cols());
    for (std::size_t i = 0; i < v_tgt.rows(); ++i) {
        for (std::size_t j = 0; j < v_tgt.cols(); ++j) out(i, j) = mask[i] ? v_tgt(i, j) : v_src(i, j);
    }
    return out;
}

std::vector<std::uint8_t> binarize(std::span<const float> scores, float eps) {
    std::vector<std::uint8_t> out;
    for (float s : scores) out.push_back(s >= eps ? 1 : 0);
    return out;
}

BinaryRaster dilate(const BinaryRaster& m, std::size_t r) {
    BinaryRaster out(m.width, m.height);
    const auto R = static_cast<long>(r);
    for (long y = 0; y < static_cast<long>(m.height); ++y) {
        for (long x = 0; x < static_cast<long>(m.width); ++x) {
            bool any = false;
            for (long dy = -R; dy <= R && !any; ++dy) {
                for (long dx = -R; dx <= R && !any; ++dx) {
                    const long yy = y + dy, xx = x + dx;
                    if (yy < 0 || xx < 0 || yy >= static_cast<long>(m.height) || xx >= static_cast<long>(m.width)) {
                        continue;
                    }
                    any = m.at(static_cast<std::size_t>(xx), static_cast<std::size_t>(yy)) != 0;
                }
            }
            out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = any ? 1 : 0;
        }
    }
    return out;
}

Tensor2 reweight(const Tensor2& scores, std::span<const std::size_t> rows, float scale, std::size_t n_text) {
    Tensor2 out = scores;
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        const bool selected = std::find(rows.begin(), rows.end(), i) != rows.end();
        if (!selected) continue;
        for (std::size_t j = n_text; j < scores.cols(); ++j) out(i, j) = scores(i, j) * scale;
    }
    return out;
}

BinaryRaster upsample(std::span<const std::uint8_t> tokens, std::size_t grid, std::size_t patch) {
    BinaryRaster out(grid * patch, grid * patch);
    for (std::size_t y = 0; y < out.height; ++y) {
        for (std::size_t x = 0; x < out.width; ++x) out.at(x, y) = tokens[(y / patch) * grid + x / patch];
    }
    return out;
}

JointOut joint_attention(const Tensor2& x_text, const Tensor2& x_vision, const Linear& text_qkv,
                         const Linear& vision_qkv, std::size_t head, std::size_t n_heads,
                         std::span<const float> key_bias) {
    const std::size_t d = text_qkv.in();
    const std::size_t dh = d / n_heads;
    const std::size_t nt = x_text.rows();
    const std::size_t n = nt + x_vision.rows();
    // token t's projection column `col` (which * d + head * dh + c)
    auto project = [&](std::size_t t, std::size_t col) {
        const Tensor2& x = t < nt ? x_text : x_vision;
        const Linear& lin = t < nt ? text_qkv : vision_qkv;
        const std::size_t row = t < nt ? t : t - nt;
        float acc = 0.0f;
        for (std::size_t k = 0; k < d; ++k) acc += x(row, k) * lin.weight(k, col);
        return acc + lin.bias[col];
    };
    Tensor2 q(n, dh), k(n, dh), v(n, dh);
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t c = 0; c < dh; ++c) {
            q(t, c) = project(t, 0 * d + head * dh + c);
            k(t, c) = project(t, 1 * d + head * dh + c);
            v(t, c) = project(t, 2 * d + head * dh + c);
        }
    }
    Tensor2 s(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            float acc = 0.0f;
            for (std::size_t c = 0; c < dh; ++c) acc += q(i, c) * k(j, c);
            s(i, j) = acc + (j < nt ? key_bias[j] : 0.0f);
        }
    }
    JointOut out;
    out.map = oracle::softmax(s, 1.0f / std::sqrt(static_cast<float>(dh)));
    const Tensor2 o = oracle::matmul(out.map, v);
    out.out_text = o.rows_slice(0, nt);
    out.out_vision = o.rows_slice(nt, n);
    return out;
}

double ssim_bruteforce(const ImageBuffer& a, const ImageBuffer& b, std::size_t window, double sigma) {
    auto luma = [](const ImageBuffer& img, std::size_t x, std::size_t y) {
        if (img.channels == 1) return double(img.at(x, y));
        return 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
    };
    const std::size_t half = window / 2;
    std::vector<double> w(window * window);
    double wsum = 0.0;
    for (std::size_t dy = 0; dy < window; ++dy) {
        for (std::size_t dx = 0; dx < window; ++dx) {
            const double ry = double(dy) - double(half), rx = double(dx) - double(half);
            wsum += w[dy * window + dx] = std::exp(-(rx * rx + ry * ry) / (2 * sigma * sigma));
        }
    }
    for (double& v : w) v /= wsum;
    const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t cy = half; cy + half < a.height; ++cy) {
        for (std::size_t cx = half; cx + half < a.width; ++cx) {
            double mx = 0, my = 0;
            for (std::size_t dy = 0; dy < window; ++dy) {
                for (std::size_t dx = 0; dx < window; ++dx) {
                    mx += w[dy * window + dx] * luma(a, cx - half + dx, cy - half + dy);
                    my += w[dy * window + dx] * luma(b, cx - half + dx, cy - half + dy);
                }
            }
            double vx = 0, vy = 0, cov = 0;
            for (std::size_t dy = 0; dy < window; ++dy) {
                for (std::size_t dx = 0; dx < window; ++dx) {
                    const double ex = luma(a, cx - half + dx, cy - half + dy) - mx;
                    const double ey = luma(b, cx - half + dx, cy - half + dy) - my;
                    vx += w[dy * window + dx] * ex * ex;
                    vy += w[dy * window + dx] * ey * ey;
                    cov += w[dy * window + dx] * ex * ey;
                }
            }
            total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    }
    return total / double(count);
}

double psnr_flat(double d) { return 10.0 * std::log10(255.0 * 255.0 / (d * d)); }

}  // namespace oracle

Linear random_linear(Gen& g, std::size_t in, std::size_t out) {
    Linear l{g.tensor(in, out, 0.5f), {}};
    const Tensor2 b = g.tensor(1, out, 0.1f);
    l.bias.assign(b.data().begin(), b.data().end());
    return l;
}

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("colorctrl_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace testing
