#include "colorctrl/metrics.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <string>

#include "colorctrl/errors.hpp"

namespace colorctrl {

namespace {

void require_same(const ImageBuffer& a, const ImageBuffer& b, const char* what) {
    if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": images differ in size or channel count");
    if (a.pixel_count() == 0) throw InputError(std::string(what) + ": empty image");
}

void require_mask(const ImageBuffer& a, const BinaryRaster* m, const char* what) {
    if (m && (m->width != a.width || m->height != a.height)) {
        throw ShapeError(std::string(what) + ": mask does not match image size");
    }
}

std::vector<double> gaussian_kernel(double sigma, std::size_t radius) {
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) {
        const double d = static_cast<double>(i) - static_cast<double>(radius);
        k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

// reflect-101: -1 -> 1, n -> n-2
std::ptrdiff_t reflect(std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

std::vector<double> blur(const std::vector<double>& src, std::size_t w, std::size_t h, double sigma) {
    const auto radius = static_cast<std::size_t>(std::ceil(3.0 * sigma));
    const std::vector<double> k = gaussian_kernel(sigma, radius);
    const auto r = static_cast<std::ptrdiff_t>(radius);
    const auto W = static_cast<std::ptrdiff_t>(w), H = static_cast<std::ptrdiff_t>(h);
    std::vector<double> tmp(src.size()), out(src.size());
    for (std::ptrdiff_t y = 0; y < H; ++y) {
        for (std::ptrdiff_t x = 0; x < W; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t d = -r; d <= r; ++d) acc += k[d + r] * src[y * W + reflect(x + d, W)];
            tmp[y * W + x] = acc;
        }
    }
    for (std::ptrdiff_t y = 0; y < H; ++y) {
        for (std::ptrdiff_t x = 0; x < W; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t d = -r; d <= r; ++d) acc += k[d + r] * tmp[reflect(y + d, H) * W + x];
            out[y * W + x] = acc;
        }
    }
    return out;
}

}  // namespace

double psnr(const ImageBuffer& a, const ImageBuffer& b, const BinaryRaster* include) {
    require_same(a, b, "psnr");
    require_mask(a, include, "psnr");
    double sse = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < a.pixel_count(); ++p) {
        if (include && !include->data[p]) continue;
        for (std::size_t c = 0; c < a.channels; ++c) {
            const double d = double(a.data[p * a.channels + c]) - double(b.data[p * a.channels + c]);
            sse += d * d;
        }
        n += a.channels;
    }
    if (n == 0) throw InputError("psnr: masked region is empty");
    if (sse == 0.0) return kPsnrCap;
    const double mse = sse / static_cast<double>(n);
    return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

bool ssim_has_window(std::size_t width, std::size_t height, const BinaryRaster* include, const SsimParams& params) {
    const std::size_t half = params.window / 2;
    if (params.window == 0 || width < params.window || height < params.window) return false;
    if (!include) return true;
    for (std::size_t cy = half; cy + half < height; ++cy)
        for (std::size_t cx = half; cx + half < width; ++cx)
            if (include->at(cx, cy)) return true;
    return false;
}

double ssim(const ImageBuffer& a, const ImageBuffer& b, const BinaryRaster* include, const SsimParams& params) {
    require_same(a, b, "ssim");
    require_mask(a, include, "ssim");
    const std::size_t win = params.window;
    if (win == 0 || win % 2 == 0) throw InputError("ssim: window must be odd and positive");
    if (a.width < win || a.height < win) {
        throw InputError("ssim: image " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                         " is smaller than the " + std::to_string(win) + "x" + std::to_string(win) + " window");
    }
    const std::vector<double> x = to_luma(a);
    const std::vector<double> y = to_luma(b);
    const std::vector<double> g = gaussian_kernel(params.sigma, win / 2);
    const double c1 = (params.k1 * params.dynamic_range) * (params.k1 * params.dynamic_range);
    const double c2 = (params.k2 * params.dynamic_range) * (params.k2 * params.dynamic_range);
    const std::size_t w = a.width;
    const std::size_t half = win / 2;

    double total = 0.0;
    std::size_t windows = 0;
    for (std::size_t cy = half; cy + half < a.height; ++cy) {
        for (std::size_t cx = half; cx + half < a.width; ++cx) {
            if (include && !include->at(cx, cy)) continue;
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (std::size_t dy = 0; dy < win; ++dy) {
                for (std::size_t dx = 0; dx < win; ++dx) {
                    const double wt = g[dy] * g[dx];
                    const std::size_t i = (cy - half + dy) * w + (cx - half + dx);
                    mx += wt * x[i];
                    my += wt * y[i];
                    sxx += wt * (x[i] * x[i]);
                    syy += wt * (y[i] * y[i]);
                    sxy += wt * (x[i] * y[i]);
                }
            }
            const double vx = sxx - mx * mx;
            const double vy = syy - my * my;
            const double cov = sxy - mx * my;
            const double num = (2.0 * (mx * my) + c1) * (2.0 * cov + c2);
            const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += num / den;
            ++windows;
        }
    }
    if (windows == 0) throw InputError("ssim: no window centre lies inside the mask");
    return total / static_cast<double>(windows);
}

BinaryRaster canny(const ImageBuffer& img, const CannyParams& params) {
    if (!(params.low > 0.0 && params.low < params.high)) throw InputError("canny: need 0 < low < high");
    if (!(params.sigma > 0.0)) throw InputError("canny: sigma must be > 0");
    const std::size_t w = img.width, h = img.height;
    BinaryRaster edges(w, h);
    if (w < 3 || h < 3) return edges;
    const std::vector<double> s = blur(to_luma(img), w, h, params.sigma);
    const auto W = static_cast<std::ptrdiff_t>(w), H = static_cast<std::ptrdiff_t>(h);
    auto at = [&](std::ptrdiff_t x, std::ptrdiff_t y) { return s[reflect(y, H) * W + reflect(x, W)]; };

    std::vector<double> gx(w * h), gy(w * h), mag(w * h);
    for (std::ptrdiff_t y = 0; y < H; ++y) {
        for (std::ptrdiff_t x = 0; x < W; ++x) {
            const double dx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1)) -
                              (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            const double dy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1)) -
                              (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            const std::size_t i = static_cast<std::size_t>(y * W + x);
            gx[i] = dx;
            gy[i] = dy;
            mag[i] = std::sqrt(dx * dx + dy * dy);
        }
    }

    // 0 = strong, 1 = weak candidate, 2 = suppressed
    constexpr double tan22 = 0.41421356237309503;  // tan(22.5 deg)
    std::vector<std::uint8_t> state(w * h, 2);
    for (std::ptrdiff_t y = 1; y + 1 < H; ++y) {
        for (std::ptrdiff_t x = 1; x + 1 < W; ++x) {
            const std::size_t i = static_cast<std::size_t>(y * W + x);
            const double m = mag[i];
            if (m < params.low) continue;
            const double ax = std::abs(gx[i]), ay = std::abs(gy[i]);
            std::ptrdiff_t ox, oy;  // offset of the "after" neighbour along the gradient
            if (ay <= ax * tan22) {
                ox = 1, oy = 0;
            } else if (ax <= ay * tan22) {
                ox = 0, oy = 1;
            } else if ((gx[i] > 0) == (gy[i] > 0)) {
                ox = 1, oy = 1;
            } else {
                ox = -1, oy = 1;
            }
            const double before = mag[(y - oy) * W + (x - ox)];
            const double after = mag[(y + oy) * W + (x + ox)];
            if (m > before && m >= after) state[i] = m >= params.high ? 0 : 1;
        }
    }

    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < state.size(); ++i) {
        if (state[i] == 0) {
            edges.data[i] = 1;
            stack.push_back(i);
        }
    }
    while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        const auto y = static_cast<std::ptrdiff_t>(i / w), x = static_cast<std::ptrdiff_t>(i % w);
        for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
            for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
                const std::ptrdiff_t nx = x + dx, ny = y + dy;
                if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
                const std::size_t j = static_cast<std::size_t>(ny * W + nx);
                if (state[j] == 1 && !edges.data[j]) {
                    edges.data[j] = 1;
                    stack.push_back(j);
                }
            }
        }
    }
    return edges;
}

double canny_ssim(const ImageBuffer& a, const ImageBuffer& b, const CannyParams& params) {
    require_same(a, b, "canny_ssim");
    return ssim(raster_to_image(canny(a, params)), raster_to_image(canny(b, params)));
}

BinaryRaster dilate(const BinaryRaster& mask, std::size_t radius) {
    if (radius == 0) return mask;
    const std::size_t w = mask.width, h = mask.height;
    BinaryRaster tmp(w, h), out(w, h);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t x0 = x >= radius ? x - radius : 0;
            const std::size_t x1 = std::min(w - 1, x + radius);
            std::uint8_t v = 0;
            for (std::size_t k = x0; k <= x1 && !v; ++k) v = mask.at(k, y) ? 1 : 0;
            tmp.at(x, y) = v;
        }
    }
    for (std::size_t y = 0; y < h; ++y) {
        const std::size_t y0 = y >= radius ? y - radius : 0;
        const std::size_t y1 = std::min(h - 1, y + radius);
        for (std::size_t x = 0; x < w; ++x) {
            std::uint8_t v = 0;
            for (std::size_t k = y0; k <= y1 && !v; ++k) v = tmp.at(x, k);
            out.at(x, y) = v;
        }
    }
    return out;
}

namespace {

struct NamedColor {
    const char* name;
    std::array<double, 3> rgb;
};

constexpr NamedColor kColors[] = {
    {"red", {220, 30, 30}},     {"orange", {245, 140, 20}}, {"yellow", {240, 220, 40}},
    {"green", {40, 170, 60}},   {"blue", {40, 80, 220}},    {"purple", {130, 50, 170}},
    {"pink", {240, 130, 180}},  {"brown", {120, 75, 40}},   {"black", {15, 15, 15}},
    {"white", {240, 240, 240}}, {"gray", {128, 128, 128}},  {"grey", {128, 128, 128}},
    {"golden", {212, 175, 55}}, {"silver", {192, 192, 200}}, {"cyan", {40, 200, 220}},
};

class PlaceholderColorScorer final : public SemanticScorer {
public:
    std::string id() const override { return "placeholder-color"; }

    double score(const ImageBuffer& img, std::string_view text, const BinaryRaster* region) const override {
        require_mask(img, region, "placeholder-color");
        std::array<double, 3> mean{0, 0, 0};
        std::size_t n = 0;
        for (std::size_t p = 0; p < img.pixel_count(); ++p) {
            if (region && !region->data[p]) continue;
            for (std::size_t c = 0; c < 3; ++c) mean[c] += img.data[p * img.channels + std::min(c, img.channels - 1)];
            ++n;
        }
        if (n == 0) return 0.0;
        for (double& m : mean) m /= static_cast<double>(n);

        double total = 0.0;
        std::size_t hits = 0;
        std::string word;
        auto flush = [&] {
            for (const NamedColor& nc : kColors) {
                if (word == nc.name) {
                    double d2 = 0.0;
                    for (std::size_t c = 0; c < 3; ++c) d2 += (mean[c] - nc.rgb[c]) * (mean[c] - nc.rgb[c]);
                    total += 1.0 - std::sqrt(d2) / (255.0 * std::sqrt(3.0));
                    ++hits;
                }
            }
            word.clear();
        };
        for (char ch : text) {
            if (std::isalpha(static_cast<unsigned char>(ch))) {
                word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
            } else {
                flush();
            }
        }
        flush();
        return hits ? total / static_cast<double>(hits) : 0.0;
    }
};

}  // namespace

std::unique_ptr<SemanticScorer> make_scorer(std::string_view id) {
    if (id == "none") return nullptr;
    if (id == "placeholder-color") return std::make_unique<PlaceholderColorScorer>();
    throw InputError("unknown semantic scorer '" + std::string(id) + "' (known: none, placeholder-color)");
}

std::vector<std::string> scorer_ids() { return {"none", "placeholder-color"}; }

nlohmann::ordered_json to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["canny_ssim"] = r.canny_ssim;
    if (r.bg_psnr_available) {
        j["bg_psnr"] = r.bg_psnr;
    } else {
        j["bg_psnr"] = nullptr;
    }
    if (r.bg_ssim_available) {
        j["bg_ssim"] = r.bg_ssim;
    } else {
        j["bg_ssim"] = nullptr;
    }
    j["semantic_whole"] = r.semantic_whole;
    j["semantic_edited"] = r.semantic_edited;
    j["semantic_scorer"] = r.scorer;
    j["semantic_available"] = r.semantic_available;
    j["bg_pixels"] = r.bg_pixels;
    return j;
}

MetricsReport evaluate(const ImageBuffer& reference, const ImageBuffer& edited, const BinaryRaster* edit_mask,
                       std::size_t dilate_radius, std::string_view text, const SemanticScorer* scorer) {
    require_same(reference, edited, "evaluate");
    require_mask(reference, edit_mask, "evaluate");
    MetricsReport r;
    BinaryRaster background(reference.width, reference.height, 1);
    if (edit_mask) background = dilate(*edit_mask, dilate_radius).complement();
    r.bg_pixels = background.count();
    r.canny_ssim = canny_ssim(reference, edited);
    r.bg_psnr_available = r.bg_pixels > 0;
    if (r.bg_psnr_available) r.bg_psnr = psnr(reference, edited, &background);
    r.bg_ssim_available = ssim_has_window(reference.width, reference.height, &background);
    if (r.bg_ssim_available) r.bg_ssim = ssim(reference, edited, &background);
    if (scorer) {
        r.scorer = scorer->id();
        r.semantic_available = true;
        r.semantic_whole = scorer->score(edited, text, nullptr);
        r.semantic_edited = edit_mask && edit_mask->count() > 0 ? scorer->score(edited, text, edit_mask)
                                                                 : r.semantic_whole;
    }
    return r;
}

}  // namespace colorctrl
