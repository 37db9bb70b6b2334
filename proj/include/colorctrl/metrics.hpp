#pragma once

// Evaluation metrics: masked PSNR/SSIM, Canny edges, edge-map SSIM, square
// dilation and a pluggable semantic scorer. Everything works on 8-bit images;
// RGB inputs are reduced to BT.601 luma where a single channel is needed.

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "colorctrl/image.hpp"
#include "json.hpp"

namespace colorctrl {

inline constexpr double kPsnrCap = 99.0;

// 10 log10(255^2 / MSE) over every channel of the pixels where `include` is
// set (all pixels when absent). Zero MSE returns kPsnrCap.
// Throws ShapeError on size mismatch, InputError on an empty region.
double psnr(const ImageBuffer& a, const ImageBuffer& b, const BinaryRaster* include = nullptr);

struct SsimParams {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 255.0;
};

// Mean local SSIM over all fully-inside Gaussian windows. With `include`,
// only windows centred on an included pixel are averaged.
// Throws InputError when the image is smaller than the window or no window
// qualifies.
double ssim(const ImageBuffer& a, const ImageBuffer& b, const BinaryRaster* include = nullptr,
            const SsimParams& params = {});

// Whether ssim() has at least one window to average for this size and mask.
bool ssim_has_window(std::size_t width, std::size_t height, const BinaryRaster* include = nullptr,
                     const SsimParams& params = {});

struct CannyParams {
    double sigma = 1.4;
    double low = 100.0;
    double high = 200.0;
};

// Gaussian blur -> Sobel (unnormalised, L2 magnitude) -> 4-direction
// non-maximum suppression -> hysteresis with 8-connectivity.
// Throws InputError unless 0 < low < high and sigma > 0.
BinaryRaster canny(const ImageBuffer& img, const CannyParams& params = {});

// ssim of the two edge maps rendered as 0/255.
double canny_ssim(const ImageBuffer& a, const ImageBuffer& b, const CannyParams& params = {});

// Square structuring element of side 2r+1.
BinaryRaster dilate(const BinaryRaster& mask, std::size_t radius);

// Text-image agreement score. Real CLIP is out of reach here; see
// placeholder-color below.
class SemanticScorer {
public:
    virtual ~SemanticScorer() = default;
    virtual std::string id() const = 0;
    // `region` restricts the image statistics when non-null.
    virtual double score(const ImageBuffer& img, std::string_view text, const BinaryRaster* region) const = 0;
};

inline constexpr double kSemanticUnavailable = -1.0;

// "placeholder-color": NOT a semantic model. Scores 1 - distance between the
// mean colour and the colour words named in the text, normalised to [0, 1].
// Exists to exercise report plumbing only.
// "none": returns nullptr; reports carry kSemanticUnavailable.
// Any other id throws InputError.
std::unique_ptr<SemanticScorer> make_scorer(std::string_view id);
std::vector<std::string> scorer_ids();

struct MetricsReport {
    double canny_ssim = 0.0;
    double bg_psnr = 0.0;
    double bg_ssim = 0.0;
    // false when the dilated edit mask leaves no background pixel (psnr) or
    // no full SSIM window (ssim); the value is then 0 and serialised as null
    bool bg_psnr_available = true;
    bool bg_ssim_available = true;
    double semantic_whole = kSemanticUnavailable;
    double semantic_edited = kSemanticUnavailable;
    std::string scorer = "none";
    bool semantic_available = false;
    std::size_t bg_pixels = 0;
};

nlohmann::ordered_json to_json(const MetricsReport& r);

inline constexpr std::size_t kDefaultEvalDilation = 2;

// Compares an edited image with its reference. The background is the
// complement of the edit mask dilated by `dilate_radius`; without a mask the
// whole image counts as background.
MetricsReport evaluate(const ImageBuffer& reference, const ImageBuffer& edited, const BinaryRaster* edit_mask,
                       std::size_t dilate_radius = kDefaultEvalDilation, std::string_view text = {},
                       const SemanticScorer* scorer = nullptr);

}  // namespace colorctrl
