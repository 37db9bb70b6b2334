#pragma once

// Attention-map surgery for color editing on joint text+vision attention.
//
// Maps are laid out with text tokens first: rows/cols [0, n_text) are text,
// [n_text, n_tokens) are vision. QuadrantView names the four blocks by
// (query modality, key modality) so no caller ever reasons about drawing order:
//
//   vv  vision queries x vision keys   (scene structure)
//   vt  vision queries x text keys     (where each word lands in the image)
//   tv  text queries   x vision keys   (what re-weighting scales)
//   tt  text queries   x text keys

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "colorctrl/config.hpp"
#include "colorctrl/image.hpp"
#include "colorctrl/model.hpp"
#include "colorctrl/tensor.hpp"
#include "colorctrl/tokenizer.hpp"

namespace colorctrl {

enum class Quadrant { vv, vt, tv, tt };

class QuadrantView {
public:
    // Throws ControlError unless the map is square and n_text <= its size.
    QuadrantView(const Tensor2& map, std::size_t n_text);

    std::size_t n_text() const { return n_text_; }
    std::size_t n_vision() const { return map_->rows() - n_text_; }

    float vv(std::size_t i, std::size_t j) const { return (*map_)(n_text_ + i, n_text_ + j); }
    float vt(std::size_t i, std::size_t t) const { return (*map_)(n_text_ + i, t); }
    float tv(std::size_t t, std::size_t j) const { return (*map_)(t, n_text_ + j); }
    float tt(std::size_t t, std::size_t u) const { return (*map_)(t, u); }

    // Copy of one block.
    Tensor2 block(Quadrant q) const;

    static Quadrant quadrant_of(std::size_t row, std::size_t col, std::size_t n_text) {
        const bool vision_row = row >= n_text;
        const bool vision_col = col >= n_text;
        if (vision_row) return vision_col ? Quadrant::vv : Quadrant::vt;
        return vision_col ? Quadrant::tv : Quadrant::tt;
    }

private:
    const Tensor2* map_;
    std::size_t n_text_;
};

// Target map with its vision-to-vision block replaced by the source's. The
// other three blocks come from the target. Rows are not renormalised.
Tensor2 structure_preserve(const Tensor2& m_src, const Tensor2& m_tgt, std::size_t n_text);
void structure_preserve_inplace(const Tensor2& m_src, Tensor2& m_tgt, std::size_t n_text);

struct MaskScores {
    std::vector<float> values;  // one per vision token, min-max normalised to [0, 1]
    bool degenerate = false;    // every raw score equal; values are all zero
};

// Mean of the vision-to-text attention onto the `spans` columns over every
// conditional-pass record (steps, layers, heads alike), then min-max
// normalised across vision tokens. Unconditional records are skipped.
// Throws InputError on an empty span set or a span outside [0, n_text).
MaskScores accumulate_mask_scores(std::span<const AttentionRecord* const> records, std::span<const TokenSpan> spans);
MaskScores accumulate_mask_scores(std::span<const AttentionRecord> records, TokenSpan span);

// Min-max normalisation of raw per-token scores (shared by every mask path).
MaskScores normalize_scores(std::span<const double> raw);

struct EditMask {
    std::vector<std::uint8_t> token_mask;  // n_vision flags, 1 = editable
    BinaryRaster pixel_mask;               // image_size^2, patch replication of token_mask
    float epsilon_used = 0.0f;

    std::size_t count() const;
};

inline constexpr float kDefaultMaskEpsilon = 0.1f;

// token_mask[i] = scores[i] >= epsilon. Throws InputError unless 0 < epsilon < 1.
EditMask binarize_mask(std::span<const float> scores, float epsilon, const ModelConfig& config);

// Every token editable; used when an edit names no mask words.
EditMask full_mask(const ModelConfig& config);

// Nearest-neighbour replication of the token grid through the patch size.
BinaryRaster upsample_mask(std::span<const std::uint8_t> token_mask, const ModelConfig& config);
// Inverse of upsample_mask: a token is set when any pixel of its patch is.
std::vector<std::uint8_t> downsample_mask(const BinaryRaster& pixels, const ModelConfig& config);

// Square dilation on the token grid (radius in tokens); refreshes pixel_mask.
EditMask dilate_mask(const EditMask& mask, std::size_t radius, const ModelConfig& config);

// Vision value tokens: target rows inside the mask, source rows elsewhere.
Tensor2 color_preserve(const Tensor2& v_src, const Tensor2& v_tgt, std::span<const std::uint8_t> token_mask);
void color_preserve_inplace(const Tensor2& v_src, Tensor2& v_tgt, std::span<const std::uint8_t> token_mask);

// Multiplies the vision-key columns of the given text-query rows by `scale`.
// Apply before softmax. Throws InputError for rows >= n_text or scale < 0.
Tensor2 reweight_scores(const Tensor2& scores, std::span<const std::size_t> rows, float scale, std::size_t n_text);
void reweight_scores_inplace(Tensor2& scores, std::span<const std::size_t> rows, float scale, std::size_t n_text);

}  // namespace colorctrl
