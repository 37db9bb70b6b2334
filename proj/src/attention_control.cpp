#include "colorctrl/attention_control.hpp"

#include <algorithm>
#include <string>

#include "colorctrl/errors.hpp"
#include "colorctrl/metrics.hpp"

namespace colorctrl {

QuadrantView::QuadrantView(const Tensor2& map, std::size_t n_text) : map_(&map), n_text_(n_text) {
    if (map.rows() != map.cols()) throw ControlError("attention map must be square");
    if (n_text > map.rows()) throw ControlError("n_text exceeds attention map size");
}

Tensor2 QuadrantView::block(Quadrant q) const {
    const std::size_t n = map_->rows();
    const bool vision_rows = q == Quadrant::vv || q == Quadrant::vt;
    const bool vision_cols = q == Quadrant::vv || q == Quadrant::tv;
    const std::size_t r0 = vision_rows ? n_text_ : 0, r1 = vision_rows ? n : n_text_;
    const std::size_t c0 = vision_cols ? n_text_ : 0, c1 = vision_cols ? n : n_text_;
    return map_->rows_slice(r0, r1).cols_slice(c0, c1);
}

void structure_preserve_inplace(const Tensor2& m_src, Tensor2& m_tgt, std::size_t n_text) {
    if (m_src.rows() != m_tgt.rows() || m_src.cols() != m_tgt.cols()) {
        throw ControlError("structure_preserve: source and target maps differ in shape");
    }
    const QuadrantView check(m_tgt, n_text);
    (void)check;
    const std::size_t n = m_tgt.rows();
    for (std::size_t i = n_text; i < n; ++i) {
        auto src = m_src.row(i);
        std::copy(src.begin() + static_cast<std::ptrdiff_t>(n_text), src.end(),
                  m_tgt.row(i).begin() + static_cast<std::ptrdiff_t>(n_text));
    }
}

Tensor2 structure_preserve(const Tensor2& m_src, const Tensor2& m_tgt, std::size_t n_text) {
    Tensor2 out = m_tgt;
    structure_preserve_inplace(m_src, out, n_text);
    return out;
}

MaskScores normalize_scores(std::span<const double> raw) {
    MaskScores out;
    out.values.assign(raw.size(), 0.0f);
    if (raw.empty()) {
        out.degenerate = true;
        return out;
    }
    const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
    const double lo = *lo_it;
    const double range = *hi_it - lo;
    if (!(range > 0.0)) {
        out.degenerate = true;
        return out;
    }
    for (std::size_t i = 0; i < raw.size(); ++i) out.values[i] = static_cast<float>((raw[i] - lo) / range);
    return out;
}

MaskScores accumulate_mask_scores(std::span<const AttentionRecord* const> records, std::span<const TokenSpan> spans) {
    if (spans.empty()) throw InputError("mask span set is empty");
    std::size_t n_text = 0;
    std::size_t n_vision = 0;
    std::size_t used = 0;
    std::vector<double> sums;
    for (const AttentionRecord* rec : records) {
        if (rec->pass != Pass::cond) continue;
        if (sums.empty()) {
            n_text = rec->n_text();
            n_vision = rec->v_vision.rows();
            sums.assign(n_vision, 0.0);
            for (const TokenSpan& s : spans) {
                if (s.empty() || s.end > n_text) {
                    throw InputError("mask span [" + std::to_string(s.begin) + ", " + std::to_string(s.end) +
                                     ") outside text tokens [0, " + std::to_string(n_text) + ")");
                }
            }
        } else if (rec->n_text() != n_text || rec->v_vision.rows() != n_vision) {
            throw ControlError("attention records disagree on token counts");
        }
        const QuadrantView view(rec->map, n_text);
        for (std::size_t i = 0; i < n_vision; ++i) {
            double acc = 0.0;
            for (const TokenSpan& s : spans) {
                for (std::size_t t = s.begin; t < s.end; ++t) acc += view.vt(i, t);
            }
            sums[i] += acc;
        }
        ++used;
    }
    if (used == 0) throw InputError("no conditional-pass attention records to build a mask from");
    std::size_t columns = 0;
    for (const TokenSpan& s : spans) columns += s.size();
    const double denom = static_cast<double>(used) * static_cast<double>(columns);
    for (double& v : sums) v /= denom;
    return normalize_scores(sums);
}

MaskScores accumulate_mask_scores(std::span<const AttentionRecord> records, TokenSpan span) {
    std::vector<const AttentionRecord*> ptrs;
    ptrs.reserve(records.size());
    for (const AttentionRecord& r : records) ptrs.push_back(&r);
    return accumulate_mask_scores(ptrs, std::span<const TokenSpan>(&span, 1));
}

std::size_t EditMask::count() const {
    return static_cast<std::size_t>(std::count(token_mask.begin(), token_mask.end(), std::uint8_t{1}));
}

EditMask binarize_mask(std::span<const float> scores, float epsilon, const ModelConfig& config) {
    if (!(epsilon > 0.0f && epsilon < 1.0f)) throw InputError("mask threshold must lie in (0, 1)");
    if (scores.size() != config.n_vision()) throw ShapeError("mask scores length != n_vision");
    EditMask mask;
    mask.epsilon_used = epsilon;
    mask.token_mask.resize(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) mask.token_mask[i] = scores[i] >= epsilon ? 1 : 0;
    mask.pixel_mask = upsample_mask(mask.token_mask, config);
    return mask;
}

EditMask full_mask(const ModelConfig& config) {
    EditMask mask;
    mask.token_mask.assign(config.n_vision(), 1);
    mask.pixel_mask = upsample_mask(mask.token_mask, config);
    return mask;
}

BinaryRaster upsample_mask(std::span<const std::uint8_t> token_mask, const ModelConfig& config) {
    if (token_mask.size() != config.n_vision()) throw ShapeError("token mask length != n_vision");
    const std::size_t g = config.grid();
    BinaryRaster out(config.image_size, config.image_size);
    for (std::size_t y = 0; y < config.image_size; ++y) {
        for (std::size_t x = 0; x < config.image_size; ++x) {
            out.at(x, y) = token_mask[(y / config.patch) * g + x / config.patch] ? 1 : 0;
        }
    }
    return out;
}

std::vector<std::uint8_t> downsample_mask(const BinaryRaster& pixels, const ModelConfig& config) {
    if (pixels.width != config.image_size || pixels.height != config.image_size) {
        throw ShapeError("pixel mask does not match image size");
    }
    const std::size_t g = config.grid();
    std::vector<std::uint8_t> out(config.n_vision(), 0);
    for (std::size_t y = 0; y < config.image_size; ++y) {
        for (std::size_t x = 0; x < config.image_size; ++x) {
            if (pixels.at(x, y)) out[(y / config.patch) * g + x / config.patch] = 1;
        }
    }
    return out;
}

EditMask dilate_mask(const EditMask& mask, std::size_t radius, const ModelConfig& config) {
    if (radius == 0) return mask;
    const std::size_t g = config.grid();
    BinaryRaster grid(g, g);
    grid.data = mask.token_mask;
    EditMask out = mask;
    out.token_mask = dilate(grid, radius).data;
    out.pixel_mask = upsample_mask(out.token_mask, config);
    return out;
}

void color_preserve_inplace(const Tensor2& v_src, Tensor2& v_tgt, std::span<const std::uint8_t> token_mask) {
    if (v_src.rows() != v_tgt.rows() || v_src.cols() != v_tgt.cols()) {
        throw ShapeError("color_preserve: source and target values differ in shape");
    }
    if (token_mask.size() != v_tgt.rows()) throw ShapeError("color_preserve: mask length != vision rows");
    for (std::size_t i = 0; i < v_tgt.rows(); ++i) {
        if (!token_mask[i]) {
            auto src = v_src.row(i);
            std::copy(src.begin(), src.end(), v_tgt.row(i).begin());
        }
    }
}

Tensor2 color_preserve(const Tensor2& v_src, const Tensor2& v_tgt, std::span<const std::uint8_t> token_mask) {
    Tensor2 out = v_tgt;
    color_preserve_inplace(v_src, out, token_mask);
    return out;
}

void reweight_scores_inplace(Tensor2& scores, std::span<const std::size_t> rows, float scale, std::size_t n_text) {
    if (!(scale >= 0.0f)) throw InputError("re-weighting scale must be >= 0");
    if (n_text > scores.rows() || n_text > scores.cols()) throw ControlError("n_text exceeds score matrix");
    for (std::size_t r : rows) {
        if (r >= n_text) {
            throw InputError("re-weight row " + std::to_string(r) + " is not a text token (n_text " +
                             std::to_string(n_text) + ")");
        }
    }
    if (scale == 1.0f) return;
    for (std::size_t r : rows) {
        auto row = scores.row(r);
        for (std::size_t j = n_text; j < row.size(); ++j) row[j] *= scale;
    }
}

Tensor2 reweight_scores(const Tensor2& scores, std::span<const std::size_t> rows, float scale, std::size_t n_text) {
    Tensor2 out = scores;
    reweight_scores_inplace(out, rows, scale, n_text);
    return out;
}

}  // namespace colorctrl
