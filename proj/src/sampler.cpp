#include "colorctrl/sampler.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "colorctrl/errors.hpp"
#include "colorctrl/rng.hpp"
#include "colorctrl/tokenizer.hpp"

namespace colorctrl {

void SampleParams::validate() const {
    if (steps < 1) throw InputError("steps must be >= 1");
    if (!(cfg_scale >= 1.0f) || !std::isfinite(cfg_scale)) throw InputError("cfg scale must be a finite value >= 1");
}

std::uint64_t SampleParams::digest() const {
    const std::uint64_t fields[] = {steps, std::bit_cast<std::uint32_t>(cfg_scale), seed};
    return fnv1a64(fields, sizeof(fields));
}

std::vector<float> sigma_schedule(std::size_t steps) {
    if (steps < 1) throw ScheduleError("schedule needs at least one step");
    std::vector<float> s(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) {
        s[i] = static_cast<float>(1.0 - static_cast<double>(i) / static_cast<double>(steps));
    }
    return s;
}

void euler_step_inplace(Tensor3& x, const Tensor3& v, float sigma_curr, float sigma_next) {
    if (!(sigma_curr > sigma_next && sigma_next >= 0.0f)) {
        throw ScheduleError("euler step needs sigma_curr > sigma_next >= 0 (got " + std::to_string(sigma_curr) +
                            " -> " + std::to_string(sigma_next) + ")");
    }
    if (!x.same_shape(v)) throw ShapeError("euler step: latent and velocity differ in shape");
    const float dt = sigma_next - sigma_curr;
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += dt * v.data[i];
}

Tensor3 euler_step(const Tensor3& x, const Tensor3& v, float sigma_curr, float sigma_next) {
    Tensor3 out = x;
    euler_step_inplace(out, v, sigma_curr, sigma_next);
    return out;
}

Tensor3 cfg_combine(const Tensor3& v_cond, const Tensor3& v_uncond, float w) {
    if (!v_cond.same_shape(v_uncond)) throw ShapeError("cfg: conditional and unconditional velocities differ");
    if (w == 1.0f) return v_cond;
    Tensor3 out = v_uncond;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = v_uncond.data[i] + w * (v_cond.data[i] - v_uncond.data[i]);
    }
    return out;
}

Tensor3 initial_noise(const ModelConfig& config, std::uint64_t seed) {
    Tensor3 x(config.image_size, config.image_size, config.channels);
    Rng rng(seed);
    x.data = seeded_normal(rng, x.data.size(), 0.0f, 1.0f);
    return x;
}

std::uint64_t latent_digest(const Tensor3& x) {
    const std::uint64_t dims[] = {x.height, x.width, x.channels};
    const std::uint64_t h = fnv1a64(dims, sizeof(dims));
    return fnv1a64(x.data.data(), x.data.size() * sizeof(float), h);
}

ImageBuffer decode_image(const Tensor3& x) {
    ImageBuffer img(x.width, x.height, x.channels);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const float v = std::clamp(x.data[i], 0.0f, 1.0f);
        img.data[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    return img;
}

void EditSpec::validate() const {
    if (!(epsilon > 0.0f && epsilon < 1.0f)) throw InputError("mask threshold epsilon must lie in (0, 1)");
    if (enable_color && edit_words.empty()) throw InputError("colour preservation needs at least one edit word");
    for (const ReweightTerm& t : reweight) {
        if (!(t.scale >= 0.0f) || !std::isfinite(t.scale)) throw InputError("re-weighting scale must be >= 0");
    }
}

bool EditSpec::any_control() const {
    if (enable_structure || enable_color) return true;
    return std::any_of(reweight.begin(), reweight.end(), [](const ReweightTerm& t) { return t.scale != 1.0f; });
}

nlohmann::ordered_json to_json(const ControlLogEntry& e) {
    nlohmann::ordered_json j;
    j["step"] = e.step;
    j["sigma"] = e.sigma;
    j["structure_swaps"] = e.structure_swaps;
    j["color_swaps"] = e.color_swaps;
    j["reweighted_rows"] = e.reweighted_rows;
    j["velocity_rms"] = e.velocity_rms;
    return j;
}

nlohmann::ordered_json control_log_json(const EditSpec& spec, const EditResult& result) {
    nlohmann::ordered_json j;
    j["source_prompt"] = spec.source_prompt;
    j["target_prompt"] = spec.target_prompt;
    j["edit_words"] = spec.edit_words;
    auto rw = nlohmann::ordered_json::array();
    for (const ReweightTerm& t : spec.reweight) {
        rw.push_back({{"word_index", t.word_index},
                      {"scale", t.scale},
                      {"branch", t.branch == ReweightBranch::source_map ? "source_map" : "target_map"}});
    }
    j["reweight"] = rw;
    j["epsilon"] = spec.epsilon;
    j["enable_structure"] = spec.enable_structure;
    j["enable_color"] = spec.enable_color;
    j["mask_dilate"] = spec.mask_dilate;
    j["mask_tokens"] = result.mask.count();
    j["mask_degenerate"] = result.scores.degenerate;
    auto steps = nlohmann::ordered_json::array();
    for (const ControlLogEntry& e : result.log) steps.push_back(to_json(e));
    j["steps"] = steps;
    return j;
}

namespace {

class Recorder final : public AttentionHooks {
public:
    explicit Recorder(BranchCache& cache) : cache_(cache) {}
    bool wants_record(const AttentionContext&) const override { return true; }
    void on_record(AttentionRecord&& record) override { cache_.insert(std::move(record)); }

private:
    BranchCache& cache_;
};

class EditController final : public AttentionHooks {
public:
    EditController(const BranchCache& cache, const EditSpec& spec, const EditMask& mask,
                   std::vector<std::size_t> reweight_rows, std::vector<float> reweight_scales, bool control_uncond)
        : cache_(cache),
          spec_(spec),
          mask_(mask),
          rows_(std::move(reweight_rows)),
          scales_(std::move(reweight_scales)),
          control_uncond_(control_uncond) {}

    void on_scores(const AttentionContext& ctx, Tensor2& scores) override {
        // Re-weighting targets prompt words, which only the conditional pass has.
        if (ctx.pass != Pass::cond) return;
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            if (scales_[i] == 1.0f) continue;
            reweight_scores_inplace(scores, std::span<const std::size_t>(&rows_[i], 1), scales_[i], ctx.n_text);
            ++counts_.reweighted_rows;
        }
    }

    void on_map(const AttentionContext& ctx, Tensor2& map) override {
        if (!spec_.enable_structure || !applies(ctx)) return;
        const AttentionRecord& src = cache_.at({ctx.step, ctx.layer, ctx.head, ctx.pass});
        if (src.n_text() != ctx.n_text) throw ControlError("cached record has a different text length");
        structure_preserve_inplace(src.map, map, ctx.n_text);
        ++counts_.structure_swaps;
    }

    void on_vision_values(const AttentionContext& ctx, Tensor2& v_vision) override {
        if (!spec_.enable_color || !applies(ctx)) return;
        const AttentionRecord& src = cache_.at({ctx.step, ctx.layer, ctx.head, ctx.pass});
        color_preserve_inplace(src.v_vision, v_vision, mask_.token_mask);
        counts_.color_swaps += mask_.token_mask.size() - mask_.count();
    }

    ControlLogEntry take_counts() {
        ControlLogEntry out = counts_;
        counts_ = {};
        return out;
    }

private:
    bool applies(const AttentionContext& ctx) const { return ctx.pass == Pass::cond || control_uncond_; }

    const BranchCache& cache_;
    const EditSpec& spec_;
    const EditMask& mask_;
    std::vector<std::size_t> rows_;
    std::vector<float> scales_;
    bool control_uncond_;
    ControlLogEntry counts_;
};

double rms(const Tensor3& v) {
    double acc = 0.0;
    for (float f : v.data) acc += double(f) * double(f);
    return v.data.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(v.data.size()));
}

std::vector<TokenSpan> spans_for(const TokenSequence& seq, std::span<const std::size_t> words, const char* prompt) {
    std::vector<TokenSpan> spans;
    for (std::size_t w : words) {
        if (w >= seq.n_words()) {
            throw InputError("word index " + std::to_string(w) + " out of range for the " + prompt + " prompt (" +
                             std::to_string(seq.n_words()) + " words within the text length)");
        }
        spans.push_back(seq.word_spans[w]);
    }
    return spans;
}

}  // namespace

Tensor3 Sampler::sample(const TokenSequence& text, const SampleParams& params, AttentionHooks* hooks,
                        const StepCallback& on_step) const {
    params.validate();
    const ModelConfig& cfg = model_->config();
    const TokenSequence uncond = unconditional_tokens(cfg);
    const std::vector<float> sigmas = sigma_schedule(params.steps);
    Tensor3 x = initial_noise(cfg, params.seed);
    for (std::size_t i = 0; i < params.steps; ++i) {
        const Tensor3 v_cond = model_->forward(x, sigmas[i], text, hooks, i, Pass::cond);
        const Tensor3 v_uncond = model_->forward(x, sigmas[i], uncond, hooks, i, Pass::uncond);
        const Tensor3 v = cfg_combine(v_cond, v_uncond, params.cfg_scale);
        euler_step_inplace(x, v, sigmas[i], sigmas[i + 1]);
        if (on_step) on_step(i, sigmas[i], v);
    }
    return x;
}

ImageBuffer Sampler::generate(std::string_view prompt, const SampleParams& params) const {
    return decode_image(sample(tokenize(prompt, model_->config()), params));
}

SourceResult Sampler::run_source(std::string_view prompt, const SampleParams& params) const {
    params.validate();
    const ModelConfig& cfg = model_->config();
    const TokenSequence text = tokenize(prompt, cfg);
    ++source_runs_;
    SourceResult out;
    if (!params.record) {
        out.image = decode_image(sample(text, params));
        return out;
    }
    out.cache = BranchCache(CacheShape::from(cfg, params.steps), params.cache_budget_bytes);
    Recorder recorder(out.cache);
    out.image = decode_image(sample(text, params, &recorder));
    out.cache.finalize();
    SourceInfo& info = out.cache.source();
    info.prompt = std::string(prompt);
    info.image = out.image;
    info.config_digest = cfg.digest();
    info.params_digest = params.digest();
    info.noise_digest = latent_digest(initial_noise(cfg, params.seed));
    return out;
}

EditMask Sampler::edit_mask(const EditSpec& spec, const BranchCache& cache, MaskScores* scores) const {
    const ModelConfig& cfg = model_->config();
    if (spec.edit_words.empty()) {
        if (scores) *scores = MaskScores{std::vector<float>(cfg.n_vision(), 1.0f), false};
        return full_mask(cfg);
    }
    const TokenSequence src = tokenize(spec.source_prompt, cfg);
    const std::vector<TokenSpan> spans = spans_for(src, spec.edit_words, "source");
    MaskScores ms = cache.mask_scores(spans);
    EditMask mask = dilate_mask(binarize_mask(ms.values, spec.epsilon, cfg), spec.mask_dilate, cfg);
    if (scores) *scores = std::move(ms);
    return mask;
}

EditResult Sampler::run_edit(const EditSpec& spec, const SampleParams& params, const BranchCache& cache) const {
    spec.validate();
    params.validate();
    const ModelConfig& cfg = model_->config();
    if (!cache.finalized()) throw StateError("run_edit needs a finalized source cache");
    const SourceInfo& info = cache.source();
    if (info.config_digest != cfg.digest()) throw ControlError("cache was produced by a different model configuration");
    if (info.params_digest != params.digest()) {
        throw ControlError("cache was produced with different sampling parameters (steps/cfg/seed)");
    }
    if (!(cache.shape() == CacheShape::from(cfg, params.steps))) throw ControlError("cache shape does not match the model");
    if (info.prompt != spec.source_prompt) {
        throw ControlError("cache source prompt \"" + info.prompt + "\" != edit source prompt \"" +
                           spec.source_prompt + "\"");
    }
    // Both branches must start from the same noise.
    if (latent_digest(initial_noise(cfg, params.seed)) != info.noise_digest) {
        throw ControlError("target noise digest differs from the cached source noise");
    }

    EditResult out;
    out.source = info.image;
    out.mask = edit_mask(spec, cache, &out.scores);

    const TokenSequence target = tokenize(spec.target_prompt, cfg);
    const TokenSequence source = tokenize(spec.source_prompt, cfg);
    std::vector<std::size_t> rows;
    std::vector<float> scales;
    for (const ReweightTerm& t : spec.reweight) {
        const bool on_source = t.branch == ReweightBranch::source_map;
        const TokenSequence& seq = on_source ? source : target;
        const std::size_t w = t.word_index;
        const std::vector<TokenSpan> spans = spans_for(seq, std::span<const std::size_t>(&w, 1),
                                                       on_source ? "source" : "target");
        for (std::size_t r = spans[0].begin; r < spans[0].end; ++r) {
            rows.push_back(r);
            scales.push_back(t.scale);
        }
    }

    if (!spec.any_control()) {
        // Plain fixed-seed generation of the target prompt.
        out.edited = decode_image(sample(target, params, nullptr, [&](std::size_t i, float sigma, const Tensor3& v) {
            ControlLogEntry e;
            e.step = i;
            e.sigma = sigma;
            e.velocity_rms = rms(v);
            out.log.push_back(e);
        }));
        return out;
    }

    EditController controller(cache, spec, out.mask, std::move(rows), std::move(scales), params.control_uncond);
    out.edited = decode_image(sample(target, params, &controller, [&](std::size_t i, float sigma, const Tensor3& v) {
        ControlLogEntry e = controller.take_counts();
        e.step = i;
        e.sigma = sigma;
        e.velocity_rms = rms(v);
        out.log.push_back(e);
    }));
    return out;
}

}  // namespace colorctrl
