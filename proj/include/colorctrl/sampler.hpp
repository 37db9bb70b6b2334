#pragma once

// Rectified-flow Euler sampling with classifier-free guidance, and the
// source/target orchestration: the source branch records every attention
// record into a BranchCache, target branches replay it through the
// attention-control hooks.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "colorctrl/attention_control.hpp"
#include "colorctrl/cache.hpp"
#include "colorctrl/image.hpp"
#include "colorctrl/model.hpp"
#include "colorctrl/tensor.hpp"
#include "json.hpp"

namespace colorctrl {

struct SampleParams {
    std::size_t steps = 28;
    float cfg_scale = 7.5f;
    std::uint64_t seed = 42;
    bool record = true;
    // Apply structure/colour control on the unconditional pass as well.
    bool control_uncond = true;
    std::size_t cache_budget_bytes = 0;  // 0 = unbounded

    // InputError unless steps >= 1 and cfg_scale >= 1.
    void validate() const;
    // Digest of the fields that shape the source branch (steps, cfg, seed).
    std::uint64_t digest() const;
};

// sigma_i = 1 - i/steps for i = 0..steps (steps + 1 values, last is 0).
std::vector<float> sigma_schedule(std::size_t steps);

// x + (sigma_next - sigma_curr) v. ScheduleError unless sigma_curr > sigma_next >= 0.
Tensor3 euler_step(const Tensor3& x, const Tensor3& v, float sigma_curr, float sigma_next);
void euler_step_inplace(Tensor3& x, const Tensor3& v, float sigma_curr, float sigma_next);

// v_uncond + w (v_cond - v_uncond); w == 1 returns v_cond exactly.
Tensor3 cfg_combine(const Tensor3& v_cond, const Tensor3& v_uncond, float w);

// N(0, 1) pixel-space noise drawn from Rng(seed).
Tensor3 initial_noise(const ModelConfig& config, std::uint64_t seed);
std::uint64_t latent_digest(const Tensor3& x);

// Clamps to [0, 1] and rounds to 8-bit.
ImageBuffer decode_image(const Tensor3& x);

enum class ReweightBranch { source_map, target_map };

struct ReweightTerm {
    std::size_t word_index = 0;
    float scale = 1.0f;
    // source_map: the index refers to the source prompt's words; target_map:
    // to the target prompt's. Scaling always lands on the target branch.
    ReweightBranch branch = ReweightBranch::target_map;
};

struct EditSpec {
    std::string source_prompt;
    std::string target_prompt;
    std::vector<std::size_t> edit_words;  // word indices into the source prompt
    std::vector<ReweightTerm> reweight;
    float epsilon = kDefaultMaskEpsilon;
    bool enable_structure = true;
    bool enable_color = true;
    std::size_t mask_dilate = 0;  // token-grid dilation of the edit mask

    // InputError on epsilon outside (0, 1), negative scales, or colour
    // preservation without edit words.
    void validate() const;
    bool any_control() const;
};

struct ControlLogEntry {
    std::size_t step = 0;
    float sigma = 0.0f;
    std::size_t structure_swaps = 0;  // maps whose vision-to-vision block was replaced
    std::size_t color_swaps = 0;      // value rows copied from the source
    std::size_t reweighted_rows = 0;
    double velocity_rms = 0.0;
};

struct SourceResult {
    ImageBuffer image;
    BranchCache cache;  // empty and unfinalized when params.record is false
};

struct EditResult {
    ImageBuffer edited;
    ImageBuffer source;
    EditMask mask;
    MaskScores scores;
    std::vector<ControlLogEntry> log;
};

nlohmann::ordered_json to_json(const ControlLogEntry& e);
nlohmann::ordered_json control_log_json(const EditSpec& spec, const EditResult& result);

class Sampler {
public:
    explicit Sampler(const Model& model) : model_(&model) {}

    const Model& model() const { return *model_; }

    // Called after each Euler step with the guided velocity of that step.
    using StepCallback = std::function<void(std::size_t step, float sigma, const Tensor3& velocity)>;

    // Plain CFG generation. `hooks` sees both passes of every step.
    Tensor3 sample(const TokenSequence& text, const SampleParams& params, AttentionHooks* hooks = nullptr,
                   const StepCallback& on_step = {}) const;
    ImageBuffer generate(std::string_view prompt, const SampleParams& params) const;

    // Source branch: generation plus a finalized cache of every record.
    SourceResult run_source(std::string_view prompt, const SampleParams& params) const;

    // Target branch against a finalized cache from the same model and params.
    // StateError for an unfinalized cache, ControlError for a foreign one.
    EditResult run_edit(const EditSpec& spec, const SampleParams& params, const BranchCache& cache) const;

    // Mask the edit would use, without running the target branch.
    EditMask edit_mask(const EditSpec& spec, const BranchCache& cache, MaskScores* scores = nullptr) const;

    std::size_t source_runs() const { return source_runs_.load(); }

private:
    const Model* model_;
    mutable std::atomic<std::size_t> source_runs_{0};
};

}  // namespace colorctrl
