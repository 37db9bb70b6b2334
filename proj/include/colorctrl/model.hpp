#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "colorctrl/config.hpp"
#include "colorctrl/tensor.hpp"
#include "colorctrl/tokenizer.hpp"

namespace colorctrl {

// Which classifier-free-guidance pass an attention call belongs to.
enum class Pass : std::uint8_t { cond = 0, uncond = 1 };

struct AttentionContext {
    std::size_t step = 0;
    std::size_t layer = 0;
    std::size_t head = 0;
    Pass pass = Pass::cond;
    std::size_t n_text = 0;
};

// One head's attention state at one (step, layer, pass). Token order inside
// every matrix is [text; vision].
struct AttentionRecord {
    std::size_t step = 0;
    std::size_t layer = 0;
    std::size_t head = 0;
    Pass pass = Pass::cond;
    Tensor2 scores;    // pre-softmax scores of the text-query rows: n_text x n_tokens
    Tensor2 map;       // post-softmax map: n_tokens x n_tokens
    Tensor2 v_text;    // n_text x d_head
    Tensor2 v_vision;  // n_vision x d_head

    std::size_t n_text() const { return v_text.rows(); }
    std::size_t payload_floats() const { return scores.size() + map.size() + v_text.size() + v_vision.size(); }
    std::size_t payload_bytes() const { return payload_floats() * sizeof(float); }
};

// Controller interface. The attention kernel calls these in a fixed order:
// on_scores (pre-softmax) -> softmax -> on_map -> on_vision_values -> map * V.
// Default implementations are no-ops.
class AttentionHooks {
public:
    virtual ~AttentionHooks() = default;

    virtual void on_scores(const AttentionContext&, Tensor2& /*scores*/) {}
    virtual void on_map(const AttentionContext&, Tensor2& /*map*/) {}
    virtual void on_vision_values(const AttentionContext&, Tensor2& /*v_vision*/) {}

    virtual bool wants_record(const AttentionContext&) const { return false; }
    virtual void on_record(AttentionRecord&& /*record*/) {}
};

struct Linear {
    Tensor2 weight;  // in x out
    std::vector<float> bias;

    std::size_t in() const { return weight.rows(); }
    std::size_t out() const { return weight.cols(); }
    Tensor2 apply(const Tensor2& x) const;
};

// MM-DiT keeps separate projections per modality; attention is joint.
struct StreamWeights {
    Linear modulation;  // d -> 6d: shift/scale/gate for attention and MLP
    Linear qkv;         // d -> 3d
    Linear proj;        // d -> d
    Linear mlp_in;      // d -> hidden
    Linear mlp_out;     // hidden -> d
};

struct BlockWeights {
    StreamWeights text;
    StreamWeights vision;
};

struct ModelWeights {
    Tensor2 token_embedding;  // vocab x d
    Tensor2 text_pos;         // n_text x d (fixed sinusoid)
    Tensor2 vision_pos;       // n_vision x d (fixed 2-D sinusoid)
    Linear patch_embed;       // patch_dim -> d
    Linear time_in;           // d -> d
    Linear time_out;          // d -> d
    std::vector<BlockWeights> blocks;
    Linear final_modulation;  // d -> 2d
    Linear final_proj;        // d -> patch_dim
    Linear input_skip;        // patch_dim -> patch_dim, added to the velocity
    std::vector<std::uint32_t> token_anchor;  // vocab -> vision cell of its grounding code

    static ModelWeights random(const ModelConfig& config);
    static ModelWeights zeros(const ModelConfig& config);
};

// Additive pre-softmax bias per key column: a large negative value on pad
// text positions, zero elsewhere.
std::vector<float> key_padding_bias(const TokenSequence& text, const ModelConfig& config);
inline constexpr float kPadKeyBias = -1.0e9f;

struct HeadAttention {
    Tensor2 out;  // n_tokens x d_head, rows [text; vision]
    AttentionRecord record;
    bool recorded = false;
};

// Single-head joint attention over already-projected q/k/v (rows [text; vision]).
HeadAttention attend_head(const Tensor2& q, const Tensor2& k, const Tensor2& v, std::span<const float> key_bias,
                          const AttentionContext& ctx, AttentionHooks* hooks);

struct JointAttentionWeights {
    const Linear* text_qkv = nullptr;
    const Linear* vision_qkv = nullptr;
};

struct JointAttentionResult {
    Tensor2 out_text;
    Tensor2 out_vision;
    AttentionRecord record;
    bool recorded = false;
};

// Projects both streams with their own qkv weights, concatenates the tokens,
// and runs one head of joint attention with the controller hooks.
JointAttentionResult joint_attention(const Tensor2& x_text, const Tensor2& x_vision, const JointAttentionWeights& weights,
                                     std::size_t head, std::size_t n_heads, std::span<const float> key_bias,
                                     const AttentionContext& ctx, AttentionHooks* hooks = nullptr);

// (H, W, C) latent <-> (n_vision, patch*patch*C) tokens, patch-major then (py, px, c).
Tensor2 patchify(const Tensor3& x, std::size_t patch);
Tensor3 unpatchify(const Tensor2& tokens, std::size_t patch, std::size_t height, std::size_t width,
                   std::size_t channels);

// Sinusoidal embedding of a scalar timestep, width `dim`.
std::vector<float> timestep_embedding(float t, std::size_t dim);

class Model {
public:
    explicit Model(const ModelConfig& config);
    Model(const ModelConfig& config, ModelWeights weights);

    const ModelConfig& config() const { return config_; }
    const ModelWeights& weights() const { return weights_; }

    // Velocity prediction for latent x_t at noise level t in [0, 1].
    Tensor3 forward(const Tensor3& x_t, float t, const TokenSequence& text, AttentionHooks* hooks = nullptr,
                    std::size_t step = 0, Pass pass = Pass::cond) const;

private:
    ModelConfig config_;
    ModelWeights weights_;
};

}  // namespace colorctrl
