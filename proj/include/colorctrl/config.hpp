#pragma once

#include <cstddef>
#include <cstdint>

namespace colorctrl {

// Scale factors for the seeded random initialisation. There is no training, so
// these only shape how strongly the toy network reacts to its inputs: linear
// layers draw N(0, gain^2 / fan_in). The text stream's qkv uses text_gain on
// top of weight_gain, so the random part of text keys stays small next to the
// grounding component below.
struct InitScheme {
    float weight_gain = 0.8f;
    float text_gain = 0.5f;
    // Output projections (attention and MLP) of the text stream. Small values
    // keep text tokens close to their own embedding through the stack.
    float text_update_gain = 0.2f;
    float embed_std = 1.0f;
    float patch_gain = 0.5f;
    float pos_gain = 1.0f;
    float modulation_gain = 0.5f;
    float out_gain = 1.3f;
    // Per-pixel share of the output head; the rest is one colour per patch.
    float out_detail = 0.1f;
    // Spatial grounding prior. Each vocabulary word carries the 2-D position
    // code of a seeded anchor cell, and every layer's vision-query and
    // text-key projections share one per-head component, so vision tokens
    // near a word's anchor attend to it consistently across layers and heads.
    float anchor_gain = 3.0f;
    float align_gain = 3.0f;
    // Input skip on the velocity head: v += skip_gain (x - 1/2). Without it an
    // untrained network never removes the initial noise; with it samples
    // contract toward mid-gray plus whatever the network adds.
    float skip_gain = 4.0f;
};

struct ModelConfig {
    std::size_t image_size = 32;  // square, pixels
    std::size_t channels = 3;
    std::size_t patch = 2;
    std::size_t n_text = 16;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers = 6;
    std::size_t mlp_ratio = 4;
    std::size_t vocab_size = 4096;
    std::uint64_t init_seed = 0;
    InitScheme init{};

    std::size_t grid() const { return image_size / patch; }
    std::size_t n_vision() const { return grid() * grid(); }
    std::size_t n_tokens() const { return n_text + n_vision(); }
    std::size_t d_head() const { return d_model / n_heads; }
    std::size_t patch_dim() const { return patch * patch * channels; }
    std::size_t mlp_hidden() const { return d_model * mlp_ratio; }

    // Throws InputError when any structural invariant fails.
    void validate() const;
    // Stable 64-bit digest of every field.
    std::uint64_t digest() const;

    bool operator==(const ModelConfig&) const = default;
};

}  // namespace colorctrl
