#include "colorctrl/config.hpp"

#include <bit>
#include <string>
#include <vector>

#include "colorctrl/errors.hpp"
#include "colorctrl/rng.hpp"

namespace colorctrl {

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw InputError("invalid model config: " + msg); };
    if (patch == 0 || image_size == 0 || image_size % patch != 0) fail("image_size must be a positive multiple of patch");
    if (channels != 1 && channels != 3) fail("channels must be 1 or 3");
    if (n_heads == 0 || d_model == 0 || d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
    if (d_model % 4 != 0) fail("d_model must be divisible by 4 (2-D position encoding)");
    if (n_text == 0) fail("n_text must be >= 1");
    if (n_layers == 0) fail("n_layers must be >= 1");
    if (mlp_ratio == 0) fail("mlp_ratio must be >= 1");
    if (vocab_size < 2) fail("vocab_size must be >= 2");
}

std::uint64_t ModelConfig::digest() const {
    std::vector<std::uint64_t> fields = {image_size, channels, patch,      n_text,     d_model, n_heads,
                                         n_layers,   mlp_ratio, vocab_size, init_seed};
    for (float g : {init.weight_gain, init.text_gain, init.text_update_gain, init.embed_std, init.patch_gain, init.pos_gain,
                    init.modulation_gain, init.out_gain, init.out_detail, init.anchor_gain, init.align_gain, init.skip_gain}) {
        fields.push_back(std::bit_cast<std::uint32_t>(g));
    }
    return fnv1a64(fields.data(), fields.size() * sizeof(std::uint64_t));
}

}  // namespace colorctrl
