#include "colorctrl/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "colorctrl/errors.hpp"
#include "colorctrl/kernels.hpp"
#include "colorctrl/rng.hpp"

namespace colorctrl {

namespace {

Linear make_linear(Rng& rng, std::size_t in, std::size_t out, float gain) {
    const float stddev = gain / std::sqrt(static_cast<float>(in));
    return {Tensor2(in, out, seeded_normal(rng, in * out, 0.0f, stddev)), std::vector<float>(out, 0.0f)};
}

Linear zero_linear(std::size_t in, std::size_t out) { return {Tensor2(in, out), std::vector<float>(out, 0.0f)}; }

StreamWeights make_stream(Rng& rng, const ModelConfig& c, float qkv_gain, float update_gain) {
    const std::size_t d = c.d_model;
    StreamWeights s;
    s.modulation = make_linear(rng, d, 6 * d, c.init.modulation_gain);
    s.qkv = make_linear(rng, d, 3 * d, c.init.weight_gain * qkv_gain);
    s.proj = make_linear(rng, d, d, c.init.weight_gain * update_gain);
    s.mlp_in = make_linear(rng, d, c.mlp_hidden(), c.init.weight_gain);
    s.mlp_out = make_linear(rng, c.mlp_hidden(), d, c.init.weight_gain * update_gain);
    return s;
}

StreamWeights zero_stream(const ModelConfig& c) {
    const std::size_t d = c.d_model;
    return {zero_linear(d, 6 * d), zero_linear(d, 3 * d), zero_linear(d, d), zero_linear(d, c.mlp_hidden()),
            zero_linear(c.mlp_hidden(), d)};
}

// Row p: [sin(p w_0..), cos(p w_0..)] over dim/2 frequencies.
void sinusoid_1d(std::span<float> out, float pos) {
    const std::size_t half = out.size() / 2;
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
        out[i] = static_cast<float>(std::sin(pos * freq));
        out[half + i] = static_cast<float>(std::cos(pos * freq));
    }
}

Tensor2 text_positions(const ModelConfig& c) {
    Tensor2 pos(c.n_text, c.d_model);
    for (std::size_t p = 0; p < c.n_text; ++p) {
        sinusoid_1d(pos.row(p), static_cast<float>(p));
        for (float& v : pos.row(p)) v *= c.init.pos_gain;
    }
    return pos;
}

// Smooth 2-D position code: random Fourier features sqrt(2) cos(w . p + b) with
// w ~ N(0, 1/ell^2), so code(p) . code(q) ~ d exp(-|p - q|^2 / (2 ell^2)).
// The frequencies come from a fixed stream; the code does not depend on init_seed.
Tensor2 vision_positions(const ModelConfig& c) {
    const std::size_t g = c.grid();
    const double ell = std::max(1.0, static_cast<double>(g) / 6.0);
    Rng rng(0x706f736974696f6eULL);
    const std::vector<float> w = seeded_normal(rng, 2 * c.d_model, 0.0f, static_cast<float>(1.0 / ell));
    std::vector<double> phase(c.d_model);
    for (double& b : phase) b = 2.0 * 3.14159265358979323846 * rng.next_unit();
    Tensor2 pos(c.n_vision(), c.d_model);
    for (std::size_t y = 0; y < g; ++y) {
        for (std::size_t x = 0; x < g; ++x) {
            auto row = pos.row(y * g + x);
            for (std::size_t j = 0; j < c.d_model; ++j) {
                const double arg = double(w[2 * j]) * double(y) + double(w[2 * j + 1]) * double(x) + phase[j];
                row[j] = static_cast<float>(std::sqrt(2.0) * std::cos(arg)) * c.init.pos_gain;
            }
        }
    }
    return pos;
}

// x <- LN(x) * (1 + scale) + shift, in a fresh tensor.
Tensor2 modulated_norm(const Tensor2& x, std::span<const float> shift, std::span<const float> scale) {
    Tensor2 out = x;
    kernels::layer_norm_rows_inplace(out);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = row[j] * (1.0f + scale[j]) + shift[j];
    }
    return out;
}

// x += (1 + gate) * delta, gate broadcast over rows.
void gated_residual(Tensor2& x, const Tensor2& delta, std::span<const float> gate) {
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        auto drow = delta.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += (1.0f + gate[j]) * drow[j];
    }
}

void silu_inplace(Tensor2& x) {
    for (float& v : x.data()) v = silu(v);
}

void check_heads(const Tensor2& q, const Tensor2& k, const Tensor2& v, std::span<const float> key_bias,
                 const AttentionContext& ctx) {
    if (q.rows() != k.rows() || k.rows() != v.rows() || q.cols() != k.cols()) {
        throw ShapeError("attend_head: q/k/v shape mismatch");
    }
    if (key_bias.size() != k.rows()) throw ShapeError("attend_head: key bias length mismatch");
    if (ctx.n_text > q.rows()) throw ShapeError("attend_head: n_text exceeds token count");
}

}  // namespace

Tensor2 Linear::apply(const Tensor2& x) const {
    Tensor2 out = kernels::matmul(x, weight);
    kernels::add_row_bias(out, bias);
    return out;
}

ModelWeights ModelWeights::random(const ModelConfig& c) {
    c.validate();
    Rng rng(c.init_seed);
    ModelWeights w;
    const std::size_t d = c.d_model;
    w.token_embedding = Tensor2(c.vocab_size, d, seeded_normal(rng, c.vocab_size * d, 0.0f, c.init.embed_std));
    w.text_pos = text_positions(c);
    w.vision_pos = vision_positions(c);
    w.patch_embed = make_linear(rng, c.patch_dim(), d, c.init.patch_gain);
    w.time_in = make_linear(rng, d, d, c.init.weight_gain);
    w.time_out = make_linear(rng, d, d, c.init.weight_gain);
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        BlockWeights b;
        b.text = make_stream(rng, c, c.init.text_gain, c.init.text_update_gain);
        b.vision = make_stream(rng, c, 1.0f, 1.0f);
        w.blocks.push_back(std::move(b));
    }
    w.final_modulation = make_linear(rng, d, 2 * d, c.init.modulation_gain);
    // Output head: one colour projection shared by every pixel of a patch, plus
    // a small per-pixel term, so samples are smooth below the patch scale.
    w.final_proj = make_linear(rng, d, c.patch_dim(), c.init.out_gain * c.init.out_detail);
    {
        const Linear shared = make_linear(rng, d, c.channels, c.init.out_gain);
        for (std::size_t r = 0; r < d; ++r) {
            for (std::size_t j = 0; j < c.patch_dim(); ++j) w.final_proj.weight(r, j) += shared.weight(r, j % c.channels);
        }
    }
    w.input_skip = zero_linear(c.patch_dim(), c.patch_dim());
    for (std::size_t i = 0; i < c.patch_dim(); ++i) {
        w.input_skip.weight(i, i) = c.init.skip_gain;
        w.input_skip.bias[i] = -0.5f * c.init.skip_gain;
    }

    // Grounding prior, drawn last so the plain weights above do not depend on it.
    const std::size_t g = c.grid();
    const std::size_t margin = g >= 8 ? 2 : 0;
    w.token_anchor.assign(c.vocab_size, 0);
    for (std::size_t v = 1; v < c.vocab_size; ++v) {
        const std::size_t ay = margin + rng.next_u64() % (g - 2 * margin);
        const std::size_t ax = margin + rng.next_u64() % (g - 2 * margin);
        w.token_anchor[v] = static_cast<std::uint32_t>(ay * g + ax);
    }
    const std::size_t dh = c.d_head();
    for (std::size_t h = 0; h < c.n_heads; ++h) {
        const std::vector<float> a = seeded_normal(rng, d * dh, 0.0f, c.init.align_gain / std::sqrt(float(d)));
        for (BlockWeights& b : w.blocks) {
            for (std::size_t r = 0; r < d; ++r) {
                for (std::size_t j = 0; j < dh; ++j) {
                    b.vision.qkv.weight(r, h * dh + j) += a[r * dh + j];          // query slice
                    b.text.qkv.weight(r, d + h * dh + j) += a[r * dh + j];        // key slice
                }
            }
        }
    }
    return w;
}

ModelWeights ModelWeights::zeros(const ModelConfig& c) {
    c.validate();
    ModelWeights w;
    const std::size_t d = c.d_model;
    w.token_embedding = Tensor2(c.vocab_size, d);
    w.text_pos = Tensor2(c.n_text, d);
    w.vision_pos = Tensor2(c.n_vision(), d);
    w.patch_embed = zero_linear(c.patch_dim(), d);
    w.time_in = zero_linear(d, d);
    w.time_out = zero_linear(d, d);
    for (std::size_t l = 0; l < c.n_layers; ++l) w.blocks.push_back({zero_stream(c), zero_stream(c)});
    w.final_modulation = zero_linear(d, 2 * d);
    w.final_proj = zero_linear(d, c.patch_dim());
    w.input_skip = zero_linear(c.patch_dim(), c.patch_dim());
    w.token_anchor.assign(c.vocab_size, 0);
    return w;
}

std::vector<float> key_padding_bias(const TokenSequence& text, const ModelConfig& config) {
    if (text.token_ids.size() != config.n_text) throw ShapeError("token sequence length != n_text");
    std::vector<float> bias(config.n_tokens(), 0.0f);
    for (std::size_t p = 0; p < config.n_text; ++p) {
        if (text.token_ids[p] == kPadToken) bias[p] = kPadKeyBias;
    }
    return bias;
}

HeadAttention attend_head(const Tensor2& q, const Tensor2& k, const Tensor2& v, std::span<const float> key_bias,
                          const AttentionContext& ctx, AttentionHooks* hooks) {
    check_heads(q, k, v, key_bias, ctx);
    const std::size_t n = q.rows();
    const std::size_t n_text = ctx.n_text;

    Tensor2 scores = kernels::matmul_bt(q, k);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = scores.row(i);
        for (std::size_t j = 0; j < n_text; ++j) row[j] += key_bias[j];
    }
    if (hooks) hooks->on_scores(ctx, scores);

    const bool record = hooks && hooks->wants_record(ctx);
    Tensor2 score_rows = record ? scores.rows_slice(0, n_text) : Tensor2{};

    // Softmax in place: `scores` becomes the map.
    const float scale = 1.0f / std::sqrt(static_cast<float>(q.cols()));
    Tensor2 map = std::move(scores);
    kernels::softmax_rows_inplace(map, scale);
    if (hooks) hooks->on_map(ctx, map);

    Tensor2 v_text = v.rows_slice(0, n_text);
    Tensor2 v_vision = v.rows_slice(n_text, n);
    if (hooks) hooks->on_vision_values(ctx, v_vision);
    if (v_vision.rows() != n - n_text || v_vision.cols() != v.cols()) {
        throw ControlError("controller changed the vision value shape");
    }

    HeadAttention result;
    result.out = kernels::matmul(map, vstack(v_text, v_vision));
    if (record) {
        result.recorded = true;
        result.record.step = ctx.step;
        result.record.layer = ctx.layer;
        result.record.head = ctx.head;
        result.record.pass = ctx.pass;
        result.record.scores = std::move(score_rows);
        result.record.map = std::move(map);
        result.record.v_text = std::move(v_text);
        result.record.v_vision = std::move(v_vision);
    }
    return result;
}

JointAttentionResult joint_attention(const Tensor2& x_text, const Tensor2& x_vision, const JointAttentionWeights& weights,
                                     std::size_t head, std::size_t n_heads, std::span<const float> key_bias,
                                     const AttentionContext& ctx, AttentionHooks* hooks) {
    if (!weights.text_qkv || !weights.vision_qkv) throw InputError("joint_attention: missing weights");
    if (ctx.n_text != x_text.rows()) {
        throw ControlError("joint_attention: context n_text " + std::to_string(ctx.n_text) + " != " +
                           std::to_string(x_text.rows()) + " text rows");
    }
    const std::size_t d = weights.text_qkv->in();
    if (n_heads == 0 || d % n_heads != 0 || head >= n_heads) throw ShapeError("joint_attention: bad head index");
    const std::size_t dh = d / n_heads;
    const Tensor2 qkv_t = weights.text_qkv->apply(x_text);
    const Tensor2 qkv_v = weights.vision_qkv->apply(x_vision);
    auto part = [&](std::size_t which) {
        const std::size_t c0 = which * d + head * dh;
        return vstack(qkv_t.cols_slice(c0, c0 + dh), qkv_v.cols_slice(c0, c0 + dh));
    };
    HeadAttention ha = attend_head(part(0), part(1), part(2), key_bias, ctx, hooks);
    JointAttentionResult out;
    out.out_text = ha.out.rows_slice(0, x_text.rows());
    out.out_vision = ha.out.rows_slice(x_text.rows(), ha.out.rows());
    out.record = std::move(ha.record);
    out.recorded = ha.recorded;
    return out;
}

Tensor2 patchify(const Tensor3& x, std::size_t patch) {
    const std::size_t gh = x.height / patch;
    const std::size_t gw = x.width / patch;
    Tensor2 out(gh * gw, patch * patch * x.channels);
    for (std::size_t gy = 0; gy < gh; ++gy) {
        for (std::size_t gx = 0; gx < gw; ++gx) {
            auto row = out.row(gy * gw + gx);
            std::size_t i = 0;
            for (std::size_t py = 0; py < patch; ++py) {
                for (std::size_t px = 0; px < patch; ++px) {
                    for (std::size_t c = 0; c < x.channels; ++c) {
                        row[i++] = x.at(gy * patch + py, gx * patch + px, c);
                    }
                }
            }
        }
    }
    return out;
}

Tensor3 unpatchify(const Tensor2& tokens, std::size_t patch, std::size_t height, std::size_t width,
                   std::size_t channels) {
    const std::size_t gw = width / patch;
    if (tokens.rows() != (height / patch) * gw || tokens.cols() != patch * patch * channels) {
        throw ShapeError("unpatchify: token shape does not match image");
    }
    Tensor3 out(height, width, channels);
    for (std::size_t t = 0; t < tokens.rows(); ++t) {
        const std::size_t gy = t / gw;
        const std::size_t gx = t % gw;
        auto row = tokens.row(t);
        std::size_t i = 0;
        for (std::size_t py = 0; py < patch; ++py) {
            for (std::size_t px = 0; px < patch; ++px) {
                for (std::size_t c = 0; c < channels; ++c) out.at(gy * patch + py, gx * patch + px, c) = row[i++];
            }
        }
    }
    return out;
}

std::vector<float> timestep_embedding(float t, std::size_t dim) {
    std::vector<float> out(dim, 0.0f);
    sinusoid_1d(out, t);
    return out;
}

Model::Model(const ModelConfig& config) : Model(config, ModelWeights::random(config)) {}

Model::Model(const ModelConfig& config, ModelWeights weights) : config_(config), weights_(std::move(weights)) {
    config_.validate();
    if (weights_.blocks.size() != config_.n_layers || weights_.token_embedding.rows() != config_.vocab_size ||
        weights_.token_anchor.size() != config_.vocab_size ||
        weights_.token_embedding.cols() != config_.d_model) {
        throw ShapeError("model weights do not match config");
    }
}

Tensor3 Model::forward(const Tensor3& x_t, float t, const TokenSequence& text, AttentionHooks* hooks,
                       std::size_t step, Pass pass) const {
    const ModelConfig& c = config_;
    const ModelWeights& w = weights_;
    if (x_t.height != c.image_size || x_t.width != c.image_size || x_t.channels != c.channels) {
        throw ShapeError("latent shape does not match model config");
    }
    if (text.token_ids.size() != c.n_text) throw ShapeError("token sequence length != n_text");
    const std::size_t d = c.d_model;
    const std::size_t dh = c.d_head();
    const std::size_t n_text = c.n_text;
    const std::size_t n_vision = c.n_vision();

    const Tensor2 patches = patchify(x_t, c.patch);
    Tensor2 hv = w.patch_embed.apply(patches);
    for (std::size_t i = 0; i < hv.size(); ++i) hv.data()[i] += w.vision_pos.data()[i];
    Tensor2 ht(n_text, d);
    for (std::size_t p = 0; p < n_text; ++p) {
        auto emb = w.token_embedding.row(static_cast<std::size_t>(text.token_ids[p]));
        auto pos = w.text_pos.row(p);
        auto row = ht.row(p);
        for (std::size_t j = 0; j < d; ++j) row[j] = emb[j] + pos[j];
        const std::int32_t g = p < text.ground_ids.size() ? text.ground_ids[p] : kPadToken;
        if (g != kPadToken && c.init.anchor_gain != 0.0f) {
            auto anchor = w.vision_pos.row(w.token_anchor[static_cast<std::size_t>(g)]);
            for (std::size_t j = 0; j < d; ++j) row[j] += c.init.anchor_gain * anchor[j];
        }
    }

    // Conditioning vector: silu(time_out(silu(time_in(sinusoid(1000 t))))).
    Tensor2 cond(1, d, timestep_embedding(1000.0f * t, d));
    cond = w.time_in.apply(cond);
    silu_inplace(cond);
    cond = w.time_out.apply(cond);
    silu_inplace(cond);

    const std::vector<float> key_bias = key_padding_bias(text, c);

    for (std::size_t l = 0; l < c.n_layers; ++l) {
        const BlockWeights& block = w.blocks[l];
        const Tensor2 mod_t = block.text.modulation.apply(cond);
        const Tensor2 mod_v = block.vision.modulation.apply(cond);
        auto chunk = [d](const Tensor2& m, std::size_t i) { return m.row(0).subspan(i * d, d); };

        const Tensor2 qkv_t = block.text.qkv.apply(modulated_norm(ht, chunk(mod_t, 0), chunk(mod_t, 1)));
        const Tensor2 qkv_v = block.vision.qkv.apply(modulated_norm(hv, chunk(mod_v, 0), chunk(mod_v, 1)));

        Tensor2 attn_t(n_text, d);
        Tensor2 attn_v(n_vision, d);
        for (std::size_t h = 0; h < c.n_heads; ++h) {
            auto part = [&](std::size_t which) {
                const std::size_t c0 = which * d + h * dh;
                return vstack(qkv_t.cols_slice(c0, c0 + dh), qkv_v.cols_slice(c0, c0 + dh));
            };
            const AttentionContext ctx{step, l, h, pass, n_text};
            HeadAttention ha = attend_head(part(0), part(1), part(2), key_bias, ctx, hooks);
            for (std::size_t r = 0; r < n_text + n_vision; ++r) {
                auto src = ha.out.row(r);
                float* dst = r < n_text ? &attn_t(r, h * dh) : &attn_v(r - n_text, h * dh);
                std::copy(src.begin(), src.end(), dst);
            }
            if (ha.recorded) hooks->on_record(std::move(ha.record));
        }

        gated_residual(ht, block.text.proj.apply(attn_t), chunk(mod_t, 2));
        gated_residual(hv, block.vision.proj.apply(attn_v), chunk(mod_v, 2));

        auto mlp = [&](const StreamWeights& s, const Tensor2& x, const Tensor2& mod) {
            Tensor2 hidden = s.mlp_in.apply(modulated_norm(x, chunk(mod, 3), chunk(mod, 4)));
            kernels::gelu_inplace(hidden);
            return s.mlp_out.apply(hidden);
        };
        gated_residual(ht, mlp(block.text, ht, mod_t), chunk(mod_t, 5));
        gated_residual(hv, mlp(block.vision, hv, mod_v), chunk(mod_v, 5));
    }

    const Tensor2 fmod = w.final_modulation.apply(cond);
    Tensor2 out = w.final_proj.apply(modulated_norm(hv, fmod.row(0).subspan(0, d), fmod.row(0).subspan(d, d)));
    const Tensor2 skip = w.input_skip.apply(patches);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += skip.data()[i];
    return unpatchify(out, c.patch, c.image_size, c.image_size, c.channels);
}

}  // namespace colorctrl
