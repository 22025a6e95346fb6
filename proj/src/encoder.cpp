#include "omniclip/encoder.hpp"

#include <cmath>

namespace omniclip {

OmniVideoEncoder::OmniVideoEncoder(const ModelConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    patch = PatchEmbedder("video.patch", cfg, false);
    enc = Encodings("video.enc", cfg);
    if (cfg.spg_enabled) spg = SelfPromptGenerator("video.spg", cfg);
    blocks.resize(cfg.depth);
    for (std::size_t i = 0; i < cfg.depth; ++i) {
        std::string prefix = "video.block" + std::to_string(i);
        blocks[i].spatial = ViTBlock(prefix, cfg.dim, cfg.heads, cfg.seed, false);
        if (cfg.block_has_pta(i)) {
            blocks[i].has_adapter = true;
            blocks[i].adapter = ParallelTemporalAdapter(prefix + ".pta", cfg);
            blocks[i].gate = FusionGate(prefix + ".alpha", cfg.seed);
        }
    }
    frame_w = make_linear_weight("video.frame_proj.w", cfg.dim, cfg.out_dim, cfg.seed, true);
    frame_b = make_param("video.frame_proj.b", {cfg.out_dim}, cfg.seed, true, Init::Zero);
    agg = make_mha("video.agg", cfg.out_dim, cfg.agg_heads, cfg.seed, true);
}

Var OmniVideoEncoder::block_forward(std::size_t i, const Var& tokens, Var* attn_probs) const {
    if (i >= blocks.size()) throw ShapeError("block index out of range");
    const SpatialTemporalBlock& blk = blocks[i];
    if (!blk.has_adapter) return blk.spatial.forward(tokens, attn_probs);
    switch (cfg_.variant) {
    case Variant::BlockParallel:
        return fuse(blk.spatial.forward(tokens, attn_probs), blk.adapter.forward(tokens), blk.gate);
    case Variant::AttentionParallel: {
        Var h = fuse(blk.spatial.attention_sublayer(tokens, attn_probs), blk.adapter.forward(tokens), blk.gate);
        return blk.spatial.mlp_sublayer(h);
    }
    case Variant::Cascade:
        return blk.spatial.forward(fuse(tokens, blk.adapter.forward(tokens), blk.gate), attn_probs);
    }
    throw ConfigError("unknown variant");
}

Var OmniVideoEncoder::run_blocks(Var tokens, std::size_t capture_layer, Var* attn_probs) const {
    std::size_t n_base = 1 + cfg_.patch_count();
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (cfg_.spg_enabled && cfg_.spg_per_layer && i > 0) {
            Var base = slice(tokens, 2, 0, n_base);
            tokens = concat_prompts(base, spg.generate(base));
        }
        tokens = block_forward(i, tokens, i == capture_layer ? attn_probs : nullptr);
    }
    return tokens;
}

Var OmniVideoEncoder::encode_packed(const Tensor& packed) const {
    Var tokens = patch.embed_packed(packed); // [B,T,1+K,d]
    tokens = add_encodings(tokens, enc);
    if (cfg_.spg_enabled) tokens = concat_prompts(tokens, spg.generate(tokens));
    tokens = run_blocks(tokens, blocks.size(), nullptr);

    std::size_t b = tokens.shape()[0], t = tokens.shape()[1];
    Var cls_feat = reshape(slice(tokens, 2, 0, 1), {b, t, cfg_.dim});
    Var frames = linear(cls_feat, frame_w, frame_b); // [B,T,out_dim]
    // canonical reductions: the video feature must be exactly invariant
    // under frame permutations whenever nothing upstream marks frame order
    Var mixed = multi_head_attention(frames, agg, nullptr, /*canonical=*/true);
    return mean_canon(mixed, 1); // [B,out_dim]
}

Var OmniVideoEncoder::encode_video(const Tensor& pixels) const {
    return encode_packed(PatchEmbedder::rearrange(pixels, cfg_.patch));
}

HeatmapResult OmniVideoEncoder::attention_heatmap_full(const Tensor& pixels, std::size_t layer) const {
    if (layer >= blocks.size()) throw ShapeError("attention_heatmap: invalid layer index " + std::to_string(layer));
    Var tokens = patch.embed_packed(PatchEmbedder::rearrange(pixels, cfg_.patch));
    tokens = add_encodings(tokens, enc);
    if (cfg_.spg_enabled) tokens = concat_prompts(tokens, spg.generate(tokens));
    Var probs; // [B,T,H,N,N]
    run_blocks(tokens, layer, &probs);
    if (!probs.defined()) throw ShapeError("attention_heatmap: no attention captured");

    const Shape& s = probs.shape();
    std::size_t b = s[0], t = s[1], heads = s[2], n = s[4];
    std::size_t k = cfg_.patch_count();
    std::size_t side = cfg_.patches_per_side();
    const Tensor& p = probs.value();

    double max_dev = 0.0;
    for (std::size_t row = 0; row < p.size() / n; ++row) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += p[row * n + j];
        max_dev = std::max(max_dev, std::fabs(sum - 1.0));
    }

    HeatmapResult res;
    res.grid = Tensor({b, t, side, side});
    res.mass = Tensor({b, t});
    res.max_row_dev = max_dev;
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t ti = 0; ti < t; ++ti) {
            double mass = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                double v = 0.0;
                // class-token query row, averaged over heads
                for (std::size_t hi = 0; hi < heads; ++hi)
                    v += p[(((bi * t + ti) * heads + hi) * n + 0) * n + (1 + j)];
                v /= static_cast<double>(heads);
                res.grid[((bi * t + ti) * side + j / side) * side + (j % side)] = v;
                mass += v;
            }
            res.mass[bi * t + ti] = mass;
        }
    return res;
}

Tensor OmniVideoEncoder::attention_heatmap(const Tensor& pixels, std::size_t layer) const {
    return attention_heatmap_full(pixels, layer).grid;
}

void OmniVideoEncoder::collect(ParamList& out) const {
    patch.collect(out);
    enc.collect(out);
    spg.collect(out);
    for (const auto& blk : blocks) {
        blk.spatial.collect(out);
        if (blk.has_adapter) {
            blk.adapter.collect(out);
            blk.gate.collect(out);
        }
    }
    out.push_back({frame_w.name(), frame_w});
    out.push_back({frame_b.name(), frame_b});
    collect_mha(agg, out);
}

} // namespace omniclip
