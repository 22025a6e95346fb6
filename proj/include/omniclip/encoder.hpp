#pragma once

#include "omniclip/backbone.hpp"
#include "omniclip/pta.hpp"
#include "omniclip/spg.hpp"

namespace omniclip {

// One frozen spatial block plus its optional temporal adapter and fusion
// gate. The variant decides how the two couple (block_forward below).
struct SpatialTemporalBlock {
    ViTBlock spatial;
    bool has_adapter = false;
    ParallelTemporalAdapter adapter;
    FusionGate gate;
};

struct HeatmapResult {
    Tensor grid;        // [B,T,side,side] class-token attention over patches
    Tensor mass;        // [B,T] attention mass on patch keys (pre-normalization)
    double max_row_dev; // max |row sum - 1| over all attention rows at the probed layer
};

class OmniVideoEncoder {
public:
    OmniVideoEncoder() = default;
    explicit OmniVideoEncoder(const ModelConfig& cfg);

    // Full pipeline: tokens -> encodings -> prompts -> L blocks -> per-frame
    // class feature -> frame projection -> MHA over frames -> mean.
    Var encode_video(const Tensor& pixels) const; // [B,T,C,H,W] -> [B,out_dim]
    Var encode_packed(const Tensor& packed) const; // prepacked patch rasters

    // Couples spatial block i with its adapter per the configured variant.
    Var block_forward(std::size_t i, const Var& tokens, Var* attn_probs = nullptr) const;

    Tensor attention_heatmap(const Tensor& pixels, std::size_t layer) const;
    HeatmapResult attention_heatmap_full(const Tensor& pixels, std::size_t layer) const;

    const ModelConfig& config() const { return cfg_; }
    void collect(ParamList& out) const;

    PatchEmbedder patch;
    Encodings enc;
    SelfPromptGenerator spg;
    std::vector<SpatialTemporalBlock> blocks;
    Var frame_w, frame_b; // d -> out_dim
    MhaParams agg;        // frame aggregation at out_dim width

private:
    Var run_blocks(Var tokens, std::size_t capture_layer, Var* attn_probs) const;
    ModelConfig cfg_;
};

} // namespace omniclip
