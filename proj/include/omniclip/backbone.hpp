#pragma once

#include <map>
#include <string>
#include <vector>

#include "omniclip/config.hpp"
#include "omniclip/ops.hpp"
#include "omniclip/params.hpp"

namespace omniclip {

MhaParams make_mha(const std::string& prefix, std::size_t d, std::size_t heads, std::uint64_t seed, bool trainable);
void collect_mha(const MhaParams& p, ParamList& out);

struct LayerNormParams {
    Var gamma, beta;
};

// Pre-norm transformer block: x + MHA(LN1 x), then h + MLP(LN2 h) with a
// 4x gelu MLP. Frozen blocks are constructed with non-trainable leaves.
struct ViTBlock {
    LayerNormParams ln1, ln2;
    MhaParams attn;
    Var w1, b1, w2, b2;

    ViTBlock() = default;
    ViTBlock(const std::string& prefix, std::size_t d, std::size_t heads, std::uint64_t seed, bool trainable);

    Var attention_sublayer(const Var& x, Var* attn_probs = nullptr) const;
    Var mlp_sublayer(const Var& h) const;
    Var forward(const Var& x, Var* attn_probs = nullptr) const;
    void collect(ParamList& out) const;
};

// Linear patch projection plus the prepended class token.
struct PatchEmbedder {
    std::size_t patch = 0, channels = 0, dim = 0, image = 0;
    Var proj; // [P*P*C, d]
    Var bias; // [d]
    Var cls;  // [d]

    PatchEmbedder() = default;
    PatchEmbedder(const std::string& prefix, const ModelConfig& cfg, bool trainable);

    // [B,T,C,H,W] pixels -> [B,T,K,P*P*C] patch rasters, row-major over the
    // patch grid, [c][y][x] within a patch.
    static Tensor rearrange(const Tensor& pixels, std::size_t patch);

    Var embed_pixels(const Tensor& pixels) const; // -> [B,T,1+K,d]
    Var embed_packed(const Tensor& packed) const; // packed [B,T,K,P*P*C]
    void collect(ParamList& out) const;
};

struct Encodings {
    Var pe; // [1+K, d]
    Var te; // [T, d]

    Encodings() = default;
    Encodings(const std::string& prefix, const ModelConfig& cfg);
    void collect(ParamList& out) const;
};

// out[b,t,j] = tokens[b,t,j] + PE[j] + TE[t]
Var add_encodings(const Var& tokens, const Encodings& enc);

// Frozen word-level text tower: embedding + positions + 2 blocks + linear
// projection of the final token. Vocabulary is built from the class names
// plus the prompt-template words; everything is deterministic in the seed.
class TextEncoder {
public:
    TextEncoder() = default;
    TextEncoder(const std::vector<std::string>& class_names, const ModelConfig& cfg);

    Tensor encode(const std::vector<std::string>& class_names) const; // [C, out_dim]
    std::vector<std::string> token_words(const std::string& class_name) const;
    std::vector<std::size_t> token_ids(const std::string& class_name) const;
    std::size_t vocab_size() const { return vocab_.size(); }
    void collect(ParamList& out) const;

private:
    std::vector<std::string> vocab_;
    std::map<std::string, std::size_t> index_;
    std::size_t max_len_ = 0;
    Var embed_; // [V, d]
    Var pos_;   // [max_len, d]
    std::vector<ViTBlock> blocks_;
    Var proj_w_, proj_b_; // d -> out_dim
};

} // namespace omniclip
