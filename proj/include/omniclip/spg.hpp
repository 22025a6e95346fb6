#pragma once

#include "omniclip/config.hpp"
#include "omniclip/ops.hpp"
#include "omniclip/params.hpp"

namespace omniclip {

// Self-prompt generator: 2x2-pools the patch-token grid (class token
// excluded) and maps it through a two-layer MLP, yielding K/4 prompt tokens
// per frame that are appended to the sequence.
class SelfPromptGenerator {
public:
    SelfPromptGenerator() = default;
    SelfPromptGenerator(const std::string& prefix, const ModelConfig& cfg);

    // tokens [B,T,1+K,d] -> prompts [B,T,K/4,d]
    Var generate(const Var& tokens) const;
    Pooling pooling() const { return pooling_; }
    bool has_projector() const { return proj_w1_.defined(); }
    void collect(ParamList& out) const;

private:
    Pooling pooling_ = Pooling::Avg;
    Var proj_w1_, proj_b1_, proj_w2_, proj_b2_; // undefined in projector-off ablation
};

// Appends prompts after the patch tokens: [cls, patches, prompts].
Var concat_prompts(const Var& tokens, const Var& prompts);

} // namespace omniclip
