#include "omniclip/spg.hpp"

#include <cmath>

namespace omniclip {

SelfPromptGenerator::SelfPromptGenerator(const std::string& prefix, const ModelConfig& cfg)
    : pooling_(cfg.spg_pooling) {
    if (cfg.spg_projector) {
        std::size_t d = cfg.dim;
        proj_w1_ = make_linear_weight(prefix + ".proj.w1", d, d, cfg.seed, true);
        proj_b1_ = make_param(prefix + ".proj.b1", {d}, cfg.seed, true, Init::Zero);
        proj_w2_ = make_linear_weight(prefix + ".proj.w2", d, d, cfg.seed, true);
        proj_b2_ = make_param(prefix + ".proj.b2", {d}, cfg.seed, true, Init::Zero);
    }
}

Var SelfPromptGenerator::generate(const Var& tokens) const {
    const Shape& s = tokens.shape();
    if (s.size() != 4) throw ShapeError("generate_prompts: expected [B,T,1+K,d]");
    std::size_t b = s[0], t = s[1], k = s[2] - 1, d = s[3];
    auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(k))));
    if (side * side != k) throw ShapeError("generate_prompts: patch count " + std::to_string(k) + " is not square");
    if (side % 2 != 0) throw ShapeError("generate_prompts: odd patch-grid side " + std::to_string(side));

    Var patches = slice(tokens, 2, 1, k); // class token excluded
    Var grid = reshape(patches, {b, t, side, side, d});
    Var pooled = pooling_ == Pooling::Avg ? avg_pool_2x2(grid) : max_pool_2x2(grid);
    Var prompts = reshape(pooled, {b, t, k / 4, d});
    if (!has_projector()) return prompts;
    return linear(gelu(linear(prompts, proj_w1_, proj_b1_)), proj_w2_, proj_b2_);
}

void SelfPromptGenerator::collect(ParamList& out) const {
    if (!has_projector()) return;
    for (const Var& v : {proj_w1_, proj_b1_, proj_w2_, proj_b2_}) out.push_back({v.name(), v});
}

Var concat_prompts(const Var& tokens, const Var& prompts) {
    const Shape& a = tokens.shape();
    const Shape& b = prompts.shape();
    if (a.size() != 4 || b.size() != 4 || a[0] != b[0] || a[1] != b[1] || a[3] != b[3])
        throw ShapeError("concat_prompts: " + shape_str(a) + " vs " + shape_str(b));
    return concat({tokens, prompts}, 2);
}

} // namespace omniclip
