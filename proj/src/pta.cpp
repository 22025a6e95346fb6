#include "omniclip/pta.hpp"

#include "omniclip/backbone.hpp"

namespace omniclip {

ParallelTemporalAdapter::ParallelTemporalAdapter(const std::string& prefix, const ModelConfig& cfg)
    : exclude_cls_(cfg.pta_exclude_cls) {
    std::size_t d = cfg.dim;
    std::size_t b = cfg.bottleneck();
    if (b == 0) throw ConfigError("pta: bottleneck width is 0");
    std::size_t bh = cfg.bottleneck_heads();
    if (bh == 0 || b % bh != 0) throw ConfigError("pta: bottleneck/head indivisibility");
    down_w_ = make_linear_weight(prefix + ".down.w", d, b, cfg.seed, true);
    down_b_ = make_param(prefix + ".down.b", {b}, cfg.seed, true, Init::Zero);
    attn_ = make_mha(prefix + ".attn", b, bh, cfg.seed, true);
    up_w_ = make_linear_weight(prefix + ".up.w", b, d, cfg.seed, true);
    up_b_ = make_param(prefix + ".up.b", {d}, cfg.seed, true, Init::Zero);
}

Var ParallelTemporalAdapter::forward(const Var& tokens) const {
    const Shape& s = tokens.shape();
    if (s.size() != 4) throw ShapeError("pta_forward: expected [B,T,N,d]");
    std::size_t b = s[0], t = s[1], n = s[2], d = s[3];

    if (exclude_cls_ && n > 1) {
        // excluded position contributes exactly zero temporal signal
        Var rest = attend(slice(tokens, 2, 1, n - 1));
        Var cls_zero = Var::constant(Tensor({b, t, 1, d}));
        return concat({cls_zero, rest}, 2);
    }
    return attend(tokens);
}

Var ParallelTemporalAdapter::attend(const Var& tokens) const {
    Var x = linear(tokens, down_w_, down_b_);      // [B,T,N,b]
    Var per_pos = transpose(x, {0, 2, 1, 3});      // [B,N,T,b]
    Var attended = multi_head_attention(per_pos, attn_);
    Var up = linear(attended, up_w_, up_b_);       // [B,N,T,d]
    return transpose(up, {0, 2, 1, 3});            // [B,T,N,d]
}

std::size_t ParallelTemporalAdapter::parameter_count() const {
    std::size_t d = up_b_.shape()[0];
    std::size_t b = down_b_.shape()[0];
    return d * b + b + (4 * b * b + 3 * b) + b * d + d;
}

void ParallelTemporalAdapter::collect(ParamList& out) const {
    out.push_back({down_w_.name(), down_w_});
    out.push_back({down_b_.name(), down_b_});
    collect_mha(attn_, out);
    out.push_back({up_w_.name(), up_w_});
    out.push_back({up_b_.name(), up_b_});
}

FusionGate::FusionGate(const std::string& name, std::uint64_t seed) {
    alpha = make_param(name, {}, seed, true, Init::Zero);
}

void FusionGate::collect(ParamList& out) const { out.push_back({alpha.name(), alpha}); }

Var fuse(const Var& spatial, const Var& temporal, const FusionGate& gate) {
    if (spatial.shape() != temporal.shape())
        throw ShapeError("fuse: shape mismatch " + shape_str(spatial.shape()) + " vs " + shape_str(temporal.shape()));
    return add(spatial, mul(gate.alpha, temporal));
}

} // namespace omniclip
