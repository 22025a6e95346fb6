#pragma once

#include "omniclip/config.hpp"
#include "omniclip/ops.hpp"
#include "omniclip/params.hpp"

namespace omniclip {

// Parallel temporal adapter: Up(Attn(Down(x))) with self-attention running
// along the frame axis independently at every token position. All weights
// are trainable; the bottleneck width is floor(dim * ratio).
class ParallelTemporalAdapter {
public:
    ParallelTemporalAdapter() = default;
    ParallelTemporalAdapter(const std::string& prefix, const ModelConfig& cfg);

    // tokens [B,T,N,d] -> [B,T,N,d]; no mixing across token positions.
    Var forward(const Var& tokens) const;

    std::size_t bottleneck() const { return down_w_.defined() ? down_w_.shape()[1] : 0; }
    std::size_t heads() const { return attn_.heads; }
    std::size_t parameter_count() const;
    void collect(ParamList& out) const;

private:
    Var attend(const Var& tokens) const;

    Var down_w_, down_b_; // d -> b
    MhaParams attn_;      // width b over the frame axis
    Var up_w_, up_b_;     // b -> d
    bool exclude_cls_ = false;
};

struct FusionGate {
    Var alpha; // rank-0, initialized to zero

    FusionGate() = default;
    FusionGate(const std::string& name, std::uint64_t seed);
    void collect(ParamList& out) const;
};

// spatial + alpha * temporal
Var fuse(const Var& spatial, const Var& temporal, const FusionGate& gate);

} // namespace omniclip
