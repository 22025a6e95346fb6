#pragma once

#include <string>
#include <vector>

#include "omniclip/autodiff.hpp"
#include "omniclip/rng.hpp"

namespace omniclip {

struct NamedParam {
    std::string name;
    Var var;
};

using ParamList = std::vector<NamedParam>;

inline ParamList trainable_only(const ParamList& all) {
    ParamList out;
    for (const auto& p : all)
        if (p.var.trainable()) out.push_back(p);
    return out;
}

inline void zero_grads(const ParamList& params) {
    for (const auto& p : params) {
        Var v = p.var;
        v.clear_grad();
    }
}

enum class Init { Zero, One, Normal };

// Parameter factory. The random stream is keyed by (seed, name) so a tensor's
// initial values do not depend on construction order, and a single frozen
// tensor can be re-materialized by name.
inline Var make_param(const std::string& name, Shape shape, std::uint64_t seed, bool trainable, Init init,
                      double stddev = 0.0) {
    Tensor t(std::move(shape));
    switch (init) {
    case Init::Zero:
        break;
    case Init::One:
        t.fill(1.0);
        break;
    case Init::Normal: {
        SplitMix64 rng = named_stream(seed, name);
        for (double& v : t.data) v = stddev * rng.normal();
        break;
    }
    }
    return Var::leaf(std::move(t), trainable, name);
}

// Fan-in scaled normal, the default for weight matrices.
inline Var make_linear_weight(const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed,
                              bool trainable) {
    return make_param(name, {in, out}, seed, trainable, Init::Normal, 1.0 / std::sqrt(static_cast<double>(in)));
}

} // namespace omniclip
