#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "omniclip/config.hpp"

namespace omniclip {

// Analytic per-clip forward FLOPs and parameter counts. Conventions: a
// linear map over n tokens costs 2*n*in*out; attention costs 2*n^2*d for
// each of the QK and AV contractions; element-wise work and biases are not
// counted.
struct ModuleCost {
    std::string name;
    unsigned long long flops = 0;
    unsigned long long params_trainable = 0;
    unsigned long long params_frozen = 0;
};

struct CostReport {
    std::vector<ModuleCost> modules;
    unsigned long long total_flops = 0;
    unsigned long long total_trainable = 0;
    unsigned long long total_frozen = 0;
    // Sum over trainable parameter groups of the parameter scalars sitting
    // on that group's gradient path to the loss. Cascade routes adapter
    // gradients through the host block, so it can only exceed the parallel
    // couplings.
    unsigned long long backward_param_touch = 0;

    double trainable_share() const {
        return static_cast<double>(total_trainable) / static_cast<double>(total_trainable + total_frozen);
    }
    nlohmann::json to_json() const;
};

// `class_names` sizes the frozen text tower (vocabulary + positions).
CostReport cost_report(const ModelConfig& cfg, const std::vector<std::string>& class_names);

// ViT-B/16-shaped config (L=12, d=768, P=16, 224x224, T=8): expressible for
// cost accounting, far too large for desk-scale training.
ModelConfig paper_scale_config();

} // namespace omniclip
