#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "omniclip/common.hpp"

namespace omniclip {

enum class Variant { BlockParallel, AttentionParallel, Cascade };
enum class Pooling { Avg, Max };

std::string to_string(Variant v);
std::string to_string(Pooling p);
Variant variant_from_string(const std::string& s);
Pooling pooling_from_string(const std::string& s);

// Every architectural hyperparameter of the video/text model pair.
struct ModelConfig {
    std::size_t depth = 4;       // spatial-temporal blocks
    std::size_t dim = 64;        // token width d
    std::size_t heads = 4;
    std::size_t out_dim = 32;    // shared video/text embedding width
    std::size_t agg_heads = 4;   // frame-aggregation attention heads
    std::size_t patch = 8;
    std::size_t frames = 8;
    std::size_t image = 32;      // H = W
    std::size_t channels = 3;

    bool pta_enabled = true;
    double pta_ratio = 0.25;
    std::uint64_t pta_layers = ~0ull; // bitmask over blocks; bit i = block i
    bool pta_exclude_cls = false;

    bool spg_enabled = true;
    Pooling spg_pooling = Pooling::Avg;
    bool spg_projector = true;
    bool spg_per_layer = false;

    Variant variant = Variant::BlockParallel;

    double temperature = 0.07; // logits = sims / temperature
    double label_smoothing = 0.1;
    bool trainable_temperature = false;
    bool te_trainable = false;

    std::uint64_t seed = 1; // parameter-init seed

    std::size_t patches_per_side() const { return image / patch; }
    std::size_t patch_count() const { return patches_per_side() * patches_per_side(); }
    std::size_t prompt_count() const { return spg_enabled ? patch_count() / 4 : 0; }
    std::size_t tokens() const { return 1 + patch_count() + prompt_count(); }
    std::size_t bottleneck() const { return static_cast<std::size_t>(static_cast<double>(dim) * pta_ratio); }
    std::size_t bottleneck_heads() const;
    bool block_has_pta(std::size_t i) const { return pta_enabled && (pta_layers >> i) & 1; }

    void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

ModelConfig desk_config();  // L=4, d=64, T=8, 32x32/P8 default
ModelConfig micro_config(); // finite-difference scale: L=2, d=16, T=4, 16x16/P8

} // namespace omniclip
