#include "omniclip/config.hpp"

#include <cmath>

namespace omniclip {

std::string to_string(Variant v) {
    switch (v) {
    case Variant::BlockParallel: return "block_parallel";
    case Variant::AttentionParallel: return "attention_parallel";
    case Variant::Cascade: return "cascade";
    }
    return "block_parallel";
}

std::string to_string(Pooling p) { return p == Pooling::Avg ? "avg" : "max"; }

Variant variant_from_string(const std::string& s) {
    if (s == "block_parallel") return Variant::BlockParallel;
    if (s == "attention_parallel") return Variant::AttentionParallel;
    if (s == "cascade") return Variant::Cascade;
    throw ConfigError("unknown variant: " + s);
}

Pooling pooling_from_string(const std::string& s) {
    if (s == "avg") return Pooling::Avg;
    if (s == "max") return Pooling::Max;
    throw ConfigError("unknown pooling mode: " + s);
}

std::size_t ModelConfig::bottleneck_heads() const {
    std::size_t b = bottleneck();
    if (b == 0) throw ConfigError("pta_ratio too small: bottleneck width is 0");
    // bottleneck keeps the model's head count when it fits, else the
    // nearest divisor of b; never wider than b
    auto target = heads;
    std::size_t best = 1;
    for (std::size_t dvs = 1; dvs <= b; ++dvs) {
        if (b % dvs != 0) continue;
        auto dist = [&](std::size_t x) {
            return x > target ? x - target : target - x;
        };
        if (dist(dvs) < dist(best)) best = dvs;
    }
    return best;
}

void ModelConfig::validate() const {
    if (depth == 0 || dim == 0 || heads == 0 || out_dim == 0 || frames == 0) throw ConfigError("zero-sized model axis");
    if (dim % heads != 0) throw ConfigError("heads must divide dim");
    if (out_dim % agg_heads != 0) throw ConfigError("agg_heads must divide out_dim");
    if (image % patch != 0) throw ConfigError("patch size must divide image size");
    if (pta_ratio <= 0.0 || pta_ratio > 1.0) throw ConfigError("pta_ratio must lie in (0, 1]");
    if (spg_enabled) {
        std::size_t side = patches_per_side();
        if (side % 2 != 0) throw ConfigError("spg needs an even patch-grid side, got " + std::to_string(side));
    }
    if (pta_enabled) {
        std::size_t b = bottleneck();
        if (b == 0) throw ConfigError("pta bottleneck width is 0");
        std::size_t bh = bottleneck_heads();
        if (b % bh != 0 || bh > b) throw ConfigError("pta bottleneck/head indivisibility");
    }
    if (temperature <= 0.0) throw ConfigError("temperature must be positive");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw ConfigError("label_smoothing must lie in [0, 1)");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"depth", c.depth},
                       {"dim", c.dim},
                       {"heads", c.heads},
                       {"out_dim", c.out_dim},
                       {"agg_heads", c.agg_heads},
                       {"patch", c.patch},
                       {"frames", c.frames},
                       {"image", c.image},
                       {"channels", c.channels},
                       {"pta_enabled", c.pta_enabled},
                       {"pta_ratio", c.pta_ratio},
                       {"pta_layers", c.pta_layers},
                       {"pta_exclude_cls", c.pta_exclude_cls},
                       {"spg_enabled", c.spg_enabled},
                       {"spg_pooling", to_string(c.spg_pooling)},
                       {"spg_projector", c.spg_projector},
                       {"spg_per_layer", c.spg_per_layer},
                       {"variant", to_string(c.variant)},
                       {"temperature", c.temperature},
                       {"label_smoothing", c.label_smoothing},
                       {"trainable_temperature", c.trainable_temperature},
                       {"te_trainable", c.te_trainable},
                       {"seed", c.seed}};
}

namespace {
template <class T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}
} // namespace

void from_json(const nlohmann::json& j, ModelConfig& c) {
    maybe(j, "depth", c.depth);
    maybe(j, "dim", c.dim);
    maybe(j, "heads", c.heads);
    maybe(j, "out_dim", c.out_dim);
    maybe(j, "agg_heads", c.agg_heads);
    maybe(j, "patch", c.patch);
    maybe(j, "frames", c.frames);
    maybe(j, "image", c.image);
    maybe(j, "channels", c.channels);
    maybe(j, "pta_enabled", c.pta_enabled);
    maybe(j, "pta_ratio", c.pta_ratio);
    maybe(j, "pta_layers", c.pta_layers);
    maybe(j, "pta_exclude_cls", c.pta_exclude_cls);
    maybe(j, "spg_enabled", c.spg_enabled);
    if (j.contains("spg_pooling")) c.spg_pooling = pooling_from_string(j.at("spg_pooling").get<std::string>());
    maybe(j, "spg_projector", c.spg_projector);
    maybe(j, "spg_per_layer", c.spg_per_layer);
    if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
    maybe(j, "temperature", c.temperature);
    maybe(j, "label_smoothing", c.label_smoothing);
    maybe(j, "trainable_temperature", c.trainable_temperature);
    maybe(j, "te_trainable", c.te_trainable);
    maybe(j, "seed", c.seed);
}

ModelConfig desk_config() { return ModelConfig{}; }

ModelConfig micro_config() {
    ModelConfig c;
    c.depth = 2;
    c.dim = 16;
    c.heads = 2;
    c.out_dim = 8;
    c.agg_heads = 2;
    c.patch = 8;
    c.frames = 4;
    c.image = 16;
    return c;
}

} // namespace omniclip
