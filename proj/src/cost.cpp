#include "omniclip/cost.hpp"

#include <set>

#include "omniclip/backbone.hpp"

namespace omniclip {

namespace {

using ull = unsigned long long;

ull spatial_block_params(ull d) {
    // ln1 + ln2 (2d each), attention (4d^2 + 3d, no key bias), MLP (8d^2 + 5d)
    return 12 * d * d + 12 * d;
}

ull adapter_params(ull d, ull b) { return d * b + b + (4 * b * b + 3 * b) + b * d + d; }

ull mha_params(ull d) { return 4 * d * d + 3 * d; }

void vocab_stats(const std::vector<std::string>& class_names, ull& vocab, ull& max_len) {
    std::set<std::string> words{"a", "video", "of", "action"};
    max_len = 0;
    for (const auto& name : class_names) {
        ull len = 4; // template words
        std::string cur;
        auto flush = [&] {
            if (!cur.empty()) {
                words.insert(cur);
                ++len;
                cur.clear();
            }
        };
        for (char ch : name) {
            if (ch == ' ')
                flush();
            else
                cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
        flush();
        max_len = std::max(max_len, len);
    }
    vocab = words.size();
}

} // namespace

CostReport cost_report(const ModelConfig& cfg, const std::vector<std::string>& class_names) {
    cfg.validate();
    CostReport rep;
    ull t = cfg.frames, k = cfg.patch_count(), n = cfg.tokens(), d = cfg.dim;
    ull dd = cfg.out_dim, depth = cfg.depth;
    ull plen = cfg.patch * cfg.patch * cfg.channels;

    rep.modules.push_back({"patch_embed", 2 * t * k * plen * d, 0, plen * d + d + d});

    ull enc_params = (1 + k) * d + t * d;
    rep.modules.push_back({"encodings", 0, cfg.te_trainable ? t * d : 0,
                           cfg.te_trainable ? (1 + k) * d : enc_params});

    if (cfg.spg_enabled) {
        ull apps = cfg.spg_per_layer ? depth : 1;
        ull flops = cfg.spg_projector ? apps * 2 * (2 * (t * (k / 4)) * d * d) : 0;
        ull params = cfg.spg_projector ? 2 * (d * d + d) : 0;
        rep.modules.push_back({"spg", flops, params, 0});
    }

    rep.modules.push_back({"spatial_blocks", depth * t * (24 * n * d * d + 4 * n * n * d), 0,
                           depth * spatial_block_params(d)});

    ull adapted = 0;
    for (std::size_t i = 0; i < cfg.depth; ++i)
        if (cfg.block_has_pta(i)) ++adapted;
    if (adapted > 0) {
        ull b = cfg.bottleneck();
        ull flops_one = 4 * t * n * d * b + 8 * t * n * b * b + 4 * n * t * t * b;
        rep.modules.push_back({"pta", adapted * flops_one, adapted * (adapter_params(d, b) + 1), 0});
    }

    rep.modules.push_back({"frame_proj", 2 * t * d * dd, d * dd + dd, 0});
    rep.modules.push_back({"aggregator", 8 * t * dd * dd + 4 * t * t * dd, mha_params(dd), 0});

    ull vocab = 0, max_len = 0;
    vocab_stats(class_names, vocab, max_len);
    rep.modules.push_back(
        {"text_encoder", 0, 0, vocab * d + max_len * d + 2 * spatial_block_params(d) + d * dd + dd});

    if (cfg.trainable_temperature) rep.modules.push_back({"head", 0, 1, 0});

    for (const auto& m : rep.modules) {
        rep.total_flops += m.flops;
        rep.total_trainable += m.params_trainable;
        rep.total_frozen += m.params_frozen;
    }

    // Backward path accounting: for each trainable group, the parameter
    // scalars whose VJPs must run to deliver its gradient.
    ull blk = spatial_block_params(d);
    ull b = cfg.pta_enabled ? cfg.bottleneck() : 0;
    ull tail = (d * dd + dd) + mha_params(dd);
    auto block_full = [&](std::size_t j) { return blk + (cfg.block_has_pta(j) ? adapter_params(d, b) + 1 : 0); };
    auto above = [&](std::size_t i) {
        ull s = 0;
        for (std::size_t j = i + 1; j < cfg.depth; ++j) s += block_full(j);
        return s + tail;
    };
    ull own_extra = 0;
    switch (cfg.variant) {
    case Variant::BlockParallel: own_extra = 0; break;
    case Variant::AttentionParallel: own_extra = 8 * d * d + 7 * d; break; // MLP sublayer + ln2
    case Variant::Cascade: own_extra = blk; break;
    }
    ull touch = 0;
    for (std::size_t i = 0; i < cfg.depth; ++i) {
        if (!cfg.block_has_pta(i)) continue;
        touch += adapter_params(d, b) + 1 + own_extra + above(i);
    }
    if (cfg.spg_enabled && cfg.spg_projector) {
        ull all_blocks = 0;
        for (std::size_t j = 0; j < cfg.depth; ++j) all_blocks += block_full(j);
        touch += 2 * (d * d + d) + all_blocks + tail;
    }
    if (cfg.te_trainable) {
        ull all_blocks = 0;
        for (std::size_t j = 0; j < cfg.depth; ++j) all_blocks += block_full(j);
        touch += t * d + all_blocks + tail;
    }
    touch += (d * dd + dd) + mha_params(dd); // frame projection: through the aggregator
    touch += mha_params(dd);                 // aggregator itself
    if (cfg.trainable_temperature) touch += 1;
    rep.backward_param_touch = touch;
    return rep;
}

nlohmann::json CostReport::to_json() const {
    nlohmann::json mods = nlohmann::json::array();
    for (const auto& m : modules)
        mods.push_back({{"name", m.name},
                        {"flops", m.flops},
                        {"params_trainable", m.params_trainable},
                        {"params_frozen", m.params_frozen}});
    return nlohmann::json{{"modules", mods},
                          {"total_flops", total_flops},
                          {"total_trainable", total_trainable},
                          {"total_frozen", total_frozen},
                          {"trainable_share", trainable_share()},
                          {"backward_param_touch", backward_param_touch}};
}

ModelConfig paper_scale_config() {
    ModelConfig c;
    c.depth = 12;
    c.dim = 768;
    c.heads = 12;
    c.out_dim = 512;
    c.agg_heads = 8;
    c.patch = 16;
    c.frames = 8;
    c.image = 224;
    return c;
}

} // namespace omniclip
