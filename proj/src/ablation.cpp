#include "omniclip/ablation.hpp"

#include <cstdio>
#include <fstream>

namespace omniclip {

std::vector<std::pair<std::string, ModelConfig>> ablation_grid(const std::string& suite, const ModelConfig& base) {
    std::vector<std::pair<std::string, ModelConfig>> grid;
    if (suite == "modules") {
        for (int pta = 0; pta <= 1; ++pta)
            for (int spg = 0; spg <= 1; ++spg) {
                ModelConfig c = base;
                c.pta_enabled = pta != 0;
                c.spg_enabled = spg != 0;
                grid.emplace_back("pta" + std::to_string(pta) + "_spg" + std::to_string(spg), c);
            }
    } else if (suite == "ratio") {
        const std::pair<const char*, double> ratios[] = {{"1/8", 0.125}, {"1/4", 0.25}, {"1/2", 0.5}, {"1", 1.0}};
        for (const auto& [name, r] : ratios) {
            ModelConfig c = base;
            c.pta_enabled = true;
            c.pta_ratio = r;
            grid.emplace_back(std::string("ratio_") + name, c);
        }
    } else if (suite == "locations") {
        // cumulative leading groups of blocks, paper-style four groups
        std::size_t groups = 4;
        for (std::size_t g = 0; g <= groups; ++g) {
            ModelConfig c = base;
            if (g == 0) {
                c.pta_enabled = false;
                c.pta_layers = 0;
            } else {
                c.pta_enabled = true;
                std::size_t upto = (base.depth * g) / groups; // blocks [0, upto)
                c.pta_layers = upto >= 64 ? ~0ull : ((1ull << upto) - 1);
            }
            grid.emplace_back("groups_" + std::to_string(g), c);
        }
    } else if (suite == "variants") {
        for (Variant v : {Variant::Cascade, Variant::AttentionParallel, Variant::BlockParallel}) {
            ModelConfig c = base;
            c.pta_enabled = true;
            c.variant = v;
            grid.emplace_back(to_string(v), c);
        }
    } else if (suite == "pooling") {
        const std::pair<const char*, std::pair<Pooling, bool>> cells[] = {
            {"avg", {Pooling::Avg, false}},
            {"max", {Pooling::Max, false}},
            {"max_projector", {Pooling::Max, true}},
            {"avg_projector", {Pooling::Avg, true}},
        };
        for (const auto& [name, cfg] : cells) {
            ModelConfig c = base;
            c.spg_enabled = true;
            c.spg_pooling = cfg.first;
            c.spg_projector = cfg.second;
            grid.emplace_back(name, c);
        }
    } else {
        throw ConfigError("unknown ablation suite: " + suite);
    }
    return grid;
}

std::vector<AblationRow> run_ablation(const std::string& suite, const ModelConfig& base, const TrainConfig& tcfg,
                                      const DatasetManifest& manifest, std::ostream* progress) {
    std::vector<AblationRow> rows;
    for (const auto& [name, cfg] : ablation_grid(suite, base)) {
        OmniClipModel model(cfg, manifest.classes);
        Trainer trainer(model, manifest, tcfg);
        auto log = trainer.run();
        EvalResult ev = evaluate(model, manifest, Protocol::Supervised, tcfg.batch_size);
        AblationRow row;
        row.cell = name;
        row.test_top1 = ev.top1;
        row.final_loss = log.empty() ? 0.0 : log.back().loss;
        CostReport cost = cost_report(cfg, manifest.classes);
        row.flops = cost.total_flops;
        row.trainable_params = cost.total_trainable;
        rows.push_back(row);
        if (progress)
            *progress << suite << "/" << name << ": top1=" << row.test_top1 << " loss=" << row.final_loss << "\n";
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::string out = "cell,test_top1,final_loss,flops,trainable_params\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%llu,%llu\n", r.cell.c_str(), r.test_top1, r.final_loss,
                      r.flops, r.trainable_params);
        out += buf;
    }
    return out;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write ablation table: " + path);
    f << ablation_csv(rows);
}

} // namespace omniclip
