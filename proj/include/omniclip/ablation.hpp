#pragma once

#include "omniclip/cost.hpp"
#include "omniclip/train.hpp"

namespace omniclip {

struct AblationRow {
    std::string cell;
    double test_top1 = 0.0;
    double final_loss = 0.0;
    unsigned long long flops = 0;
    unsigned long long trainable_params = 0;
};

// Builds the per-suite config grid. Suites: "modules" (PTA/SPG on-off
// cross), "ratio" (1/8, 1/4, 1/2, 1), "locations" (0..4 leading block
// groups), "variants" (three adapter couplings), "pooling" (avg/max with
// and without projector).
std::vector<std::pair<std::string, ModelConfig>> ablation_grid(const std::string& suite, const ModelConfig& base);

// Trains every cell with the identical seed and budget and evaluates on the
// manifest's test split. Deterministic: rerunning reproduces the rows
// bit-exactly.
std::vector<AblationRow> run_ablation(const std::string& suite, const ModelConfig& base, const TrainConfig& tcfg,
                                      const DatasetManifest& manifest, std::ostream* progress = nullptr);

std::string ablation_csv(const std::vector<AblationRow>& rows);
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);

} // namespace omniclip
