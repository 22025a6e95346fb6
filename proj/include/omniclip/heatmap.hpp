#pragma once

#include "omniclip/model.hpp"

namespace omniclip {

// Writes, per selected clip and frame: the class-token attention grid as
// CSV (raw values) and as 8-bit PGM (min-max normalized per clip), the raw
// frame as PGM, plus a JSON sidecar with the per-frame attention mass on
// patch keys and the worst row-sum deviation at the probed layer.
void export_heatmaps(const OmniClipModel& model, const DatasetManifest& manifest,
                     const std::vector<std::size_t>& items, std::size_t layer, const std::string& out_dir);

void write_pgm(const std::string& path, const double* values, std::size_t h, std::size_t w, double lo, double hi);

} // namespace omniclip
