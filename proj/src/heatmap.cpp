#include "omniclip/heatmap.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace omniclip {

void write_pgm(const std::string& path, const double* values, std::size_t h, std::size_t w, double lo, double hi) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write PGM: " + path);
    f << "P5\n" << w << " " << h << "\n255\n";
    double span = hi - lo;
    for (std::size_t i = 0; i < h * w; ++i) {
        double norm = span > 0.0 ? (values[i] - lo) / span : 0.0;
        long byte = std::lround(std::clamp(norm, 0.0, 1.0) * 255.0);
        f.put(static_cast<char>(byte));
    }
    if (!f) throw IoError("short write on PGM: " + path);
}

void export_heatmaps(const OmniClipModel& model, const DatasetManifest& manifest,
                     const std::vector<std::size_t>& items, std::size_t layer, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::size_t side = model.config().patches_per_side();
    char buf[64];
    for (std::size_t item : items) {
        if (item >= manifest.items.size()) throw ConfigError("heatmap: item index out of range");
        Tensor pixels = assemble_pixels(manifest, {item});
        HeatmapResult res = model.video.attention_heatmap_full(pixels, layer);
        std::size_t t = res.grid.shape[1];

        double lo = res.grid[0], hi = res.grid[0];
        for (double v : res.grid.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }

        std::size_t hw = side * side;
        std::size_t canvas = manifest.items[item].spec.canvas;
        nlohmann::json mass = nlohmann::json::array();
        for (std::size_t ti = 0; ti < t; ++ti) {
            const double* grid = res.grid.data.data() + ti * hw;
            std::snprintf(buf, sizeof buf, "item%03zu_frame%zu", item, ti);
            std::string stem = std::string(out_dir) + "/" + buf;

            std::ofstream csv(stem + "_heat.csv");
            if (!csv) throw IoError("cannot write heatmap CSV");
            char num[64];
            for (std::size_t y = 0; y < side; ++y) {
                for (std::size_t x = 0; x < side; ++x) {
                    std::snprintf(num, sizeof num, "%.17g", grid[y * side + x]);
                    csv << num << (x + 1 == side ? "" : ",");
                }
                csv << "\n";
            }

            write_pgm(stem + "_heat.pgm", grid, side, side, lo, hi);

            // raw frame, channel 0
            const double* frame = pixels.data.data() + ti * manifest.items[item].spec.channels * canvas * canvas;
            write_pgm(stem + "_raw.pgm", frame, canvas, canvas, 0.0, 1.0);

            mass.push_back(res.mass[ti]);
        }
        std::snprintf(buf, sizeof buf, "item%03zu_mass.json", item);
        std::ofstream side_f(std::string(out_dir) + "/" + buf);
        side_f << nlohmann::json{{"item", item},
                                 {"layer", layer},
                                 {"row_sum_max_dev", res.max_row_dev},
                                 {"patch_attention_mass", mass}}
                      .dump(2)
               << "\n";
    }
}

} // namespace omniclip
