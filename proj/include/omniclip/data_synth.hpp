#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "omniclip/tensor.hpp"

namespace omniclip {

enum class ObjShape { Square, Disc, Cross };
enum class Motion { Up, Down, Left, Right, Static };
enum class ScaleClass { Grow, Shrink, Constant };

// Clutter object; drawn class-independently, so single frames do not reveal
// which blob is the labeled one. Distractors may drift with their own
// class-independent velocity, which keeps frame-to-frame differences from
// singling out the labeled object.
struct Distractor {
    ObjShape shape = ObjShape::Disc;
    double x = 0.0, y = 0.0, r = 3.0;
    double vx = 0.0, vy = 0.0;
};

// Full recipe for one clip; generation is a pure function of this struct.
struct SynthVideoSpec {
    std::size_t canvas = 32;
    std::size_t frames = 8;
    std::size_t channels = 3;
    ObjShape shape = ObjShape::Square;
    Motion motion = Motion::Static;
    ScaleClass scale = ScaleClass::Constant;
    double x0 = 16.0, y0 = 16.0; // start center, canvas coordinates
    double speed = 0.0;          // px/frame along the motion direction
    double r0 = 4.0;             // start radius
    double growth = 0.0;         // radius delta per frame
    double sigma = 0.05;         // additive gaussian noise, clipped to [0,1]
    std::uint64_t noise_seed = 0;
    std::vector<Distractor> distractors;

    // center/radius at frame t
    void center_at(std::size_t t, double& cx, double& cy) const;
    double radius_at(std::size_t t) const { return r0 + growth * static_cast<double>(t); }
};

// Grayscale-replicated [T,C,H,W] clip. Throws ConfigError if the trajectory
// leaves the canvas (precondition violation).
Tensor generate_video(const SynthVideoSpec& spec);

enum class LabelMap { MotionOnly, ScaleOnly, Joint };
std::string to_string(LabelMap m);
LabelMap label_map_from_string(const std::string& s);
std::vector<std::string> class_names(LabelMap m);

struct ManifestItem {
    SynthVideoSpec spec;
    std::size_t label = 0;
};

struct DatasetManifest {
    std::uint32_t version = 1;
    std::uint64_t seed = 0;
    LabelMap label_map = LabelMap::MotionOnly;
    std::vector<std::string> classes;
    std::vector<std::size_t> held_out; // class ids absent from train/val (zero-shot)
    std::vector<ManifestItem> items;
    std::vector<std::size_t> train, val, test;

    nlohmann::json to_json() const;
    static DatasetManifest from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static DatasetManifest load(const std::string& path);
};

// Balanced dataset: n_train/n_val/n_test clips per class. All per-item
// parameters except the class-determined direction/scale sign are drawn from
// class-independent distributions, so single frames carry no label signal.
DatasetManifest make_dataset(LabelMap map, std::size_t n_train, std::size_t n_val, std::size_t n_test,
                             std::uint64_t seed);
DatasetManifest make_dataset(LabelMap map, std::size_t n_per_class, std::uint64_t seed);

// Zero-shot protocol: train/val cover every class except `held_class`, the
// test split holds only `held_class` clips.
DatasetManifest make_held_out_dataset(LabelMap map, std::size_t held_class, std::size_t n_train, std::size_t n_val,
                                      std::size_t n_test, std::uint64_t seed);

// Exactly k training clips per class, deterministically subsampled.
DatasetManifest few_shot_subset(const DatasetManifest& manifest, std::size_t k);

// One item recipe for (map, label) under an explicit item seed. All nuisance
// draws are class-independent: two labels under the same item seed share a
// bit-identical first frame.
SynthVideoSpec sample_spec(LabelMap map, std::size_t label, std::uint64_t item_seed);

// Batch assembly. `indices` index into manifest.items.
Tensor assemble_pixels(const DatasetManifest& m, const std::vector<std::size_t>& indices); // [B,T,C,H,W]
std::vector<std::size_t> labels_of(const DatasetManifest& m, const std::vector<std::size_t>& indices);

// Intensity centroid of one [C,H,W] frame (channel 0).
void frame_centroid(const Tensor& clip, std::size_t frame, double& cx, double& cy);

} // namespace omniclip
