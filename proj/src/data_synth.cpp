#include "omniclip/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "omniclip/rng.hpp"

namespace omniclip {

void SynthVideoSpec::center_at(std::size_t t, double& cx, double& cy) const {
    double dt = static_cast<double>(t);
    cx = x0;
    cy = y0;
    switch (motion) {
    case Motion::Up: cy = y0 - speed * dt; break;
    case Motion::Down: cy = y0 + speed * dt; break;
    case Motion::Left: cx = x0 - speed * dt; break;
    case Motion::Right: cx = x0 + speed * dt; break;
    case Motion::Static: break;
    }
}

namespace {

// Positive inside the shape, ~0 at the boundary; intensity gets a one-pixel
// linear falloff from it.
double inside_measure(ObjShape shape, double dx, double dy, double r) {
    double ax = std::fabs(dx), ay = std::fabs(dy);
    switch (shape) {
    case ObjShape::Square: return r - std::max(ax, ay);
    case ObjShape::Disc: return r - std::hypot(dx, dy);
    case ObjShape::Cross: {
        double bar_w = r / 3.0;
        double v_bar = std::min(bar_w - ax, r - ay);
        double h_bar = std::min(bar_w - ay, r - ax);
        return std::max(v_bar, h_bar);
    }
    }
    return -1.0;
}

} // namespace

Tensor generate_video(const SynthVideoSpec& spec) {
    std::size_t n = spec.canvas, t = spec.frames, c = spec.channels;
    double extent = static_cast<double>(n);
    for (std::size_t ti = 0; ti < t; ++ti) {
        double cx, cy, r = spec.radius_at(ti);
        spec.center_at(ti, cx, cy);
        if (r <= 0.5) throw ConfigError("generate_video: radius collapses below half a pixel");
        if (cx - r - 1.0 < 0.0 || cx + r + 1.0 > extent || cy - r - 1.0 < 0.0 || cy + r + 1.0 > extent)
            throw ConfigError("generate_video: trajectory escapes the canvas at frame " + std::to_string(ti));
    }

    Tensor clip({t, c, n, n});
    SplitMix64 noise(spec.noise_seed);
    for (std::size_t ti = 0; ti < t; ++ti) {
        double cx, cy, r = spec.radius_at(ti);
        spec.center_at(ti, cx, cy);
        double* gray = clip.data.data() + ti * c * n * n; // channel 0, replicated below
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x) {
                double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
                double v = std::clamp(inside_measure(spec.shape, px - cx, py - cy, r) + 0.5, 0.0, 1.0);
                for (const Distractor& d : spec.distractors) {
                    double dxc = d.x + d.vx * static_cast<double>(ti);
                    double dyc = d.y + d.vy * static_cast<double>(ti);
                    v = std::max(v, std::clamp(inside_measure(d.shape, px - dxc, py - dyc, d.r) + 0.5, 0.0, 1.0));
                }
                if (spec.sigma > 0.0) v = std::clamp(v + spec.sigma * noise.normal(), 0.0, 1.0);
                gray[y * n + x] = v;
            }
        for (std::size_t ci = 1; ci < c; ++ci)
            std::copy(gray, gray + n * n, clip.data.data() + (ti * c + ci) * n * n);
    }
    return clip;
}

std::string to_string(LabelMap m) {
    switch (m) {
    case LabelMap::MotionOnly: return "motion_only";
    case LabelMap::ScaleOnly: return "scale_only";
    case LabelMap::Joint: return "joint";
    }
    return "motion_only";
}

LabelMap label_map_from_string(const std::string& s) {
    if (s == "motion_only") return LabelMap::MotionOnly;
    if (s == "scale_only") return LabelMap::ScaleOnly;
    if (s == "joint") return LabelMap::Joint;
    throw ConfigError("unknown label map: " + s);
}

namespace {
const char* kMotionNames[4] = {"up", "down", "left", "right"};
const char* kScaleNames[3] = {"grow", "shrink", "constant"};
} // namespace

std::vector<std::string> class_names(LabelMap m) {
    std::vector<std::string> out;
    switch (m) {
    case LabelMap::MotionOnly:
        out.assign(kMotionNames, kMotionNames + 4);
        break;
    case LabelMap::ScaleOnly:
        out.assign(kScaleNames, kScaleNames + 3);
        break;
    case LabelMap::Joint:
        for (const char* mo : kMotionNames)
            for (const char* sc : kScaleNames) out.push_back(std::string(mo) + " " + sc);
        break;
    }
    return out;
}

namespace {

constexpr std::size_t kCanvas = 32;
constexpr std::size_t kFrames = 8;

struct TaskRanges {
    double r0_lo, r0_hi;
    double g_lo, g_hi;      // growth magnitude (0 when the task has no scaling)
    double speed_lo, speed_hi;
    double sigma;
    std::size_t distractors;
    bool moving_distractors;
};

// Start jitter is kept large relative to the per-clip displacement so a
// single frame's object position says nothing about the motion class; the
// direction signal only exists across frames.
TaskRanges ranges_for(LabelMap map) {
    switch (map) {
    case LabelMap::MotionOnly: return {3.0, 4.5, 0.0, 0.0, 0.75, 1.05, 0.03, 2, false};
    case LabelMap::ScaleOnly: return {3.5, 4.5, 0.25, 0.38, 0.2, 0.9, 0.05, 2, false};
    case LabelMap::Joint: return {3.5, 4.5, 0.25, 0.38, 0.7, 1.0, 0.05, 2, false};
    }
    return {3.0, 4.5, 0.0, 0.0, 0.75, 1.05, 0.03, 2, false};
}

Motion motion_of_class(LabelMap map, std::size_t label) {
    if (map == LabelMap::MotionOnly) return static_cast<Motion>(label);
    if (map == LabelMap::Joint) return static_cast<Motion>(label / 3);
    return Motion::Static; // scale_only: drawn as a nuisance instead
}

// Per-item parameters. Every rng draw happens in the same order for every
// class, and the class only picks signs/directions afterwards, so frame 0 is
// identically distributed (bit-identical under a shared item seed) across
// the classes of a label map.
SynthVideoSpec make_spec(LabelMap map, std::size_t label, std::uint64_t item_seed) {
    TaskRanges rr = ranges_for(map);
    SplitMix64 rng(item_seed);
    SynthVideoSpec s;
    s.canvas = kCanvas;
    s.frames = kFrames;
    s.sigma = rr.sigma;
    s.shape = rr.moving_distractors ? ObjShape::Disc : static_cast<ObjShape>(rng.below(3));
    s.r0 = rng.uniform(rr.r0_lo, rr.r0_hi);
    double g_mag = rng.uniform(rr.g_lo, rr.g_hi);
    double speed = rng.uniform(rr.speed_lo, rr.speed_hi);
    std::uint64_t dir_draw = rng.below(5); // consumed by every map for stream parity
    double span = speed * static_cast<double>(kFrames - 1);
    double r_max_possible = rr.r0_hi + rr.g_hi * static_cast<double>(kFrames - 1);
    double margin = r_max_possible + 1.5 + span;
    double hi = static_cast<double>(kCanvas) - margin;
    if (hi <= margin) throw ConfigError("make_spec: no room for the trajectory on this canvas");
    s.x0 = rng.uniform(margin, hi);
    s.y0 = rng.uniform(margin, hi);
    for (std::size_t q = 0; q < rr.distractors; ++q) {
        Distractor d;
        d.shape = rr.moving_distractors ? (rng.below(2) ? ObjShape::Square : ObjShape::Cross)
                                        : static_cast<ObjShape>(rng.below(3));
        d.r = rng.uniform(2.0, 3.5);
        double dspan = 0.0;
        if (rr.moving_distractors) {
            double dspeed = rng.uniform(rr.speed_lo, rr.speed_hi);
            std::uint64_t ddir = rng.below(4);
            d.vx = ddir == 2 ? -dspeed : (ddir == 3 ? dspeed : 0.0);
            d.vy = ddir == 0 ? -dspeed : (ddir == 1 ? dspeed : 0.0);
            dspan = dspeed * static_cast<double>(kFrames - 1);
        }
        double dm = d.r + 1.5 + dspan;
        d.x = rng.uniform(dm, static_cast<double>(kCanvas) - dm);
        d.y = rng.uniform(dm, static_cast<double>(kCanvas) - dm);
        s.distractors.push_back(d);
    }
    s.noise_seed = rng.next();

    ScaleClass sc = ScaleClass::Constant;
    Motion mo;
    switch (map) {
    case LabelMap::MotionOnly:
        mo = motion_of_class(map, label);
        break;
    case LabelMap::ScaleOnly:
        sc = static_cast<ScaleClass>(label);
        mo = static_cast<Motion>(dir_draw); // nuisance, class-independent
        break;
    case LabelMap::Joint:
        mo = motion_of_class(map, label);
        sc = static_cast<ScaleClass>(label % 3);
        break;
    }
    s.motion = mo;
    s.speed = mo == Motion::Static ? 0.0 : speed;
    s.scale = sc;
    s.growth = sc == ScaleClass::Grow ? g_mag : (sc == ScaleClass::Shrink ? -g_mag : 0.0);
    return s;
}

std::uint64_t item_seed_of(std::uint64_t global_seed, std::size_t index) {
    SplitMix64 h(global_seed ^ (0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(index) + 1)));
    return h.next();
}

} // namespace

SynthVideoSpec sample_spec(LabelMap map, std::size_t label, std::uint64_t item_seed) {
    if (label >= class_names(map).size()) throw ConfigError("sample_spec: label out of range");
    return make_spec(map, label, item_seed);
}

DatasetManifest make_dataset(LabelMap map, std::size_t n_train, std::size_t n_val, std::size_t n_test,
                             std::uint64_t seed) {
    DatasetManifest m;
    m.seed = seed;
    m.label_map = map;
    m.classes = class_names(map);
    std::size_t idx = 0;
    auto emit = [&](std::vector<std::size_t>& split, std::size_t count) {
        for (std::size_t c = 0; c < m.classes.size(); ++c)
            for (std::size_t i = 0; i < count; ++i) {
                m.items.push_back({make_spec(map, c, item_seed_of(seed, idx)), c});
                split.push_back(idx++);
            }
    };
    emit(m.train, n_train);
    emit(m.val, n_val);
    emit(m.test, n_test);
    return m;
}

DatasetManifest make_dataset(LabelMap map, std::size_t n_per_class, std::uint64_t seed) {
    if (n_per_class < 1) throw ConfigError("make_dataset: n_per_class must be >= 1");
    std::size_t n_test = std::max<std::size_t>(1, n_per_class / 4);
    std::size_t n_val = std::max<std::size_t>(1, n_per_class / 4);
    std::size_t n_train = n_per_class > n_val + n_test ? n_per_class - n_val - n_test : 1;
    return make_dataset(map, n_train, n_val, n_test, seed);
}

DatasetManifest make_held_out_dataset(LabelMap map, std::size_t held_class, std::size_t n_train, std::size_t n_val,
                                      std::size_t n_test, std::uint64_t seed) {
    DatasetManifest m;
    m.seed = seed;
    m.label_map = map;
    m.classes = class_names(map);
    if (held_class >= m.classes.size()) throw ConfigError("held-out class index out of range");
    m.held_out = {held_class};
    std::size_t idx = 0;
    auto emit = [&](std::vector<std::size_t>& split, std::size_t count, bool held) {
        for (std::size_t c = 0; c < m.classes.size(); ++c) {
            if (held != (c == held_class)) continue;
            for (std::size_t i = 0; i < count; ++i) {
                m.items.push_back({make_spec(map, c, item_seed_of(seed, idx)), c});
                split.push_back(idx++);
            }
        }
    };
    emit(m.train, n_train, false);
    emit(m.val, n_val, false);
    emit(m.test, n_test, true);
    return m;
}

DatasetManifest few_shot_subset(const DatasetManifest& manifest, std::size_t k) {
    DatasetManifest out = manifest;
    std::vector<std::vector<std::size_t>> per_class(manifest.classes.size());
    for (std::size_t idx : manifest.train) per_class[manifest.items[idx].label].push_back(idx);
    out.train.clear();
    SplitMix64 rng(manifest.seed ^ 0xFEED5EEDull);
    for (auto& cls : per_class) {
        if (cls.empty()) continue;
        if (k > cls.size())
            throw ConfigError("few_shot_subset: k=" + std::to_string(k) + " exceeds per-class count " +
                              std::to_string(cls.size()));
        // seeded Fisher-Yates, then take the first k
        for (std::size_t i = cls.size(); i-- > 1;) std::swap(cls[i], cls[rng.below(i + 1)]);
        for (std::size_t i = 0; i < k; ++i) out.train.push_back(cls[i]);
    }
    std::sort(out.train.begin(), out.train.end());
    return out;
}

Tensor assemble_pixels(const DatasetManifest& m, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw ConfigError("assemble_pixels: empty index list");
    const SynthVideoSpec& first = m.items.at(indices[0]).spec;
    Tensor out({indices.size(), first.frames, first.channels, first.canvas, first.canvas});
    std::size_t stride = first.frames * first.channels * first.canvas * first.canvas;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        Tensor clip = generate_video(m.items.at(indices[i]).spec);
        std::copy(clip.data.begin(), clip.data.end(), out.data.begin() + i * stride);
    }
    return out;
}

std::vector<std::size_t> labels_of(const DatasetManifest& m, const std::vector<std::size_t>& indices) {
    std::vector<std::size_t> labels;
    labels.reserve(indices.size());
    for (std::size_t idx : indices) labels.push_back(m.items.at(idx).label);
    return labels;
}

void frame_centroid(const Tensor& clip, std::size_t frame, double& cx, double& cy) {
    std::size_t c = clip.shape[1], n = clip.shape[2];
    const double* gray = clip.data.data() + frame * c * n * n;
    double mass = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            double v = gray[y * n + x];
            mass += v;
            sx += v * (static_cast<double>(x) + 0.5);
            sy += v * (static_cast<double>(y) + 0.5);
        }
    cx = sx / mass;
    cy = sy / mass;
}

// ------------------------------------------------------------- serialization

namespace {
nlohmann::json spec_to_json(const SynthVideoSpec& s) {
    nlohmann::json dj = nlohmann::json::array();
    for (const Distractor& d : s.distractors)
        dj.push_back({{"shape", static_cast<int>(d.shape)},
                      {"x", d.x},
                      {"y", d.y},
                      {"r", d.r},
                      {"vx", d.vx},
                      {"vy", d.vy}});
    return nlohmann::json{{"canvas", s.canvas},   {"frames", s.frames},
                          {"channels", s.channels}, {"shape", static_cast<int>(s.shape)},
                          {"motion", static_cast<int>(s.motion)}, {"scale", static_cast<int>(s.scale)},
                          {"x0", s.x0},           {"y0", s.y0},
                          {"speed", s.speed},     {"r0", s.r0},
                          {"growth", s.growth},   {"sigma", s.sigma},
                          {"noise_seed", s.noise_seed}, {"distractors", dj}};
}

SynthVideoSpec spec_from_json(const nlohmann::json& j) {
    SynthVideoSpec s;
    s.canvas = j.at("canvas").get<std::size_t>();
    s.frames = j.at("frames").get<std::size_t>();
    s.channels = j.at("channels").get<std::size_t>();
    s.shape = static_cast<ObjShape>(j.at("shape").get<int>());
    s.motion = static_cast<Motion>(j.at("motion").get<int>());
    s.scale = static_cast<ScaleClass>(j.at("scale").get<int>());
    s.x0 = j.at("x0").get<double>();
    s.y0 = j.at("y0").get<double>();
    s.speed = j.at("speed").get<double>();
    s.r0 = j.at("r0").get<double>();
    s.growth = j.at("growth").get<double>();
    s.sigma = j.at("sigma").get<double>();
    s.noise_seed = j.at("noise_seed").get<std::uint64_t>();
    for (const auto& dj : j.at("distractors")) {
        Distractor d;
        d.shape = static_cast<ObjShape>(dj.at("shape").get<int>());
        d.x = dj.at("x").get<double>();
        d.y = dj.at("y").get<double>();
        d.r = dj.at("r").get<double>();
        d.vx = dj.at("vx").get<double>();
        d.vy = dj.at("vy").get<double>();
        s.distractors.push_back(d);
    }
    return s;
}
} // namespace

nlohmann::json DatasetManifest::to_json() const {
    nlohmann::json items_j = nlohmann::json::array();
    for (const auto& it : items) items_j.push_back({{"spec", spec_to_json(it.spec)}, {"label", it.label}});
    return nlohmann::json{{"version", version},
                          {"seed", seed},
                          {"label_map", to_string(label_map)},
                          {"classes", classes},
                          {"held_out", held_out},
                          {"items", items_j},
                          {"splits", {{"train", train}, {"val", val}, {"test", test}}}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
    DatasetManifest m;
    m.version = j.at("version").get<std::uint32_t>();
    if (m.version != 1) throw IoError("manifest version " + std::to_string(m.version) + " unsupported (want 1)");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.label_map = label_map_from_string(j.at("label_map").get<std::string>());
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.held_out = j.at("held_out").get<std::vector<std::size_t>>();
    for (const auto& it : j.at("items"))
        m.items.push_back({spec_from_json(it.at("spec")), it.at("label").get<std::size_t>()});
    m.train = j.at("splits").at("train").get<std::vector<std::size_t>>();
    m.val = j.at("splits").at("val").get<std::vector<std::size_t>>();
    m.test = j.at("splits").at("test").get<std::vector<std::size_t>>();
    return m;
}

void DatasetManifest::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write manifest: " + path);
    f << to_json().dump(2) << "\n";
}

DatasetManifest DatasetManifest::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read manifest: " + path);
    nlohmann::json j;
    f >> j;
    return from_json(j);
}

} // namespace omniclip
