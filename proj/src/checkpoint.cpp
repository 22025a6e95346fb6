#include "omniclip/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace omniclip {

namespace {

const char kMagic[4] = {'O', 'M', 'N', 'I'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated checkpoint file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw IoError("truncated checkpoint file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

struct Crc32Table {
    std::uint32_t t[256];
    Crc32Table() {
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
            t[i] = c;
        }
    }
};

nlohmann::json shape_json(const Shape& s) {
    nlohmann::json j = nlohmann::json::array();
    for (std::size_t e : s) j.push_back(e);
    return j;
}

Shape shape_from_json(const nlohmann::json& j) {
    Shape s;
    for (const auto& e : j) s.push_back(e.get<std::size_t>());
    return s;
}

} // namespace

std::uint32_t crc32(const unsigned char* data, std::size_t len) {
    static const Crc32Table table;
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) c = table.t[(c ^ data[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

void save_checkpoint(const std::string& path, const OmniClipModel& model, const AdamW* opt,
                     const CheckpointMeta& meta) {
    ParamList params = model.parameters();

    std::string payload;
    nlohmann::json dir = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& p : params) {
        const Tensor& t = p.var.value();
        dir.push_back({{"name", p.name},
                       {"shape", shape_json(t.shape)},
                       {"dtype", "f64"},
                       {"frozen", !p.var.trainable()},
                       {"offset", offset},
                       {"count", t.size()}});
        for (double d : t.data) put_f64(payload, d);
        offset += t.size();
    }
    nlohmann::json opt_dir = nlohmann::json::array();
    if (opt) {
        auto dump_moments = [&](const char* kind, const std::map<std::string, Tensor>& moments) {
            for (const auto& [name, t] : moments) {
                opt_dir.push_back({{"name", std::string(kind) + "/" + name},
                                   {"shape", shape_json(t.shape)},
                                   {"offset", offset},
                                   {"count", t.size()}});
                for (double d : t.data) put_f64(payload, d);
                offset += t.size();
            }
        };
        dump_moments("m", opt->first_moments());
        dump_moments("v", opt->second_moments());
    }

    nlohmann::json header{{"model_config", model.config()},
                          {"classes", model.classes()},
                          {"step", meta.step},
                          {"rng_state", meta.rng_state},
                          {"tensors", dir},
                          {"opt_tensors", opt_dir}};
    if (meta.has_train_config) header["train_config"] = meta.train_config;
    if (opt) header["opt"] = {{"t", opt->steps_taken()},
                              {"beta1", opt->beta1()},
                              {"beta2", opt->beta2()},
                              {"eps", opt->eps()},
                              {"weight_decay", opt->weight_decay()}};

    std::string header_str = header.dump();
    std::string blob;
    blob.append(kMagic, 4);
    put_u32(blob, kCheckpointVersion);
    put_u64(blob, header_str.size());
    blob += header_str;
    blob += payload;
    put_u32(blob, crc32(reinterpret_cast<const unsigned char*>(payload.data()), payload.size()));

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write checkpoint: " + path);
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!f) throw IoError("short write on checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path, bool allow_reinit_frozen) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read checkpoint: " + path);
    char magic[4];
    if (!f.read(magic, 4)) throw IoError("truncated checkpoint file");
    if (std::memcmp(magic, kMagic, 4) != 0) throw IoError("not an OMNI checkpoint: " + path);
    std::uint32_t version = read_u32(f);
    if (version != kCheckpointVersion)
        throw IoError("checkpoint version " + std::to_string(version) + " unsupported; this build reads version " +
                      std::to_string(kCheckpointVersion));
    std::uint64_t header_len = read_u64(f);
    std::string header_str(header_len, '\0');
    if (!f.read(header_str.data(), static_cast<std::streamsize>(header_len)))
        throw IoError("truncated checkpoint file");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("corrupt checkpoint header: ") + e.what());
    }

    std::uint64_t total = 0;
    for (const auto& e : header.at("tensors")) total += e.at("count").get<std::uint64_t>();
    for (const auto& e : header.at("opt_tensors")) total += e.at("count").get<std::uint64_t>();
    std::string payload(total * 8, '\0');
    if (!f.read(payload.data(), static_cast<std::streamsize>(payload.size())))
        throw IoError("truncated checkpoint file");
    std::uint32_t stored_crc = read_u32(f);
    std::uint32_t actual = crc32(reinterpret_cast<const unsigned char*>(payload.data()), payload.size());
    if (stored_crc != actual) throw IoError("corrupt checkpoint: payload CRC mismatch");

    auto read_tensor = [&](std::uint64_t offset, std::uint64_t count, const Shape& shape) {
        Tensor t(shape);
        if (t.size() != count) throw IoError("checkpoint tensor count disagrees with shape");
        for (std::uint64_t i = 0; i < count; ++i) {
            std::uint64_t v = 0;
            const auto* b = reinterpret_cast<const unsigned char*>(payload.data()) + (offset + i) * 8;
            for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(b[k]) << (8 * k);
            t[i] = std::bit_cast<double>(v);
        }
        return t;
    };

    LoadedCheckpoint out;
    ModelConfig cfg = header.at("model_config").get<ModelConfig>();
    auto classes = header.at("classes").get<std::vector<std::string>>();
    out.model = OmniClipModel(cfg, classes);
    out.meta.step = header.at("step").get<std::uint64_t>();
    out.meta.rng_state = header.at("rng_state").get<std::uint64_t>();
    if (header.contains("train_config")) {
        out.meta.has_train_config = true;
        out.meta.train_config = header.at("train_config").get<TrainConfig>();
    }

    std::map<std::string, nlohmann::json> by_name;
    for (const auto& e : header.at("tensors")) by_name[e.at("name").get<std::string>()] = e;

    for (const auto& p : out.model.parameters()) {
        auto it = by_name.find(p.name);
        if (it == by_name.end()) {
            if (!p.var.trainable() && allow_reinit_frozen) continue; // seeded init stands in
            throw IoError(std::string("checkpoint is missing ") + (p.var.trainable() ? "trainable" : "frozen") +
                          " tensor '" + p.name + "'");
        }
        const nlohmann::json& e = it->second;
        Shape shape = shape_from_json(e.at("shape"));
        if (shape != p.var.shape())
            throw IoError("checkpoint tensor '" + p.name + "' shape " + shape_str(shape) +
                          " disagrees with model " + shape_str(p.var.shape()));
        Var v = p.var;
        v.value() = read_tensor(e.at("offset").get<std::uint64_t>(), e.at("count").get<std::uint64_t>(), shape);
    }

    if (header.contains("opt")) {
        out.has_optimizer = true;
        out.opt_steps = header.at("opt").at("t").get<std::uint64_t>();
        for (const auto& e : header.at("opt_tensors")) {
            std::string name = e.at("name").get<std::string>();
            Tensor t = read_tensor(e.at("offset").get<std::uint64_t>(), e.at("count").get<std::uint64_t>(),
                                   shape_from_json(e.at("shape")));
            if (name.rfind("m/", 0) == 0)
                out.opt_m[name.substr(2)] = std::move(t);
            else if (name.rfind("v/", 0) == 0)
                out.opt_v[name.substr(2)] = std::move(t);
        }
    }
    return out;
}

} // namespace omniclip
