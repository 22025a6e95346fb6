#pragma once

#include "omniclip/model.hpp"
#include "omniclip/train.hpp"

namespace omniclip {

// Little-endian binary container:
//   "OMNI" | u32 version | u64 header_len | header JSON | payload | u32 crc32
// The header carries the model config, class names, trainer state, and a
// tensor directory (name/shape/frozen/offset/count); the payload is raw
// f64 data. The CRC covers the payload bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    std::uint64_t step = 0;
    std::uint64_t rng_state = 0;
    bool has_train_config = false;
    TrainConfig train_config;
};

void save_checkpoint(const std::string& path, const OmniClipModel& model, const AdamW* opt,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
    OmniClipModel model;
    CheckpointMeta meta;
    bool has_optimizer = false;
    std::uint64_t opt_steps = 0;
    std::map<std::string, Tensor> opt_m, opt_v;
};

// Rebuilds the model from the embedded config and restores every tensor.
// A missing trainable tensor is an error; a missing frozen tensor is an
// error unless allow_reinit_frozen, in which case the seeded initial value
// stands in.
LoadedCheckpoint load_checkpoint(const std::string& path, bool allow_reinit_frozen = false);

std::uint32_t crc32(const unsigned char* data, std::size_t len);

} // namespace omniclip
