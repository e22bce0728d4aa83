#pragma once

#include <string>

#include "stsan/params.hpp"

namespace stsan {

// Checkpoint file layout (all integers little-endian):
//   magic "STSN" | u32 version | u32 count |
//   repeated: u32 name_len | name bytes (UTF-8) | u32 rank |
//             u64 extents[rank] | f32 values[numel] (little-endian)
// Values are stored as 32-bit floats regardless of the engine precision;
// save(load(f)) reproduces f byte for byte.
inline constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const std::string& path, const ParamStoreT<T>& params);

// Loads into an existing store; every name and shape must match.
template <typename T>
void load_checkpoint(const std::string& path, ParamStoreT<T>& params);

// Standalone reader (names in file order), used by `inspect`.
struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<float> values;
};
std::vector<CheckpointEntry> read_checkpoint(const std::string& path);

}  // namespace stsan
