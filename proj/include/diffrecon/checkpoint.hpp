#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "diffrecon/util.hpp"

namespace diffrecon {

/// Checkpoint integrity failure that is not plain file corruption
/// (unsupported version, manifest/module mismatch).
struct CheckpointError : Error {
  using Error::Error;
};

/// On-disk layout, little-endian throughout:
///   bytes 0..7   magic "DIFRECON"
///   bytes 8..11  format version (u32, currently 1)
///   bytes 12..19 manifest length in bytes (u64)
///   ...          UTF-8 JSON manifest
///   ...          contiguous float32 tensor buffer
/// The manifest holds a caller-supplied "meta" object and a "tensors" array
/// of {name, shape, dtype, offset} entries; offsets are byte offsets into
/// the buffer in file order.
inline constexpr char kCheckpointMagic[8] = {'D', 'I', 'F', 'R',
                                             'E', 'C', 'O', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Serialize all named parameters and buffers of `module`.
void save_checkpoint(const torch::nn::Module& module,
                     const nlohmann::json& meta,
                     const std::filesystem::path& path);

/// Read back the meta object without touching any model.
nlohmann::json read_checkpoint_meta(const std::filesystem::path& path);

/// Copy stored tensors into an already-constructed module. The manifest and
/// the module must agree exactly on tensor names and shapes. Returns meta.
nlohmann::json load_checkpoint_into(torch::nn::Module& module,
                                    const std::filesystem::path& path);

}  // namespace diffrecon
