#pragma once

// Checkpoint file: one JSON manifest line
//   {"format":"ttvi-checkpoint","version":1,"arch":{...},
//    "tensors":[{"name":..,"partition":..,"shape":[..],"dtype":"f32"},..]}
// followed by the concatenated little-endian f32 payloads in manifest order.

#include <filesystem>

#include <json.hpp>

#include "ttvi/nets.hpp"

namespace ttvi {

nlohmann::json arch_to_json(const ArchConfig& arch);
ArchConfig arch_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const ParamSet<float>& params);

/// Throws FormatError on a malformed file. When `expected` is given, a differing
/// architecture is also a FormatError, naming the first differing field.
ParamSet<float> load_checkpoint(const std::filesystem::path& path, const ArchConfig* expected = nullptr);

/// FNV-1a over names, shapes and raw parameter bytes; equal hashes for
/// bit-identical parameter sets.
std::uint64_t param_hash(const ParamSet<float>& params);

}  // namespace ttvi
