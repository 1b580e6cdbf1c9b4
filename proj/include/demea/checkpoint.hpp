#pragma once
// Checkpoint files: magic "DEMEA\0", u32 format version, then per parameter
// u32 name length, UTF-8 name, u32 rank, u32 dims, f32 values (all little-endian).
// Adam state goes to a sibling "<path>.adam" file in the same layout, holding
// "<name>.m" / "<name>.v" tensors and a one-element "adam.step" tensor.

#include <filesystem>

#include "demea/nn.hpp"

namespace demea {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::filesystem::path adam_state_path(const std::filesystem::path& checkpoint);

template <typename Real>
void save_checkpoint(const ParameterStore<Real>& store, const std::filesystem::path& path);

/// Loads values into an existing store whose names and shapes must match the file.
/// Adam moments and the step counter are restored when the sibling file exists.
template <typename Real>
void load_checkpoint(ParameterStore<Real>& store, const std::filesystem::path& path);

}  // namespace demea
