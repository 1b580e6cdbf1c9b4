#pragma once
// Latent-space arithmetic: interpolation, deformation transfer by a constant offset, and
// causal exponential smoothing. Pure vector math; decoding is up to the caller.

#include <filesystem>
#include <span>
#include <vector>

namespace demea {

using LatentCode = std::vector<float>;
using LatentSequence = std::vector<LatentCode>;

/// (1 - alpha) s + alpha t
LatentCode interpolate(std::span<const float> source, std::span<const float> target, double alpha);

/// M'_i = M_i + (M'_0 - M_0). The first source frame and target_pose0 are assumed to share a pose.
LatentSequence transfer(const LatentSequence& source, std::span<const float> target_pose0);

/// D'_0 = D_0, D'_i = alpha D_i + (1 - alpha) D'_{i-1}
LatentSequence smooth(const LatentSequence& sequence, double alpha);

/// One code per line, comma separated.
void write_latent_csv(const LatentSequence& sequence, const std::filesystem::path& path);
LatentSequence read_latent_csv(const std::filesystem::path& path);

}  // namespace demea
