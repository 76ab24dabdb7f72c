#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace nt {

/// Exact squared Euclidean distance from every voxel to the nearest voxel
/// with features[i] != 0 (separable lower-envelope algorithm, unit spacing).
/// Voxels are z-major over `shape` = {D, H, W}. With no feature voxel at all
/// every entry is +infinity.
std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& features,
                                               const std::array<std::size_t, 3>& shape);

}  // namespace nt
