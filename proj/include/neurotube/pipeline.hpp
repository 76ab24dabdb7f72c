#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "neurotube/swc.hpp"
#include "neurotube/volume.hpp"

namespace nt {

/// Foreground test used everywhere a soft map is binarized.
inline bool is_foreground(double value, double threshold = 0.5) { return value >= threshold; }

struct BlockGeometry {
    std::size_t depth = 5;
    std::size_t height = 100;
    std::size_t width = 100;
    std::size_t stride = 50;  // in-plane; depth stride is always 1
};

/// Training crop: `data` is [depth, height, width]; `soft_label` is the
/// [height, width] label of the centre slice.
struct Block {
    std::array<std::size_t, 3> origin{};  // z, y, x
    Tensor data;
    Tensor soft_label;
    double foreground_ratio = 0.0;
};

/// Tiles `image` in (z, y, x) order and keeps the tiles whose binarized
/// centre-slice label covers at least `ratio_threshold`.
std::vector<Block> partition_blocks(const Volume& image, const Volume& labels, double ratio_threshold,
                                    const BlockGeometry& geometry = {}, DType dtype = DType::f64);

/// Soft label from centreline distance: per voxel, d is the distance to the
/// nearest SWC segment and r the radius interpolated at the closest point;
/// label = clamp(1 - d / (r * decay), 0, 1).
Volume dt_labels(const std::array<std::size_t, 3>& shape, const SwcTree& swc, double decay = 1.5);

struct PhantomSpec {
    std::array<std::size_t, 3> size = {16, 48, 48};  // D, H, W
    std::size_t branches = 3;
    std::array<double, 2> radius_range = {1.5, 3.0};
    double noise = 0.1;
    double decay = 1.5;
};

struct Phantom {
    Volume image;  // soft tubes plus clipped Gaussian noise
    Volume label;  // noise-free soft label
    SwcTree swc;
};

/// Random branching tree rendered through dt_labels. One branch is a single
/// straight tube; every extra branch forks from an existing node.
Phantom gen_phantom(std::uint64_t seed, const PhantomSpec& spec);

}  // namespace nt
