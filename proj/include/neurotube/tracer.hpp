#pragma once

#include <stdexcept>

#include "neurotube/metrics.hpp"
#include "neurotube/swc.hpp"
#include "neurotube/volume.hpp"

namespace nt {

/// Raised when the binarized probability map has no foreground voxel.
struct EmptyTrace : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TraceOptions {
    double binarize = 0.5;
    std::size_t prune_len = 5;  // leaf branches with fewer nodes are removed
};

/// Topology-preserving 3-D thinning (26-connected foreground). Voxels with at
/// most one foreground neighbour are kept as curve endpoints.
BinaryMask skeletonize(const BinaryMask& mask);

/// True when removing the centre of a 3x3x3 neighbourhood (z-major, index 13
/// is the centre) preserves topology.
bool is_simple_point(const std::array<bool, 27>& nbhd);

/// Skeleton-based tracer: binarize, thin, connect skeleton voxels, take a
/// shortest-path tree per connected piece rooted at its widest voxel, prune
/// short leaf branches, and read radii off the distance transform. Each
/// connected piece becomes its own rooted tree.
SwcTree trace(const Volume& prob, const TraceOptions& options = {});

}  // namespace nt
