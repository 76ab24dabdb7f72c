#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

#include "neurotube/ops.hpp"
#include "neurotube/weight_transfer.hpp"

namespace nt {

// Tube geometry. A tube has 256 points; tube index t sits at axial distance
// h = t - 127 from the anchor, so h runs over {-127, ..., 128}. Each of the
// other 255 points owns one offset pair, applied relative to its neighbour
// one step closer to the center.
inline constexpr std::size_t kTubeCenter = 127;
inline constexpr std::size_t kOffsetPairs = kTubeLength - 1;
inline constexpr std::size_t kOffsetChannels = 2 * kOffsetPairs;

struct Point3 {
    double z = 0.0;
    double y = 0.0;
    double x = 0.0;

    double operator[](std::size_t i) const { return i == 0 ? z : (i == 1 ? y : x); }
    double& operator[](std::size_t i) { return i == 0 ? z : (i == 1 ? y : x); }
    bool operator==(const Point3&) const = default;
};

/// The two coordinate indices (in z, y, x order) orthogonal to `axis`.
std::array<std::size_t, 2> off_axes(Axis axis);

/// Signed axial distance of tube index t from the anchor.
constexpr long tube_h(std::size_t t) { return static_cast<long>(t) - static_cast<long>(kTubeCenter); }

/// Offset pair owned by tube index t (t != kTubeCenter).
constexpr std::size_t offset_slot(std::size_t t) { return t < kTubeCenter ? t : t - 1; }

struct TubeGrid {
    Axis axis = Axis::x;
    Point3 anchor;
    std::array<Point3, kTubeLength> coords;
};

/// Accumulates `offsets` (255 pairs, interleaved, each within [-1, 1])
/// outward from the anchor in both directions.
TubeGrid build_tube(const Point3& anchor, Axis axis, std::span<const double> offsets);

/// Anchors for a block: mid-depth, one per 16x16 in-plane patch at its
/// (8, 8) cell, row-major over the padded patch grid.
std::vector<Point3> anchor_layout(std::size_t depth, std::size_t height, std::size_t width);

/// Tube sample coordinates for one view, as a differentiable tensor.
struct TubeCoords {
    Axis axis = Axis::x;
    Tensor coords;  // [anchors * 256, 3], (z, y, x)
};

/// Differentiable build_tube over all anchors. offsets: [anchors, 510].
TubeCoords tube_coords(Graph& g, const Tensor& offsets, const std::vector<Point3>& anchors, Axis axis);
/// Non-differentiable variant from prebuilt grids.
TubeCoords tube_coords(const std::vector<TubeGrid>& grids);

/// Bounded offsets for all three views: [anchors, 3 * 510], columns grouped
/// by view in (z, y, x) order. Each anchor's 16x16 patch (all depth slices)
/// goes through one linear map and a tanh.
Tensor predict_offsets(Graph& g, const Tensor& block, const Tensor& weight, const Tensor& bias);
/// The [anchors, 510] slice of an offset field belonging to `axis`.
Tensor view_offsets(Graph& g, const Tensor& field, Axis axis);

/// token[a, e] = sum_t weights[e, t] * sample(block, coords_a(t)).
Tensor embed_view(Graph& g, const Tensor& block, const Tensor& weights, Axis kernel_axis, const TubeCoords& coords);

/// Mean of three [anchors, E] views followed by layernorm.
Tensor fuse_views(Graph& g, const Tensor& tok_z, const Tensor& tok_y, const Tensor& tok_x, const Tensor& gamma,
                  const Tensor& beta, double eps = 1e-5);

/// One "t,z,y,x" row per tube point, with header.
void write_tube_csv(std::ostream& out, const TubeGrid& grid);

}  // namespace nt
