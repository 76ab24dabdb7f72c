#include "neurotube/tubular.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

namespace nt {
namespace {

void check_offset(double v, std::size_t index) {
    if (!(std::abs(v) <= 1.0)) {
        throw ContractError("tube offset " + std::to_string(index) + " = " + std::to_string(v) +
                            " outside [-1, 1]");
    }
}

}  // namespace

std::array<std::size_t, 2> off_axes(Axis axis) {
    switch (axis) {
        case Axis::z: return {1, 2};
        case Axis::y: return {0, 2};
        case Axis::x: return {0, 1};
    }
    return {1, 2};
}

TubeGrid build_tube(const Point3& anchor, Axis axis, std::span<const double> offsets) {
    if (offsets.size() != kOffsetChannels) {
        throw DimensionError("build_tube: expected " + std::to_string(kOffsetChannels) + " offsets, got " +
                             std::to_string(offsets.size()));
    }
    for (std::size_t i = 0; i < offsets.size(); ++i) check_offset(offsets[i], i);
    TubeGrid grid;
    grid.axis = axis;
    grid.anchor = anchor;
    const auto ax = static_cast<std::size_t>(axis);
    const auto [a, b] = off_axes(axis);
    grid.coords[kTubeCenter] = anchor;
    auto step = [&](std::size_t t, std::size_t prev, double dir) {
        Point3 p = grid.coords[prev];
        p[ax] += dir;
        p[a] += offsets[2 * offset_slot(t)];
        p[b] += offsets[2 * offset_slot(t) + 1];
        grid.coords[t] = p;
    };
    for (std::size_t t = kTubeCenter + 1; t < kTubeLength; ++t) step(t, t - 1, 1.0);
    for (std::size_t t = kTubeCenter; t-- > 0;) step(t, t + 1, -1.0);
    return grid;
}

std::vector<Point3> anchor_layout(std::size_t depth, std::size_t height, std::size_t width) {
    if (depth == 0 || height == 0 || width == 0) throw DimensionError("anchor_layout: empty block");
    const std::size_t gh = (height + kKernelSide - 1) / kKernelSide;
    const std::size_t gw = (width + kKernelSide - 1) / kKernelSide;
    std::vector<Point3> anchors;
    anchors.reserve(gh * gw);
    const double mid = static_cast<double>((depth - 1) / 2);
    for (std::size_t i = 0; i < gh; ++i)
        for (std::size_t j = 0; j < gw; ++j)
            anchors.push_back({mid, static_cast<double>(i * kKernelSide + kKernelSide / 2),
                               static_cast<double>(j * kKernelSide + kKernelSide / 2)});
    return anchors;
}

TubeCoords tube_coords(Graph& g, const Tensor& offsets, const std::vector<Point3>& anchors, Axis axis) {
    if (anchors.empty()) throw ArgumentError("tube_coords: no anchors");
    if (offsets.rank() != 2 || offsets.dim(0) != anchors.size() || offsets.dim(1) != kOffsetChannels) {
        throw DimensionError("tube_coords: offsets must be [" + std::to_string(anchors.size()) + "," +
                             std::to_string(kOffsetChannels) + "], got " + shape_str(offsets.shape()));
    }
    const std::size_t A = anchors.size();
    std::vector<double> out(A * kTubeLength * 3);
    for (std::size_t i = 0; i < A; ++i) {
        const auto grid = build_tube(anchors[i], axis, offsets.data().subspan(i * kOffsetChannels, kOffsetChannels));
        for (std::size_t t = 0; t < kTubeLength; ++t)
            for (std::size_t c = 0; c < 3; ++c) out[(i * kTubeLength + t) * 3 + c] = grid.coords[t][c];
    }
    Tensor coords({A * kTubeLength, 3}, std::move(out), offsets.dtype());
    if (g.should_record({&offsets})) {
        const auto [a, b] = off_axes(axis);
        g.record(coords, [offsets, A, a = a, b = b](std::span<const double> gc) {
            auto go = grad_buffer(offsets);
            for (std::size_t i = 0; i < A; ++i) {
                const double* gp = gc.data() + i * kTubeLength * 3;
                double* gi = go.data() + i * kOffsetChannels;
                // An offset moves its own point and every point further out.
                double sa = 0.0, sb = 0.0;
                for (std::size_t t = kTubeLength; t-- > kTubeCenter + 1;) {
                    sa += gp[3 * t + a];
                    sb += gp[3 * t + b];
                    gi[2 * offset_slot(t)] += sa;
                    gi[2 * offset_slot(t) + 1] += sb;
                }
                sa = sb = 0.0;
                for (std::size_t t = 0; t < kTubeCenter; ++t) {
                    sa += gp[3 * t + a];
                    sb += gp[3 * t + b];
                    gi[2 * offset_slot(t)] += sa;
                    gi[2 * offset_slot(t) + 1] += sb;
                }
            }
        });
    }
    return {axis, coords};
}

TubeCoords tube_coords(const std::vector<TubeGrid>& grids) {
    if (grids.empty()) throw ArgumentError("tube_coords: anchor grid empty");
    const Axis axis = grids.front().axis;
    std::vector<double> out;
    out.reserve(grids.size() * kTubeLength * 3);
    for (const auto& grid : grids) {
        if (grid.axis != axis) throw ArgumentError("tube_coords: grids mix tube axes");
        for (const auto& p : grid.coords) {
            out.push_back(p.z);
            out.push_back(p.y);
            out.push_back(p.x);
        }
    }
    return {axis, Tensor({grids.size() * kTubeLength, 3}, std::move(out))};
}

Tensor predict_offsets(Graph& g, const Tensor& block, const Tensor& weight, const Tensor& bias) {
    if (block.rank() != 3) throw DimensionError("predict_offsets: block must be [D,H,W]");
    const std::size_t features = block.dim(0) * kTubeLength;
    if (weight.rank() != 2 || weight.dim(0) != features || weight.dim(1) != 3 * kOffsetChannels) {
        throw DimensionError("predict_offsets: weight must be [" + std::to_string(features) + "," +
                             std::to_string(3 * kOffsetChannels) + "], got " + shape_str(weight.shape()));
    }
    const Tensor patches = ops::extract_patches(g, block, kKernelSide);
    return ops::tanh(g, ops::add_bias(g, ops::matmul(g, patches, weight), bias));
}

Tensor view_offsets(Graph& g, const Tensor& field, Axis axis) {
    if (field.rank() != 2 || field.dim(1) != 3 * kOffsetChannels) {
        throw DimensionError("view_offsets: field must be [anchors, 1530]");
    }
    return ops::slice_cols(g, field, static_cast<std::size_t>(axis) * kOffsetChannels, kOffsetChannels);
}

Tensor embed_view(Graph& g, const Tensor& block, const Tensor& weights, Axis kernel_axis, const TubeCoords& coords) {
    if (kernel_axis != coords.axis) {
        throw ArgumentError("embed_view: kernel axis " + axis_name(kernel_axis) + " differs from grid axis " +
                            axis_name(coords.axis));
    }
    if (coords.coords.rank() != 2 || coords.coords.dim(0) == 0) throw ArgumentError("embed_view: anchor grid empty");
    if (weights.rank() != 2 || weights.dim(1) != kTubeLength) {
        throw DimensionError("embed_view: weights must be [E,256], got " + shape_str(weights.shape()));
    }
    const std::size_t A = coords.coords.dim(0) / kTubeLength;
    const Tensor samples = ops::reshape(g, ops::trilinear_sample(g, block, coords.coords), {A, kTubeLength});
    return ops::matmul(g, samples, ops::transpose(g, weights));
}

Tensor fuse_views(Graph& g, const Tensor& tok_z, const Tensor& tok_y, const Tensor& tok_x, const Tensor& gamma,
                  const Tensor& beta, double eps) {
    if (tok_z.shape() != tok_y.shape() || tok_z.shape() != tok_x.shape()) {
        throw DimensionError("fuse_views: view shapes differ " + shape_str(tok_z.shape()) + " " +
                             shape_str(tok_y.shape()) + " " + shape_str(tok_x.shape()));
    }
    // Per-element sorted summation keeps the mean invariant to view order.
    std::vector<double> out(tok_z.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::array<double, 3> v{tok_z.data()[i], tok_y.data()[i], tok_x.data()[i]};
        std::sort(v.begin(), v.end());
        out[i] = ((v[0] + v[1]) + v[2]) / 3.0;
    }
    Tensor avg(tok_z.shape(), std::move(out), promote(promote(tok_z.dtype(), tok_y.dtype()), tok_x.dtype()));
    if (g.should_record({&tok_z, &tok_y, &tok_x})) {
        g.record(avg, [tok_z, tok_y, tok_x](std::span<const double> gy) {
            for (const Tensor* t : {&tok_z, &tok_y, &tok_x}) {
                if (!t->requires_grad()) continue;
                auto gt = grad_buffer(*t);
                for (std::size_t i = 0; i < gy.size(); ++i) gt[i] += gy[i] / 3.0;
            }
        });
    }
    return ops::layernorm(g, avg, gamma, beta, eps);
}

void write_tube_csv(std::ostream& out, const TubeGrid& grid) {
    out << "t,z,y,x\n";
    for (std::size_t t = 0; t < kTubeLength; ++t) {
        const auto& p = grid.coords[t];
        out << t << ',' << p.z << ',' << p.y << ',' << p.x << '\n';
    }
}

}  // namespace nt
