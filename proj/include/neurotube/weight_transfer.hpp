#pragma once

#include <array>
#include <string>
#include <vector>

#include "neurotube/archive.hpp"
#include "neurotube/config.hpp"
#include "neurotube/tensor.hpp"

namespace nt {

/// Tube direction. Values index (z, y, x) coordinate triples.
enum class Axis { z = 0, y = 1, x = 2 };

inline constexpr std::size_t kKernelSide = 16;
inline constexpr std::size_t kTubeLength = kKernelSide * kKernelSide;

std::string axis_name(Axis a);
Axis parse_axis(const std::string& name);

/// Raised when a checkpoint does not fit the requested model. `offending()`
/// lists every tensor name involved.
class IncompatibleCheckpoint : public ArgumentError {
  public:
    IncompatibleCheckpoint(const std::string& what, std::vector<std::string> names);
    const std::vector<std::string>& offending() const { return names_; }

  private:
    std::vector<std::string> names_;
};

/// A 2-D pre-trained ViT weight set as stored in a DTNA archive.
///
/// Tensor names: "meta.header" (f64 [4] = E, C, layers, heads),
/// "patch.kernel" [E,C,16,16], optional "patch.bias" [E], "pos.embed" [T,E],
/// "block{i}.attn.{q,k,v,o}" [E,E], "block{i}.mlp.fc1" [E,M],
/// "block{i}.mlp.fc2" [M,E], "block{i}.{ln1,ln2}.{g,b}" [E], "final_ln.{g,b}" [E].
/// Linear weights are stored input-major (y = x W).
class Checkpoint2D {
  public:
    /// Validates names and shapes against the header.
    static Checkpoint2D from_tensors(TensorMap tensors);

    std::size_t embed_dim() const { return embed_dim_; }
    std::size_t channels() const { return channels_; }
    std::size_t layers() const { return layers_; }
    std::size_t heads() const { return heads_; }
    std::size_t mlp_dim() const { return mlp_dim_; }

    const Tensor& patch_kernel() const { return tensors_.at("patch.kernel"); }
    const Tensor& pos_embed() const { return tensors_.at("pos.embed"); }
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const { return tensors_.contains(name); }
    const TensorMap& tensors() const { return tensors_; }

  private:
    TensorMap tensors_;
    std::size_t embed_dim_ = 0, channels_ = 0, layers_ = 0, heads_ = 0, mlp_dim_ = 0;
};

/// Names of the per-layer transformer tensors, in a fixed order.
std::vector<std::string> block_tensor_names(std::size_t layer);

/// Synthetic stand-in for a pre-trained checkpoint: oriented Gabor and blob
/// patch kernels plus small random transformer weights. For fixtures and
/// desk-scale experiments; not real pre-trained weights.
TensorMap make_fixture_checkpoint(std::size_t embed_dim, std::size_t channels, std::size_t layers, std::size_t heads,
                                  std::size_t tokens, std::uint64_t seed);

/// [E,C,16,16] -> [E,C,depth,16,16]; every slice is k2d / depth.
Tensor inflate_average(const Tensor& k2d, std::size_t depth);
/// [E,C,16,16] -> [E,C,depth,16,16]; slice depth/2 is k2d, the rest zero.
Tensor inflate_center(const Tensor& k2d, std::size_t depth);

/// Collapses axis 1 (input channels) to size 1.
Tensor reduce_channels(const Tensor& kernel, ChannelReduction reduction);

struct TubularKernel {
    Tensor weights;  // [E, 256]
    Axis axis = Axis::x;
    ChannelReduction reduction = ChannelReduction::mean;

    /// Row-major flattening: kernel cell (row, col) -> tube index.
    static constexpr std::size_t tube_index(std::size_t row, std::size_t col) { return row * kKernelSide + col; }
};

TubularKernel flatten_tubular(const Tensor& k2d, Axis axis, ChannelReduction reduction = ChannelReduction::mean);
/// Inverse of the flattening: [E,256] -> [E,16,16].
Tensor unflatten_tubular(const TubularKernel& kernel);

/// Reference (non-differentiable) valid 3-D cross-correlation.
/// input [C,D,H,W], kernel [O,C,kd,kh,kw] -> [O,D',H',W'].
Tensor conv3d_valid(const Tensor& input, const Tensor& kernel, std::array<std::size_t, 3> stride = {1, 1, 1});

/// Linear interpolation of rows: [S,E] -> [count,E], endpoints preserved.
Tensor resize_pos_embed(const Tensor& pos, std::size_t count);

/// Fresh parameters for `cfg`, drawn from cfg.seed.
TensorMap random_init(const ModelConfig& cfg);

/// Seeds a 3-D parameter map from a 2-D checkpoint using cfg.strategy.
/// Parameters the checkpoint does not cover keep their random_init values.
TensorMap seed_model(const Checkpoint2D& ck, const ModelConfig& cfg);

}  // namespace nt
