#pragma once

#include <vector>

#include "neurotube/tensor.hpp"

// Differentiable ops. Every op takes the graph it records into first; pass a
// disabled graph (Graph::inference()) for forward-only evaluation.
namespace nt::ops {

// Elementwise, identical shapes.
Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor div(Graph& g, const Tensor& a, const Tensor& b);
Tensor scale(Graph& g, const Tensor& x, double factor);
Tensor add_scalar(Graph& g, const Tensor& x, double value);

/// x[..., n] + bias[n]
Tensor add_bias(Graph& g, const Tensor& x, const Tensor& bias);

Tensor sum(Graph& g, const Tensor& x);
Tensor mean(Graph& g, const Tensor& x);

Tensor reshape(Graph& g, const Tensor& x, Shape shape);
Tensor transpose(Graph& g, const Tensor& x);
Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);

/// Columns [start, start + count) of a 2-D tensor.
Tensor slice_cols(Graph& g, const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_cols(Graph& g, const std::vector<Tensor>& parts);

/// Normalizes over the last axis, then applies gamma/beta.
Tensor layernorm(Graph& g, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// Softmax over the last axis (row-max shifted).
Tensor softmax(Graph& g, const Tensor& x);

/// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
inline constexpr double kGeluCubic = 0.044715;
Tensor gelu(Graph& g, const Tensor& x);
Tensor sigmoid(Graph& g, const Tensor& x);
Tensor tanh(Graph& g, const Tensor& x);
Tensor clamp(Graph& g, const Tensor& x, double lo, double hi);

/// Mean binary cross-entropy from logits against targets in [0, 1].
Tensor bce_with_logits(Graph& g, const Tensor& logits, const Tensor& target);

/// Trilinear interpolation of vol[D,H,W] at coords[n,3] given as (z, y, x).
///
/// Coordinates outside [0, extent-1] are clamped per axis; the coordinate
/// gradient along a clamped axis is zero.
Tensor trilinear_sample(Graph& g, const Tensor& vol, const Tensor& coords);

/// Non-overlapping patch extraction from block[D,H,W]. H and W are padded by
/// edge replication to multiples of `patch`. Result is
/// [(Hp/patch)*(Wp/patch), D*patch*patch], tokens in row-major grid order,
/// features ordered (d, r, c).
Tensor extract_patches(Graph& g, const Tensor& block, std::size_t patch);

/// Same-size 2-D convolution of x[C,H,W] with w[O,C,k,k] (k odd) and
/// bias[O], edge-replicated borders.
Tensor conv2d_same(Graph& g, const Tensor& x, const Tensor& w, const Tensor& bias);
/// Nearest-neighbour upsampling of x[C,H,W] by an integer factor.
Tensor upsample_nearest(Graph& g, const Tensor& x, std::size_t factor);
/// Top-left crop of x[C,H,W] to [C,h,w].
Tensor crop(Graph& g, const Tensor& x, std::size_t h, std::size_t w);

}  // namespace nt::ops
