#include "neurotube/weight_transfer.hpp"

#include <cmath>
#include <numbers>

#include "neurotube/rng.hpp"
#include "neurotube/tubular.hpp"

namespace nt {
namespace {

std::string join(const std::vector<std::string>& names) {
    std::string out;
    for (std::size_t i = 0; i < names.size(); ++i) out += (i ? ", " : "") + names[i];
    return out;
}

void require_kernel2d(const char* op, const Tensor& k2d) {
    if (k2d.rank() != 4 || k2d.dim(2) != kKernelSide || k2d.dim(3) != kKernelSide) {
        throw DimensionError(std::string(op) + ": expected [E,C,16,16] kernel, got " + shape_str(k2d.shape()));
    }
}

Tensor normal_tensor(Rng& rng, Shape shape, double stddev, DType dtype) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.normal(0.0, stddev);
    return Tensor(std::move(shape), std::move(v), dtype);
}

}  // namespace

std::string axis_name(Axis a) {
    switch (a) {
        case Axis::z: return "z";
        case Axis::y: return "y";
        case Axis::x: return "x";
    }
    return "?";
}

Axis parse_axis(const std::string& name) {
    if (name == "z") return Axis::z;
    if (name == "y") return Axis::y;
    if (name == "x") return Axis::x;
    throw ArgumentError("unknown axis '" + name + "' (expected z|y|x)");
}

IncompatibleCheckpoint::IncompatibleCheckpoint(const std::string& what, std::vector<std::string> names)
    : ArgumentError(what + ": " + join(names)), names_(std::move(names)) {}

std::vector<std::string> block_tensor_names(std::size_t layer) {
    const std::string p = "block" + std::to_string(layer) + ".";
    return {p + "attn.q", p + "attn.k", p + "attn.v", p + "attn.o", p + "mlp.fc1", p + "mlp.fc2",
            p + "ln1.g",  p + "ln1.b",  p + "ln2.g",  p + "ln2.b"};
}

const Tensor& Checkpoint2D::get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw IncompatibleCheckpoint("checkpoint: missing tensor", {name});
    return it->second;
}

Checkpoint2D Checkpoint2D::from_tensors(TensorMap tensors) {
    Checkpoint2D ck;
    auto header = tensors.find("meta.header");
    if (header == tensors.end() || header->second.numel() != 4) {
        throw IncompatibleCheckpoint("checkpoint: missing or malformed header", {"meta.header"});
    }
    const auto h = header->second.data();
    ck.embed_dim_ = static_cast<std::size_t>(h[0]);
    ck.channels_ = static_cast<std::size_t>(h[1]);
    ck.layers_ = static_cast<std::size_t>(h[2]);
    ck.heads_ = static_cast<std::size_t>(h[3]);
    const std::size_t E = ck.embed_dim_;
    if (E == 0 || ck.channels_ == 0 || ck.heads_ == 0 || E % ck.heads_ != 0) {
        throw IncompatibleCheckpoint("checkpoint: inconsistent header", {"meta.header"});
    }

    std::vector<std::string> bad;
    auto expect = [&](const std::string& name, const Shape& shape) {
        auto it = tensors.find(name);
        if (it == tensors.end() || it->second.shape() != shape) bad.push_back(name);
    };
    expect("patch.kernel", {E, ck.channels_, kKernelSide, kKernelSide});
    if (tensors.contains("patch.bias")) expect("patch.bias", {E});
    auto pos = tensors.find("pos.embed");
    if (pos == tensors.end() || pos->second.rank() != 2 || pos->second.dim(1) != E || pos->second.dim(0) == 0) {
        bad.push_back("pos.embed");
    }
    auto fc1 = tensors.find("block0.mlp.fc1");
    ck.mlp_dim_ = (fc1 != tensors.end() && fc1->second.rank() == 2) ? fc1->second.dim(1) : 4 * E;
    const std::size_t M = ck.mlp_dim_;
    for (std::size_t l = 0; l < ck.layers_; ++l) {
        const auto names = block_tensor_names(l);
        for (std::size_t i = 0; i < 4; ++i) expect(names[i], {E, E});
        expect(names[4], {E, M});
        expect(names[5], {M, E});
        for (std::size_t i = 6; i < names.size(); ++i) expect(names[i], {E});
    }
    expect("final_ln.g", {E});
    expect("final_ln.b", {E});
    if (!bad.empty()) throw IncompatibleCheckpoint("checkpoint: missing or mis-shaped tensors", bad);
    ck.tensors_ = std::move(tensors);
    return ck;
}

TensorMap make_fixture_checkpoint(std::size_t embed_dim, std::size_t channels, std::size_t layers, std::size_t heads,
                                  std::size_t tokens, std::uint64_t seed) {
    if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0 || channels == 0 || tokens == 0) {
        throw ArgumentError("fixture checkpoint: invalid geometry");
    }
    Rng rng(seed);
    const std::size_t E = embed_dim;
    TensorMap t;
    t["meta.header"] = Tensor({4}, {double(E), double(channels), double(layers), double(heads)});

    // Gabor bank: orientation cycles fastest, then wavelength; every fourth
    // filter is an isotropic blob. Unit L2 norm per filter.
    std::vector<double> kernel(E * channels * kTubeLength);
    const double c0 = (kKernelSide - 1) / 2.0;
    for (std::size_t e = 0; e < E; ++e) {
        const double theta = std::numbers::pi * static_cast<double>(e % 4) / 4.0 + rng.uniform(-0.1, 0.1);
        const double lambda = 4.0 + 2.0 * static_cast<double>((e / 4) % 3);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double sigma = 3.0 + rng.uniform(0.0, 1.0);
        const bool blob = e % 4 == 3;
        std::vector<double> f(kTubeLength);
        double norm = 0.0;
        for (std::size_t r = 0; r < kKernelSide; ++r)
            for (std::size_t c = 0; c < kKernelSide; ++c) {
                const double y = r - c0, x = c - c0;
                const double env = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
                const double u = x * std::cos(theta) + y * std::sin(theta);
                const double v = blob ? env - 0.5 * std::exp(-(x * x + y * y) / (8.0 * sigma * sigma))
                                      : env * std::cos(2.0 * std::numbers::pi * u / lambda + phase);
                f[r * kKernelSide + c] = v;
                norm += v * v;
            }
        norm = std::sqrt(norm);
        for (std::size_t ch = 0; ch < channels; ++ch) {
            const double gain = 1.0 + 0.1 * rng.normal();
            for (std::size_t i = 0; i < kTubeLength; ++i) {
                kernel[(e * channels + ch) * kTubeLength + i] = gain * f[i] / norm;
            }
        }
    }
    t["patch.kernel"] = Tensor({E, channels, kKernelSide, kKernelSide}, std::move(kernel));
    t["patch.bias"] = normal_tensor(rng, {E}, 0.01, DType::f64);
    t["pos.embed"] = normal_tensor(rng, {tokens, E}, 0.02, DType::f64);
    const std::size_t M = 4 * E;
    for (std::size_t l = 0; l < layers; ++l) {
        const auto names = block_tensor_names(l);
        const double s = 1.0 / std::sqrt(static_cast<double>(E));
        for (std::size_t i = 0; i < 4; ++i) t[names[i]] = normal_tensor(rng, {E, E}, s, DType::f64);
        t[names[4]] = normal_tensor(rng, {E, M}, s, DType::f64);
        t[names[5]] = normal_tensor(rng, {M, E}, 1.0 / std::sqrt(static_cast<double>(M)), DType::f64);
        for (std::size_t i = 6; i < names.size(); i += 2) {
            std::vector<double> gv(E);
            for (auto& v : gv) v = 1.0 + 0.05 * rng.normal();
            t[names[i]] = Tensor({E}, std::move(gv));
            t[names[i + 1]] = normal_tensor(rng, {E}, 0.02, DType::f64);
        }
    }
    t["final_ln.g"] = Tensor::full({E}, 1.0);
    t["final_ln.b"] = Tensor::zeros({E});
    return t;
}

Tensor inflate_average(const Tensor& k2d, std::size_t depth) {
    require_kernel2d("inflate_average", k2d);
    if (depth < 1) throw ArgumentError("inflate_average: depth must be >= 1");
    const std::size_t E = k2d.dim(0), C = k2d.dim(1);
    std::vector<double> out(E * C * depth * kTubeLength);
    const double inv = 1.0 / static_cast<double>(depth);
    for (std::size_t ec = 0; ec < E * C; ++ec)
        for (std::size_t d = 0; d < depth; ++d)
            for (std::size_t i = 0; i < kTubeLength; ++i)
                out[(ec * depth + d) * kTubeLength + i] = k2d.data()[ec * kTubeLength + i] * inv;
    return Tensor({E, C, depth, kKernelSide, kKernelSide}, std::move(out), k2d.dtype());
}

Tensor inflate_center(const Tensor& k2d, std::size_t depth) {
    require_kernel2d("inflate_center", k2d);
    if (depth < 1 || depth % 2 == 0) {
        throw ArgumentError("inflate_center: depth must be odd and >= 1, got " + std::to_string(depth));
    }
    const std::size_t E = k2d.dim(0), C = k2d.dim(1);
    std::vector<double> out(E * C * depth * kTubeLength, 0.0);
    const std::size_t mid = depth / 2;
    for (std::size_t ec = 0; ec < E * C; ++ec)
        for (std::size_t i = 0; i < kTubeLength; ++i)
            out[(ec * depth + mid) * kTubeLength + i] = k2d.data()[ec * kTubeLength + i];
    return Tensor({E, C, depth, kKernelSide, kKernelSide}, std::move(out), k2d.dtype());
}

Tensor reduce_channels(const Tensor& kernel, ChannelReduction reduction) {
    if (kernel.rank() < 2 || kernel.dim(1) == 0) {
        throw DimensionError("reduce_channels: expected [E,C,...], got " + shape_str(kernel.shape()));
    }
    const std::size_t E = kernel.dim(0), C = kernel.dim(1);
    const std::size_t inner = kernel.numel() / (E * C);
    const double factor = reduction == ChannelReduction::mean ? 1.0 / static_cast<double>(C) : 1.0;
    std::vector<double> out(E * inner, 0.0);
    for (std::size_t e = 0; e < E; ++e)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < inner; ++i) out[e * inner + i] += kernel.data()[(e * C + c) * inner + i];
    for (auto& v : out) v *= factor;
    Shape shape = kernel.shape();
    shape[1] = 1;
    return Tensor(std::move(shape), std::move(out), kernel.dtype());
}

TubularKernel flatten_tubular(const Tensor& k2d, Axis axis, ChannelReduction reduction) {
    require_kernel2d("flatten_tubular", k2d);
    const Tensor reduced = reduce_channels(k2d, reduction);  // [E,1,16,16]
    const std::size_t E = k2d.dim(0);
    std::vector<double> w(E * kTubeLength);
    for (std::size_t e = 0; e < E; ++e)
        for (std::size_t r = 0; r < kKernelSide; ++r)
            for (std::size_t c = 0; c < kKernelSide; ++c)
                w[e * kTubeLength + TubularKernel::tube_index(r, c)] =
                    reduced.data()[(e * kKernelSide + r) * kKernelSide + c];
    return {Tensor({E, kTubeLength}, std::move(w), k2d.dtype()), axis, reduction};
}

Tensor unflatten_tubular(const TubularKernel& kernel) {
    const Tensor& w = kernel.weights;
    if (w.rank() != 2 || w.dim(1) != kTubeLength) {
        throw DimensionError("unflatten_tubular: expected [E,256], got " + shape_str(w.shape()));
    }
    const std::size_t E = w.dim(0);
    std::vector<double> out(E * kTubeLength);
    for (std::size_t e = 0; e < E; ++e)
        for (std::size_t t = 0; t < kTubeLength; ++t)
            out[(e * kKernelSide + t / kKernelSide) * kKernelSide + t % kKernelSide] = w.data()[e * kTubeLength + t];
    return Tensor({E, kKernelSide, kKernelSide}, std::move(out), w.dtype());
}

Tensor conv3d_valid(const Tensor& input, const Tensor& kernel, std::array<std::size_t, 3> stride) {
    if (input.rank() != 4 || kernel.rank() != 5 || kernel.dim(1) != input.dim(0)) {
        throw DimensionError("conv3d_valid: input " + shape_str(input.shape()) + " incompatible with kernel " +
                             shape_str(kernel.shape()));
    }
    const std::size_t C = input.dim(0), D = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::size_t O = kernel.dim(0), kd = kernel.dim(2), kh = kernel.dim(3), kw = kernel.dim(4);
    if (kd > D || kh > H || kw > W) throw DimensionError("conv3d_valid: kernel larger than input");
    for (auto s : stride)
        if (s == 0) throw ArgumentError("conv3d_valid: zero stride");
    const std::size_t Do = (D - kd) / stride[0] + 1, Ho = (H - kh) / stride[1] + 1, Wo = (W - kw) / stride[2] + 1;
    std::vector<double> out(O * Do * Ho * Wo, 0.0);
    const auto in = input.data();
    const auto k = kernel.data();
    for (std::size_t o = 0; o < O; ++o)
        for (std::size_t z = 0; z < Do; ++z)
            for (std::size_t y = 0; y < Ho; ++y)
                for (std::size_t x = 0; x < Wo; ++x) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t a = 0; a < kd; ++a)
                            for (std::size_t b = 0; b < kh; ++b)
                                for (std::size_t e = 0; e < kw; ++e) {
                                    const std::size_t zi = z * stride[0] + a, yi = y * stride[1] + b,
                                                      xi = x * stride[2] + e;
                                    acc += k[(((o * C + c) * kd + a) * kh + b) * kw + e] *
                                           in[((c * D + zi) * H + yi) * W + xi];
                                }
                    out[((o * Do + z) * Ho + y) * Wo + x] = acc;
                }
    return Tensor({O, Do, Ho, Wo}, std::move(out), promote(input.dtype(), kernel.dtype()));
}

Tensor resize_pos_embed(const Tensor& pos, std::size_t count) {
    if (pos.rank() != 2 || pos.dim(0) == 0) throw DimensionError("resize_pos_embed: expected [S,E]");
    if (count == 0) throw ArgumentError("resize_pos_embed: target count must be positive");
    const std::size_t S = pos.dim(0), E = pos.dim(1);
    std::vector<double> out(count * E);
    for (std::size_t i = 0; i < count; ++i) {
        if (S == 1 || count == 1) {
            for (std::size_t e = 0; e < E; ++e) out[i * E + e] = pos.data()[e];
            continue;
        }
        // Endpoints map exactly onto rows 0 and S-1.
        const double src = static_cast<double>(i) * static_cast<double>(S - 1) / static_cast<double>(count - 1);
        auto lo = static_cast<std::size_t>(std::floor(src));
        if (lo >= S - 1) lo = S - 2;
        const double f = src - static_cast<double>(lo);
        for (std::size_t e = 0; e < E; ++e) {
            const double a = pos.data()[lo * E + e], b = pos.data()[(lo + 1) * E + e];
            out[i * E + e] = f == 0.0 ? a : (f == 1.0 ? b : a + f * (b - a));
        }
    }
    return Tensor({count, E}, std::move(out), pos.dtype());
}

TensorMap random_init(const ModelConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const DType dt = cfg.dtype;
    const std::size_t E = cfg.embed_dim, M = cfg.mlp_dim(), D = cfg.depth;
    TensorMap p;
    if (cfg.strategy == Strategy::tubular) {
        for (const char* a : {"z", "y", "x"}) {
            p[std::string("tube.") + a + ".kernel"] = normal_tensor(rng, {E, kTubeLength}, 0.02, dt);
        }
        p["tube.offset.w"] = Tensor::zeros({D * kTubeLength, 3 * kOffsetChannels}, dt);
        p["tube.offset.b"] = Tensor::zeros({3 * kOffsetChannels}, dt);
        p["tube.fuse.g"] = Tensor::full({E}, 1.0, dt);
        p["tube.fuse.b"] = Tensor::zeros({E}, dt);
    } else {
        p["embed.kernel"] = normal_tensor(rng, {E, D * kTubeLength}, 0.02, dt);
        p["embed.bias"] = Tensor::zeros({E}, dt);
    }
    p["pos.embed"] = normal_tensor(rng, {cfg.tokens(), E}, 0.02, dt);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const auto names = block_tensor_names(l);
        for (std::size_t i = 0; i < 4; ++i) p[names[i]] = normal_tensor(rng, {E, E}, 0.02, dt);
        p[names[4]] = normal_tensor(rng, {E, M}, 0.02, dt);
        p[names[5]] = normal_tensor(rng, {M, E}, 0.02, dt);
        for (std::size_t i = 6; i < names.size(); i += 2) {
            p[names[i]] = Tensor::full({E}, 1.0, dt);
            p[names[i + 1]] = Tensor::zeros({E}, dt);
        }
    }
    p["final_ln.g"] = Tensor::full({E}, 1.0, dt);
    p["final_ln.b"] = Tensor::zeros({E}, dt);
    for (std::size_t s = 0; s < cfg.head_factors.size(); ++s) {
        const std::string prefix = "head.conv" + std::to_string(s + 1);
        p[prefix + ".w"] = normal_tensor(rng, {E, E, 3, 3}, std::sqrt(2.0 / (9.0 * double(E))), dt);
        p[prefix + ".b"] = Tensor::zeros({E}, dt);
    }
    p["head.out.w"] = normal_tensor(rng, {1, E, 1, 1}, std::sqrt(1.0 / double(E)), dt);
    p["head.out.b"] = Tensor::zeros({1}, dt);
    return p;
}

TensorMap seed_model(const Checkpoint2D& ck, const ModelConfig& cfg) {
    cfg.validate();
    std::vector<std::string> bad;
    if (ck.embed_dim() != cfg.embed_dim) {
        bad = {"meta.header", "patch.kernel", "pos.embed"};
        for (std::size_t l = 0; l < ck.layers(); ++l) {
            for (auto& n : block_tensor_names(l)) bad.push_back(n);
        }
        bad.push_back("final_ln.g");
        bad.push_back("final_ln.b");
        throw IncompatibleCheckpoint("checkpoint embed_dim " + std::to_string(ck.embed_dim()) +
                                         " != model embed_dim " + std::to_string(cfg.embed_dim),
                                     bad);
    }
    if (cfg.layers > ck.layers()) {
        throw IncompatibleCheckpoint("model needs " + std::to_string(cfg.layers) + " layers, checkpoint has " +
                                         std::to_string(ck.layers()),
                                     {"meta.header"});
    }
    if (cfg.layers > 0 && ck.mlp_dim() != cfg.mlp_dim()) {
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            bad.push_back("block" + std::to_string(l) + ".mlp.fc1");
            bad.push_back("block" + std::to_string(l) + ".mlp.fc2");
        }
        throw IncompatibleCheckpoint("checkpoint MLP width differs from model", bad);
    }

    TensorMap p = random_init(cfg);
    const DType dt = cfg.dtype;
    const Tensor& k2d = ck.patch_kernel();
    switch (cfg.strategy) {
        case Strategy::random:
            return p;
        case Strategy::average:
        case Strategy::center: {
            const Tensor k3 = cfg.strategy == Strategy::average ? inflate_average(k2d, cfg.depth)
                                                                : inflate_center(k2d, cfg.depth);
            const Tensor reduced = reduce_channels(k3, cfg.reduction);
            p["embed.kernel"] = Tensor({cfg.embed_dim, cfg.depth * kTubeLength},
                                       std::vector<double>(reduced.data().begin(), reduced.data().end()), dt);
            if (ck.contains("patch.bias")) p["embed.bias"] = ck.get("patch.bias").to(dt);
            break;
        }
        case Strategy::tubular:
            for (Axis a : {Axis::z, Axis::y, Axis::x}) {
                p["tube." + axis_name(a) + ".kernel"] = flatten_tubular(k2d, a, cfg.reduction).weights.to(dt);
            }
            break;
    }
    p["pos.embed"] = resize_pos_embed(ck.pos_embed(), cfg.tokens()).to(dt);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        for (auto& n : block_tensor_names(l)) p[n] = ck.get(n).to(dt);
    }
    p["final_ln.g"] = ck.get("final_ln.g").to(dt);
    p["final_ln.b"] = ck.get("final_ln.b").to(dt);
    return p;
}

}  // namespace nt
