#include "neurotube/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "neurotube/rng.hpp"
#include "neurotube/tubular.hpp"
#include "neurotube/weight_transfer.hpp"

namespace nt {

std::map<std::string, Shape> param_layout(const ModelConfig& cfg) {
    cfg.validate();
    const std::size_t E = cfg.embed_dim, M = cfg.mlp_dim();
    std::map<std::string, Shape> s;
    if (cfg.strategy == Strategy::tubular) {
        for (const char* a : {"z", "y", "x"}) s[std::string("tube.") + a + ".kernel"] = {E, kTubeLength};
        s["tube.offset.w"] = {cfg.depth * kTubeLength, 3 * kOffsetChannels};
        s["tube.offset.b"] = {3 * kOffsetChannels};
        s["tube.fuse.g"] = {E};
        s["tube.fuse.b"] = {E};
    } else {
        s["embed.kernel"] = {E, cfg.depth * kTubeLength};
        s["embed.bias"] = {E};
    }
    s["pos.embed"] = {cfg.tokens(), E};
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const auto n = block_tensor_names(l);
        for (std::size_t i = 0; i < 4; ++i) s[n[i]] = {E, E};
        s[n[4]] = {E, M};
        s[n[5]] = {M, E};
        for (std::size_t i = 6; i < n.size(); ++i) s[n[i]] = {E};
    }
    s["final_ln.g"] = {E};
    s["final_ln.b"] = {E};
    for (std::size_t i = 0; i < cfg.head_factors.size(); ++i) {
        const std::string p = "head.conv" + std::to_string(i + 1);
        s[p + ".w"] = {E, E, 3, 3};
        s[p + ".b"] = {E};
    }
    s["head.out.w"] = {1, E, 1, 1};
    s["head.out.b"] = {1};
    return s;
}

SegModel::SegModel(ModelConfig cfg, TensorMap params) : cfg_(std::move(cfg)), params_(std::move(params)) {
    const auto layout = param_layout(cfg_);
    std::vector<std::string> bad;
    for (const auto& [name, shape] : layout) {
        auto it = params_.find(name);
        if (it == params_.end() || it->second.shape() != shape) bad.push_back(name);
    }
    for (const auto& [name, t] : params_)
        if (!layout.contains(name)) bad.push_back(name);
    if (!bad.empty()) {
        std::string list;
        for (const auto& n : bad) list += (list.empty() ? "" : ", ") + n;
        throw IncompatibleCheckpoint("model parameters do not match config: " + list, bad);
    }
    for (auto& [name, t] : params_)
        if (t.dtype() != cfg_.dtype) t = t.to(cfg_.dtype);
}

SegModel SegModel::random(const ModelConfig& cfg) { return SegModel(cfg, random_init(cfg)); }

const Tensor& SegModel::param(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ArgumentError("model: no parameter '" + name + "'");
    return it->second;
}

bool SegModel::trainable(const std::string& name) const {
    if (!params_.contains(name)) return false;
    return !(cfg_.freeze_blocks && name.starts_with("block"));
}

std::vector<std::string> SegModel::trainable_names() const {
    std::vector<std::string> out;
    for (const auto& [name, t] : params_)
        if (trainable(name)) out.push_back(name);
    return out;
}

SegModel SegModel::clone() const {
    TensorMap copy;
    for (const auto& [name, t] : params_) copy[name] = t.clone();
    return SegModel(cfg_, std::move(copy));
}

Tensor embed_tokens(Graph& g, const SegModel& model, const Tensor& block) {
    const ModelConfig& cfg = model.config();
    if (cfg.strategy != Strategy::tubular) {
        const Tensor patches = ops::extract_patches(g, block, ModelConfig::kPatch);
        return ops::add_bias(g, ops::matmul(g, patches, ops::transpose(g, model.param("embed.kernel"))),
                             model.param("embed.bias"));
    }
    const Tensor field = predict_offsets(g, block, model.param("tube.offset.w"), model.param("tube.offset.b"));
    const auto anchors = anchor_layout(cfg.depth, cfg.height, cfg.width);
    std::vector<Tensor> views;
    for (Axis a : {Axis::z, Axis::y, Axis::x}) {
        const TubeCoords tc = tube_coords(g, view_offsets(g, field, a), anchors, a);
        views.push_back(embed_view(g, block, model.param("tube." + axis_name(a) + ".kernel"), a, tc));
    }
    return fuse_views(g, views[0], views[1], views[2], model.param("tube.fuse.g"), model.param("tube.fuse.b"));
}

namespace {

Tensor attention(Graph& g, const Tensor& x, const SegModel& m, const std::string& p, std::size_t heads) {
    const std::size_t E = x.dim(1), dh = E / heads;
    const Tensor q = ops::matmul(g, x, m.param(p + "attn.q"));
    const Tensor k = ops::matmul(g, x, m.param(p + "attn.k"));
    const Tensor v = ops::matmul(g, x, m.param(p + "attn.v"));
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> outs;
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor qh = ops::slice_cols(g, q, h * dh, dh);
        const Tensor kh = ops::slice_cols(g, k, h * dh, dh);
        const Tensor vh = ops::slice_cols(g, v, h * dh, dh);
        const Tensor w = ops::softmax(g, ops::scale(g, ops::matmul(g, qh, ops::transpose(g, kh)), inv));
        outs.push_back(ops::matmul(g, w, vh));
    }
    const Tensor cat = heads == 1 ? outs[0] : ops::concat_cols(g, outs);
    return ops::matmul(g, cat, m.param(p + "attn.o"));
}

Tensor encoder_block(Graph& g, const Tensor& x, const SegModel& m, std::size_t layer) {
    const std::string p = "block" + std::to_string(layer) + ".";
    const Tensor h1 = ops::layernorm(g, x, m.param(p + "ln1.g"), m.param(p + "ln1.b"));
    const Tensor x1 = ops::add(g, x, attention(g, h1, m, p, m.config().heads));
    const Tensor h2 = ops::layernorm(g, x1, m.param(p + "ln2.g"), m.param(p + "ln2.b"));
    const Tensor mlp =
        ops::matmul(g, ops::gelu(g, ops::matmul(g, h2, m.param(p + "mlp.fc1"))), m.param(p + "mlp.fc2"));
    return ops::add(g, x1, mlp);
}

}  // namespace

Tensor forward(Graph& g, const SegModel& model, const Tensor& block_in) {
    const ModelConfig& cfg = model.config();
    const Shape expect{cfg.depth, cfg.height, cfg.width};
    if (block_in.shape() != expect) {
        throw DimensionError("forward: block " + shape_str(block_in.shape()) + " does not match model geometry " +
                             shape_str(expect));
    }
    const Tensor block = block_in.dtype() == cfg.dtype ? block_in : block_in.to(cfg.dtype);
    Tensor x = ops::add(g, embed_tokens(g, model, block), model.param("pos.embed"));
    for (std::size_t l = 0; l < cfg.layers; ++l) x = encoder_block(g, x, model, l);
    x = ops::layernorm(g, x, model.param("final_ln.g"), model.param("final_ln.b"));

    std::size_t h = cfg.grid_h(), w = cfg.grid_w();
    Tensor fmap = ops::reshape(g, ops::transpose(g, x), {cfg.embed_dim, h, w});
    for (std::size_t s = 0; s < cfg.head_factors.size(); ++s) {
        const std::string p = "head.conv" + std::to_string(s + 1);
        fmap = ops::upsample_nearest(g, fmap, cfg.head_factors[s]);
        fmap = ops::gelu(g, ops::conv2d_same(g, fmap, model.param(p + ".w"), model.param(p + ".b")));
    }
    fmap = ops::conv2d_same(g, fmap, model.param("head.out.w"), model.param("head.out.b"));
    fmap = ops::crop(g, fmap, cfg.height, cfg.width);
    return ops::reshape(g, fmap, {cfg.height, cfg.width});
}

LossTerms seg_loss_terms(Graph& g, const Tensor& logits, const Tensor& soft_label) {
    if (logits.shape() != soft_label.shape()) {
        throw DimensionError("loss: logits " + shape_str(logits.shape()) + " vs label " +
                             shape_str(soft_label.shape()));
    }
    std::vector<double> y(soft_label.numel());
    double sum_y = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double v = soft_label.data()[i];
        if (!(v >= 0.0 && v <= 1.0)) throw ContractError("loss: label value outside [0, 1]");
        y[i] = is_foreground(v) ? 1.0 : 0.0;
        sum_y += y[i];
    }
    const Tensor target(soft_label.shape(), std::move(y), logits.dtype());
    const Tensor z = ops::clamp(g, logits, -30.0, 30.0);
    const Tensor bce = ops::bce_with_logits(g, z, target);
    const Tensor p = ops::sigmoid(g, z);
    const Tensor inter = ops::sum(g, ops::mul(g, p, target));
    const Tensor num = ops::add_scalar(g, ops::scale(g, inter, 2.0), 1.0);
    const Tensor den = ops::add_scalar(g, ops::sum(g, p), sum_y + 1.0);
    const Tensor dice = ops::div(g, num, den);
    const Tensor dice_loss = ops::add_scalar(g, ops::scale(g, dice, -1.0), 1.0);
    LossTerms out;
    out.total = ops::add(g, ops::scale(g, bce, 0.5), ops::scale(g, dice_loss, 0.5));
    out.bce = bce.item();
    out.dice = dice.item();
    return out;
}

namespace {

// Mirrors the last axis (x) or the second-to-last axis (y) of a tensor.
Tensor flip(const Tensor& t, bool along_y) {
    const std::size_t r = t.rank();
    const std::size_t W = t.dim(r - 1), H = t.dim(r - 2);
    const std::size_t planes = t.numel() / (H * W);
    std::vector<double> out(t.numel());
    const auto in = t.data();
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const std::size_t sy = along_y ? H - 1 - y : y, sx = along_y ? x : W - 1 - x;
                out[(p * H + y) * W + x] = in[(p * H + sy) * W + sx];
            }
    return Tensor(t.shape(), std::move(out), t.dtype());
}

}  // namespace

std::vector<double> train(SegModel& model, const std::vector<Block>& data, const TrainConfig& tc) {
    if (data.empty()) throw ArgumentError("train: empty dataset");
    if (tc.batch == 0) throw ArgumentError("train: batch must be >= 1");
    Rng rng(tc.seed);
    const auto names = model.trainable_names();
    std::vector<Tensor> params;
    std::vector<std::vector<double>> velocity;
    for (const auto& n : names) {
        Tensor& t = model.params().at(n);
        t.set_requires_grad(true);
        params.push_back(t);
        velocity.emplace_back(t.numel(), 0.0);
    }
    std::vector<std::size_t> order(data.size());
    std::size_t cursor = order.size();
    auto next_index = [&]() {
        if (cursor == order.size()) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
            cursor = 0;
        }
        return order[cursor++];
    };

    std::vector<double> losses;
    losses.reserve(tc.steps);
    const double inv_batch = 1.0 / static_cast<double>(tc.batch);
    for (std::size_t step = 0; step < tc.steps; ++step) {
        double step_loss = 0.0;
        for (std::size_t b = 0; b < tc.batch; ++b) {
            const Block& blk = data[next_index()];
            Tensor input = blk.data, label = blk.soft_label;
            if (tc.flip_y && rng.below(2) == 1) {
                input = flip(input, true);
                label = flip(label, true);
            }
            if (tc.flip_x && rng.below(2) == 1) {
                input = flip(input, false);
                label = flip(label, false);
            }
            Graph g;
            const Tensor logits = forward(g, model, input);
            const Tensor loss = ops::scale(g, seg_loss(g, logits, label), inv_batch);
            step_loss += loss.item();
            backward(g, loss);
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto w = params[i].mutable_data();
            const auto grad = params[i].grad();
            auto& v = velocity[i];
            for (std::size_t j = 0; j < w.size(); ++j) {
                v[j] = tc.momentum * v[j] + grad[j];
                w[j] -= tc.lr * v[j];
            }
            params[i].round_to_dtype();
            params[i].zero_grad();
        }
        losses.push_back(step_loss);
    }
    for (auto& t : params) t.set_requires_grad(false);
    return losses;
}

void write_loss_csv(std::ostream& out, const std::vector<double>& losses) {
    out << "step,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < losses.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", losses[i]);
        out << i << ',' << buf << '\n';
    }
}

namespace {

// Tile origins covering [0, extent) with tiles of `tile`, the last one
// flush with the end.
std::vector<std::size_t> tile_origins(std::size_t extent, std::size_t tile) {
    std::vector<std::size_t> o;
    const std::size_t stride = std::max<std::size_t>(1, tile / 2);
    for (std::size_t s = 0; s + tile < extent; s += stride) o.push_back(s);
    o.push_back(extent - tile);
    return o;
}

}  // namespace

Volume segment_volume(const SegModel& model, const Volume& vol, std::size_t threads) {
    const ModelConfig& cfg = model.config();
    if (vol.depth() < cfg.depth) {
        throw ArgumentError("segment_volume: volume depth " + std::to_string(vol.depth()) + " < window depth " +
                            std::to_string(cfg.depth));
    }
    if (vol.height() < cfg.height || vol.width() < cfg.width) {
        throw DimensionError("segment_volume: volume plane smaller than model block");
    }
    const std::size_t D = vol.depth(), H = vol.height(), W = vol.width(), half = cfg.depth / 2;
    const auto ys = tile_origins(H, cfg.height), xs = tile_origins(W, cfg.width);
    Volume out(D, H, W);

    auto do_slice = [&](std::size_t z) {
        std::vector<double> acc(H * W, 0.0), cnt(H * W, 0.0);
        for (std::size_t y0 : ys)
            for (std::size_t x0 : xs) {
                std::vector<double> win(cfg.depth * cfg.height * cfg.width);
                for (std::size_t d = 0; d < cfg.depth; ++d) {
                    const long zz = std::clamp(static_cast<long>(z) + static_cast<long>(d) - static_cast<long>(half),
                                               0L, static_cast<long>(D) - 1);
                    for (std::size_t y = 0; y < cfg.height; ++y)
                        for (std::size_t x = 0; x < cfg.width; ++x)
                            win[(d * cfg.height + y) * cfg.width + x] =
                                vol.at(static_cast<std::size_t>(zz), y0 + y, x0 + x);
                }
                Graph g = Graph::inference();
                const Tensor logits =
                    forward(g, model, Tensor({cfg.depth, cfg.height, cfg.width}, std::move(win), cfg.dtype));
                const Tensor prob = ops::sigmoid(g, logits);
                for (std::size_t y = 0; y < cfg.height; ++y)
                    for (std::size_t x = 0; x < cfg.width; ++x) {
                        acc[(y0 + y) * W + x0 + x] += prob.data()[y * cfg.width + x];
                        cnt[(y0 + y) * W + x0 + x] += 1.0;
                    }
            }
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                out.at(z, y, x) = static_cast<float>(acc[y * W + x] / cnt[y * W + x]);
    };

    const std::size_t workers = std::clamp<std::size_t>(threads, 1, D);
    if (workers == 1) {
        for (std::size_t z = 0; z < D; ++z) do_slice(z);
        return out;
    }
    // Each worker owns a fixed residue class of slices, so results do not
    // depend on scheduling.
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w]() {
            for (std::size_t z = w; z < D; z += workers) do_slice(z);
        });
    for (auto& t : pool) t.join();
    return out;
}

void save_model(const std::filesystem::path& path, const SegModel& model) {
    save_archive(path, model.params());
    auto cfg_path = path;
    cfg_path.replace_extension(".cfg");
    std::ofstream out(cfg_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + cfg_path.string());
    out << format_key_values(model.config().to_key_values());
}

SegModel load_model(const std::filesystem::path& path) {
    auto cfg_path = path;
    cfg_path.replace_extension(".cfg");
    std::ifstream in(cfg_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + cfg_path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return SegModel(ModelConfig::from_key_values(parse_key_values(ss.str())), load_archive(path));
}

}  // namespace nt
