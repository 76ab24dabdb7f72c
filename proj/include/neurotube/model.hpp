#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "neurotube/archive.hpp"
#include "neurotube/config.hpp"
#include "neurotube/pipeline.hpp"
#include "neurotube/volume.hpp"

namespace nt {

/// Name -> shape of every parameter a config requires.
std::map<std::string, Shape> param_layout(const ModelConfig& cfg);

/// Segmentation network: token embedding (patch or tubular), pre-norm
/// transformer encoder, and an upsampling convolutional head that predicts the
/// centre slice of the input block.
class SegModel {
  public:
    /// Takes ownership of `params`; names and shapes must match param_layout.
    SegModel(ModelConfig cfg, TensorMap params);
    static SegModel random(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    const TensorMap& params() const { return params_; }
    TensorMap& params() { return params_; }
    const Tensor& param(const std::string& name) const;

    /// Parameters updated by train(); with freeze_blocks the encoder blocks
    /// are excluded.
    bool trainable(const std::string& name) const;
    std::vector<std::string> trainable_names() const;

    SegModel clone() const;

  private:
    ModelConfig cfg_;
    TensorMap params_;
};

/// Foreground logits [H, W] of the centre slice of block[D, H, W].
Tensor forward(Graph& g, const SegModel& model, const Tensor& block);

/// Token embeddings [tokens, E] before positional encoding.
Tensor embed_tokens(Graph& g, const SegModel& model, const Tensor& block);

struct LossTerms {
    Tensor total;  // scalar, differentiable
    double bce = 0.0;
    double dice = 0.0;  // soft Dice coefficient, not the loss term
};

/// 0.5 * BCE(logits, y) + 0.5 * (1 - softDice(sigmoid(logits), y)), with y the
/// label binarized at 0.5 and logits clamped to [-30, 30].
LossTerms seg_loss_terms(Graph& g, const Tensor& logits, const Tensor& soft_label);
inline Tensor seg_loss(Graph& g, const Tensor& logits, const Tensor& soft_label) {
    return seg_loss_terms(g, logits, soft_label).total;
}

struct TrainConfig {
    std::size_t steps = 500;
    std::size_t batch = 1;
    double lr = 0.05;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    bool flip_y = false;
    bool flip_x = false;
};

/// Momentum SGD over `data` visited in seeded shuffled epochs. Returns the
/// mean batch loss of every step.
std::vector<double> train(SegModel& model, const std::vector<Block>& data, const TrainConfig& tc);

void write_loss_csv(std::ostream& out, const std::vector<double>& losses);

/// Probability volume from a stride-1 depth sweep. Windows reaching past the
/// first or last slice repeat the edge slice. In-plane the volume is covered
/// by model-sized tiles whose overlaps are averaged.
Volume segment_volume(const SegModel& model, const Volume& vol, std::size_t threads = 1);

/// `path` receives the parameter archive; the config is written next to it
/// with extension ".cfg".
void save_model(const std::filesystem::path& path, const SegModel& model);
SegModel load_model(const std::filesystem::path& path);

}  // namespace nt
