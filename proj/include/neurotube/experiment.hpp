#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "neurotube/config.hpp"
#include "neurotube/metrics.hpp"
#include "neurotube/model.hpp"
#include "neurotube/pipeline.hpp"
#include "neurotube/swc.hpp"
#include "neurotube/tracer.hpp"
#include "neurotube/weight_transfer.hpp"

namespace nt {

/// Settings of the desk-scale transfer comparison. Every random quantity is
/// derived from `seed` so a rerun reproduces all outputs.
struct ExperimentConfig {
    std::uint64_t seed = 2024;
    std::size_t train_volumes = 10;
    std::size_t test_volumes = 3;
    PhantomSpec phantom;
    BlockGeometry blocks{5, 48, 48, 48};
    double ratio_threshold = 0.01;
    ModelConfig model;  // strategy is overridden per run
    TrainConfig train;
    std::uint64_t checkpoint_seed = 4;
    double binarize = 0.5;
    std::size_t threads = 1;

    /// Tiny-model defaults used by the acceptance run.
    static ExperimentConfig desk_default();

    KeyValues to_key_values() const;
    /// Keys absent from `kv` keep the values of `base`.
    static ExperimentConfig from_key_values(const KeyValues& kv, const ExperimentConfig& base = desk_default());
};

struct PhantomSuite {
    std::vector<Phantom> train;
    std::vector<Phantom> test;
    std::vector<std::uint64_t> train_seeds;
    std::vector<std::uint64_t> test_seeds;
};

PhantomSuite make_suite(const ExperimentConfig& cfg);
std::vector<Block> suite_blocks(const ExperimentConfig& cfg, const PhantomSuite& suite);

/// The fixture 2-D checkpoint sized for cfg.model.
Checkpoint2D experiment_checkpoint(const ExperimentConfig& cfg);

/// Scores a probability map against a soft label, both binarized at
/// `threshold`. hd95 is NaN when either mask is empty.
SegmentationScore score_volume(const std::string& id, const Volume& prob, const Volume& label, double threshold = 0.5);

struct StrategyRun {
    Strategy strategy = Strategy::random;
    std::vector<double> losses;
    std::vector<SegmentationScore> scores;
    double mean_dice = 0.0;
    double mean_hd95 = 0.0;  // over finite per-volume values; NaN if none
    SegModel model;
};

StrategyRun run_strategy(const ExperimentConfig& cfg, Strategy strategy, const PhantomSuite& suite,
                         const std::vector<Block>& blocks, const Checkpoint2D& checkpoint);

/// Writes loss_<strategy>.csv, scores_<strategy>.csv and summary.csv.
/// Returns the paths written.
std::vector<std::filesystem::path> write_comparison(const std::filesystem::path& dir,
                                                    const std::vector<StrategyRun>& runs);

struct Reconstruction {
    SwcTree truth;
    SwcTree from_prediction;
    SwcTree from_label;
    NeuronDistance predicted;
    NeuronDistance label_only;
};

/// Single straight tube phantom, segmented with `model` and traced; the
/// ground-truth label is traced as a sanity reference.
Reconstruction reconstruct_single_tube(const ExperimentConfig& cfg, const SegModel& model,
                                       const TraceOptions& options = {});

/// Writes reconstruction.csv plus the three SWC files. Returns the paths.
std::vector<std::filesystem::path> write_reconstruction(const std::filesystem::path& dir, const Reconstruction& r);

}  // namespace nt
