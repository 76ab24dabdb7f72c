#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "neurotube/config.hpp"
#include "neurotube/experiment.hpp"

namespace ntcli {

namespace fs = std::filesystem;

/// Flags shared by every subcommand.
struct CommonOptions {
    std::optional<std::uint64_t> seed;
    std::string config;
    std::string out_dir = ".";
    std::size_t threads = 1;
    std::vector<std::string> overrides;  // key=value, applied after --config
};

/// Resolved inputs/outputs and settings of one invocation. finish() checks
/// every declared output and appends the record to <out-dir>/manifest.txt.
class Run {
  public:
    Run(std::string subcommand, const CommonOptions& common);

    const nt::KeyValues& settings() const { return settings_; }
    /// Experiment settings after applying --config and --set.
    const nt::ExperimentConfig& experiment() const { return experiment_; }
    const fs::path& out_dir() const { return out_dir_; }
    std::size_t threads() const { return common_.threads; }
    std::optional<std::uint64_t> seed() const { return common_.seed; }

    /// Fails with a message naming `path` if it does not exist.
    fs::path input(const std::string& role, const std::string& path);
    fs::path output(const std::string& role, const std::string& filename);
    void note(const std::string& key, const std::string& value) { extra_.emplace_back(key, value); }

    void finish();

  private:
    std::string subcommand_;
    CommonOptions common_;
    nt::KeyValues settings_;
    nt::ExperimentConfig experiment_;
    fs::path out_dir_;
    std::vector<std::pair<std::string, fs::path>> inputs_, outputs_;
    std::vector<std::pair<std::string, std::string>> extra_;
    std::chrono::steady_clock::time_point start_;
};

struct FixtureArgs {
    std::size_t channels = 3;
};
struct TransferArgs {
    std::string checkpoint;
    std::string strategy;
};
struct TrainArgs {
    std::string model;
    std::vector<std::string> images;
    std::vector<std::string> labels;
};
struct SegmentArgs {
    std::string model;
    std::string image;
};
struct TraceArgs {
    std::string prob;
    double binarize = 0.5;
    std::size_t prune_len = 5;
};
struct MetricsArgs {
    std::string pred;
    std::string label;
    std::string id = "volume";
    std::string pred_swc;
    std::string true_swc;
    double threshold = 0.5;
};
struct ReportArgs {
    std::string from;
    std::vector<std::string> losses;
    std::vector<std::string> scores;
};

int cmd_fixture(const CommonOptions& c, const FixtureArgs& a);
int cmd_transfer(const CommonOptions& c, const TransferArgs& a);
int cmd_phantom(const CommonOptions& c);
int cmd_train(const CommonOptions& c, const TrainArgs& a);
int cmd_segment(const CommonOptions& c, const SegmentArgs& a);
int cmd_trace(const CommonOptions& c, const TraceArgs& a);
int cmd_metrics(const CommonOptions& c, const MetricsArgs& a);
int cmd_report(const CommonOptions& c, const ReportArgs& a);
int cmd_compare(const CommonOptions& c);

}  // namespace ntcli
