#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"

namespace {

void add_common(CLI::App* cmd, ntcli::CommonOptions& c) {
    cmd->add_option("--seed", c.seed, "Seed for the subcommand's random stream");
    cmd->add_option("--config", c.config, "key=value settings file");
    cmd->add_option("--set", c.overrides, "Override one setting (key=value); repeatable");
    cmd->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
    cmd->add_option("--threads", c.threads, "Worker threads for segmentation")->capture_default_str()
        ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neuron segmentation with 2-D to 3-D transferred ViT weights"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "neurotube 0.1.0");

    ntcli::CommonOptions common;
    const std::vector<std::string> strategies{"random", "average", "center", "tubular"};

    ntcli::FixtureArgs fixture;
    auto* c_fixture = app.add_subcommand("fixture", "Write a synthetic 2-D checkpoint archive");
    add_common(c_fixture, common);
    c_fixture->add_option("--channels", fixture.channels, "Input channels of the patch kernel")->capture_default_str();

    ntcli::TransferArgs transfer;
    auto* c_transfer = app.add_subcommand("transfer", "Seed a 3-D model from a 2-D checkpoint");
    add_common(c_transfer, common);
    c_transfer->add_option("--checkpoint", transfer.checkpoint, "2-D checkpoint archive (.dtna)")->required();
    c_transfer->add_option("--strategy", transfer.strategy, "Embedding transfer strategy")
        ->required()
        ->check(CLI::IsMember(strategies));

    auto* c_phantom = app.add_subcommand("phantom", "Generate a synthetic neuron volume, label and SWC");
    add_common(c_phantom, common);

    ntcli::TrainArgs train;
    auto* c_train = app.add_subcommand("train", "Fine-tune a model on image/label volume pairs");
    add_common(c_train, common);
    c_train->add_option("--model", train.model, "Initial model archive")->required();
    c_train->add_option("--image", train.images, "Image volume (.vjson); repeatable")->required();
    c_train->add_option("--label", train.labels, "Label volume paired with each --image")->required();

    ntcli::SegmentArgs segment;
    auto* c_segment = app.add_subcommand("segment", "Predict a probability volume");
    add_common(c_segment, common);
    c_segment->add_option("--model", segment.model, "Model archive")->required();
    c_segment->add_option("--image", segment.image, "Image volume (.vjson)")->required();

    ntcli::TraceArgs trace;
    auto* c_trace = app.add_subcommand("trace", "Skeleton-trace a probability volume into SWC");
    add_common(c_trace, common);
    c_trace->add_option("--prob", trace.prob, "Probability volume (.vjson)")->required();
    c_trace->add_option("--binarize", trace.binarize, "Foreground threshold")->capture_default_str();
    c_trace->add_option("--prune-len", trace.prune_len, "Minimum leaf branch length in nodes")
        ->capture_default_str();

    ntcli::MetricsArgs metrics;
    auto* c_metrics = app.add_subcommand("metrics", "Dice/hd95 of a prediction, optionally ESA/DSA/PDS of traces");
    add_common(c_metrics, common);
    c_metrics->add_option("--pred", metrics.pred, "Predicted probability volume")->required();
    c_metrics->add_option("--label", metrics.label, "Ground-truth label volume")->required();
    c_metrics->add_option("--id", metrics.id, "Volume id written to the CSV")->capture_default_str();
    c_metrics->add_option("--threshold", metrics.threshold, "Binarization threshold")->capture_default_str();
    auto* pred_swc = c_metrics->add_option("--pred-swc", metrics.pred_swc, "Traced SWC");
    auto* true_swc = c_metrics->add_option("--true-swc", metrics.true_swc, "Ground-truth SWC");
    pred_swc->needs(true_swc);
    true_swc->needs(pred_swc);

    ntcli::ReportArgs report;
    auto* c_report = app.add_subcommand("report", "Render SVG plots and CSV tables from run outputs");
    add_common(c_report, common);
    c_report->add_option("--from", report.from, "Directory written by 'compare'");
    c_report->add_option("--loss", report.losses, "[name=]loss.csv; repeatable");
    c_report->add_option("--scores", report.scores, "[name=]scores.csv; repeatable");

    auto* c_compare = app.add_subcommand("compare", "Run the four-strategy phantom experiment and reconstruction");
    add_common(c_compare, common);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*c_fixture) return ntcli::cmd_fixture(common, fixture);
        if (*c_transfer) return ntcli::cmd_transfer(common, transfer);
        if (*c_phantom) return ntcli::cmd_phantom(common);
        if (*c_train) return ntcli::cmd_train(common, train);
        if (*c_segment) return ntcli::cmd_segment(common, segment);
        if (*c_trace) return ntcli::cmd_trace(common, trace);
        if (*c_metrics) return ntcli::cmd_metrics(common, metrics);
        if (*c_report) return ntcli::cmd_report(common, report);
        if (*c_compare) return ntcli::cmd_compare(common);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
