#include "commands.hpp"

#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "neurotube/archive.hpp"
#include "neurotube/metrics.hpp"
#include "neurotube/model.hpp"
#include "neurotube/report.hpp"
#include "neurotube/tracer.hpp"
#include "neurotube/volume.hpp"

namespace ntcli {
namespace {

constexpr const char* kVersion = "0.1.0";

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + p.string());
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Re-reads an output with the parser that owns its format.
void validate_output(const fs::path& p) {
    if (!fs::exists(p)) throw std::runtime_error("declared output was not written: " + p.string());
    const auto ext = p.extension().string();
    if (ext == ".vjson") {
        nt::load_volume(p);
    } else if (ext == ".swc") {
        nt::load_swc(p.string());
    } else if (ext == ".dtna") {
        nt::load_archive(p);
    } else if (ext == ".csv") {
        nt::load_csv(p.string());
    } else if (ext == ".cfg" || ext == ".txt") {
        nt::parse_key_values(read_text(p));
    } else if (ext == ".svg") {
        if (read_text(p).rfind("<svg", 0) != 0) throw std::runtime_error("malformed svg: " + p.string());
    }
}

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

}  // namespace

Run::Run(std::string subcommand, const CommonOptions& common)
    : subcommand_(std::move(subcommand)), common_(common), out_dir_(common.out_dir),
      start_(std::chrono::steady_clock::now()) {
    if (common_.threads == 0) throw nt::ArgumentError("--threads must be at least 1");
    if (!common_.config.empty()) {
        if (!fs::exists(common_.config)) throw std::runtime_error("missing input file: " + common_.config);
        settings_ = nt::parse_key_values(read_text(common_.config));
        inputs_.emplace_back("config", common_.config);
    }
    for (const auto& o : common_.overrides) {
        const auto kv = nt::parse_key_values(o);
        if (kv.empty()) throw nt::ArgumentError("--set expects key=value, got '" + o + "'");
        for (const auto& [k, v] : kv) settings_[k] = v;
    }
    experiment_ = nt::ExperimentConfig::from_key_values(settings_);
    experiment_.threads = common_.threads;
    fs::create_directories(out_dir_);
}

fs::path Run::input(const std::string& role, const std::string& path) {
    if (path.empty() || !fs::exists(path)) throw std::runtime_error("missing input file: " + path);
    inputs_.emplace_back(role, path);
    return path;
}

fs::path Run::output(const std::string& role, const std::string& filename) {
    const fs::path p = out_dir_ / filename;
    outputs_.emplace_back(role, p);
    return p;
}

void Run::finish() {
    // The resolved configuration is echoed next to the outputs.
    const fs::path cfg_path = output("config", "config.txt");
    write_text(cfg_path, nt::format_key_values(experiment_.to_key_values()));
    for (const auto& [role, p] : outputs_) validate_output(p);

    std::ostringstream rec;
    rec << "[run]\n";
    rec << "subcommand=" << subcommand_ << "\n";
    rec << "tool_version=" << kVersion << "\n";
    rec << "seed=" << (common_.seed ? std::to_string(*common_.seed) : std::string("default")) << "\n";
    rec << "threads=" << common_.threads << "\n";
    for (const auto& [k, v] : experiment_.to_key_values()) rec << "config." << k << "=" << v << "\n";
    for (const auto& [role, p] : inputs_) rec << "input." << role << "=" << p.string() << "\n";
    for (const auto& [role, p] : outputs_) rec << "output." << role << "=" << p.string() << "\n";
    for (const auto& [k, v] : extra_) rec << k << "=" << v << "\n";
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    rec << "wall_clock_started=" << utc_timestamp() << "\n";
    rec << "wall_clock_seconds=" << fmt(secs) << "\n\n";
    std::ofstream out(out_dir_ / "manifest.txt", std::ios::binary | std::ios::app);
    if (!out) throw std::runtime_error("cannot append to manifest in " + out_dir_.string());
    out << rec.str();
}

int cmd_fixture(const CommonOptions& c, const FixtureArgs& a) {
    Run run("fixture", c);
    const auto& m = run.experiment().model;
    const std::uint64_t seed = run.seed().value_or(run.experiment().checkpoint_seed);
    const auto path = run.output("checkpoint", "checkpoint.dtna");
    nt::save_archive(path, nt::make_fixture_checkpoint(m.embed_dim, a.channels, m.layers, m.heads, m.tokens(), seed));
    run.finish();
    std::cout << path.string() << "\n";
    return 0;
}

int cmd_transfer(const CommonOptions& c, const TransferArgs& a) {
    Run run("transfer", c);
    nt::ModelConfig mc = run.experiment().model;
    mc.strategy = nt::parse_strategy(a.strategy);
    if (run.seed()) mc.seed = *run.seed();
    const auto ck = nt::Checkpoint2D::from_tensors(nt::load_archive(run.input("checkpoint", a.checkpoint)));
    const auto path = run.output("model", "model.dtna");
    run.output("model_config", "model.cfg");
    nt::save_model(path, nt::SegModel(mc, nt::seed_model(ck, mc)));
    // Reload and check the seeded embedding is present.
    const nt::SegModel back = nt::load_model(path);
    if (mc.strategy == nt::Strategy::tubular) {
        for (const char* ax : {"z", "y", "x"}) back.param(std::string("tube.") + ax + ".kernel");
    } else {
        back.param("embed.kernel");
    }
    run.note("strategy", a.strategy);
    run.finish();
    std::cout << path.string() << "\n";
    return 0;
}

int cmd_phantom(const CommonOptions& c) {
    Run run("phantom", c);
    const std::uint64_t seed = run.seed().value_or(run.experiment().seed);
    const nt::Phantom ph = nt::gen_phantom(seed, run.experiment().phantom);
    const auto img = run.output("image", "image.vjson");
    const auto lab = run.output("label", "label.vjson");
    const auto swc = run.output("swc", "tree.swc");
    nt::save_volume(img, ph.image);
    nt::save_volume(lab, ph.label);
    nt::save_swc(swc.string(), ph.swc);
    run.finish();
    std::cout << img.string() << "\n" << lab.string() << "\n" << swc.string() << "\n";
    return 0;
}

int cmd_train(const CommonOptions& c, const TrainArgs& a) {
    Run run("train", c);
    if (a.images.size() != a.labels.size() || a.images.empty()) {
        throw nt::ArgumentError("train: --image and --label must be given the same number of times (at least once)");
    }
    nt::SegModel model = nt::load_model(run.input("model", a.model));
    const auto& mc = model.config();
    const nt::BlockGeometry geo{mc.depth, mc.height, mc.width, run.experiment().blocks.stride};
    std::vector<nt::Block> blocks;
    for (std::size_t i = 0; i < a.images.size(); ++i) {
        const nt::Volume img = nt::load_volume(run.input("image" + std::to_string(i), a.images[i]));
        const nt::Volume lab = nt::load_volume(run.input("label" + std::to_string(i), a.labels[i]));
        auto b = nt::partition_blocks(img, lab, run.experiment().ratio_threshold, geo, mc.dtype);
        std::move(b.begin(), b.end(), std::back_inserter(blocks));
    }
    if (blocks.empty()) throw nt::ArgumentError("train: no block passes the foreground threshold");
    nt::TrainConfig tc = run.experiment().train;
    if (run.seed()) tc.seed = *run.seed();
    const auto losses = nt::train(model, blocks, tc);
    const auto model_path = run.output("model", "model.dtna");
    run.output("model_config", "model.cfg");
    nt::save_model(model_path, model);
    const auto loss_path = run.output("loss", "loss.csv");
    std::ostringstream loss;
    nt::write_loss_csv(loss, losses);
    write_text(loss_path, loss.str());
    run.note("blocks", std::to_string(blocks.size()));
    run.finish();
    std::cout << model_path.string() << "\n" << loss_path.string() << "\n";
    return 0;
}

int cmd_segment(const CommonOptions& c, const SegmentArgs& a) {
    Run run("segment", c);
    const nt::SegModel model = nt::load_model(run.input("model", a.model));
    const nt::Volume img = nt::load_volume(run.input("image", a.image));
    const auto out = run.output("probability", "prob.vjson");
    nt::save_volume(out, nt::segment_volume(model, img, run.threads()));
    run.finish();
    std::cout << out.string() << "\n";
    return 0;
}

int cmd_trace(const CommonOptions& c, const TraceArgs& a) {
    Run run("trace", c);
    const nt::Volume prob = nt::load_volume(run.input("probability", a.prob));
    nt::TraceOptions opt;
    opt.binarize = a.binarize;
    opt.prune_len = a.prune_len;
    const auto out = run.output("swc", "trace.swc");
    nt::save_swc(out.string(), nt::trace(prob, opt));
    run.note("binarize", fmt(a.binarize));
    run.note("prune_len", std::to_string(a.prune_len));
    run.finish();
    std::cout << out.string() << "\n";
    return 0;
}

int cmd_metrics(const CommonOptions& c, const MetricsArgs& a) {
    Run run("metrics", c);
    const nt::Volume pred = nt::load_volume(run.input("prediction", a.pred));
    const nt::Volume lab = nt::load_volume(run.input("label", a.label));
    const auto out = run.output("scores", "metrics.csv");
    std::ostringstream csv;
    nt::write_score_header(csv);
    nt::write_score_row(csv, nt::score_volume(a.id, pred, lab, a.threshold));
    write_text(out, csv.str());
    if (!a.pred_swc.empty() || !a.true_swc.empty()) {
        const auto p = nt::load_swc(run.input("prediction_swc", a.pred_swc).string());
        const auto t = nt::load_swc(run.input("truth_swc", a.true_swc).string());
        const nt::NeuronDistance d = nt::neuron_distance(p, t);
        const auto swc_out = run.output("swc_scores", "swc_metrics.csv");
        write_text(swc_out, "volume_id,esa,dsa,pds,threshold\n" + a.id + "," + fmt(d.esa) + "," + fmt(d.dsa) + "," +
                                fmt(d.pds) + "," + fmt(d.threshold) + "\n");
    }
    run.finish();
    std::cout << read_text(out);
    return 0;
}

namespace {

// "name=path" or a bare path whose stem becomes the name.
std::pair<std::string, std::string> named_path(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq != std::string::npos) return {spec.substr(0, eq), spec.substr(eq + 1)};
    return {fs::path(spec).stem().string(), spec};
}

}  // namespace

int cmd_report(const CommonOptions& c, const ReportArgs& a) {
    Run run("report", c);
    std::vector<nt::Series> series;
    std::vector<std::pair<std::string, double>> dice_bars, hd_bars;
    std::vector<std::string> names;
    std::vector<double> final_loss;

    std::vector<std::string> losses = a.losses, scores = a.scores;
    if (!a.from.empty()) {
        const fs::path dir = a.from;
        const auto summary = nt::load_csv(run.input("summary", (dir / "summary.csv").string()).string());
        for (const auto& row : summary.rows) {
            const std::string s = row[summary.column("strategy")];
            losses.push_back(s + "=" + (dir / ("loss_" + s + ".csv")).string());
            scores.push_back(s + "=" + (dir / ("scores_" + s + ".csv")).string());
        }
    }
    if (losses.empty() && scores.empty()) throw nt::ArgumentError("report: nothing to report (use --from, --loss or --scores)");
    for (const auto& spec : losses) {
        const auto [name, path] = named_path(spec);
        const auto t = nt::load_csv(run.input("loss_" + name, path).string());
        series.push_back({name, t.numbers("loss")});
    }
    std::ostringstream table;
    table << "name,volumes,mean_dice,mean_hd95\n";
    for (const auto& spec : scores) {
        const auto [name, path] = named_path(spec);
        const auto t = nt::load_csv(run.input("scores_" + name, path).string());
        const auto d = t.numbers("dice"), h = t.numbers("hd95");
        double ds = 0.0, hs = 0.0;
        std::size_t hn = 0;
        for (double v : d) ds += v;
        for (double v : h)
            if (std::isfinite(v)) hs += v, ++hn;
        const double md = d.empty() ? std::nan("") : ds / double(d.size());
        const double mh = hn ? hs / double(hn) : std::nan("");
        dice_bars.emplace_back(name, md);
        hd_bars.emplace_back(name, mh);
        table << name << ',' << d.size() << ',' << fmt(md) << ',' << fmt(mh) << '\n';
    }
    if (!series.empty()) {
        write_text(run.output("loss_plot", "loss_curve.svg"), nt::render_loss_svg(series));
        std::ostringstream lt;
        lt << "name,steps,first_loss,final_loss\n";
        for (const auto& s : series) {
            lt << s.name << ',' << s.values.size() << ',' << fmt(s.values.empty() ? std::nan("") : s.values.front())
               << ',' << fmt(s.values.empty() ? std::nan("") : s.values.back()) << '\n';
        }
        write_text(run.output("loss_table", "loss_summary.csv"), lt.str());
    }
    if (!dice_bars.empty()) {
        write_text(run.output("dice_plot", "dice_bars.svg"), nt::render_bar_svg(dice_bars, "test Dice"));
        write_text(run.output("hd95_plot", "hd95_bars.svg"), nt::render_bar_svg(hd_bars, "test hd95 (voxels)", 1.0));
        write_text(run.output("metric_table", "metrics_summary.csv"), table.str());
    }
    run.finish();
    std::cout << "report written to " << run.out_dir().string() << "\n";
    return 0;
}

int cmd_compare(const CommonOptions& c) {
    Run run("compare", c);
    nt::ExperimentConfig cfg = run.experiment();
    if (run.seed()) cfg.seed = *run.seed();
    const nt::PhantomSuite suite = nt::make_suite(cfg);
    const auto blocks = nt::suite_blocks(cfg, suite);
    const auto ck = nt::experiment_checkpoint(cfg);
    std::vector<nt::StrategyRun> runs;
    for (nt::Strategy s : {nt::Strategy::random, nt::Strategy::average, nt::Strategy::center, nt::Strategy::tubular}) {
        runs.push_back(nt::run_strategy(cfg, s, suite, blocks, ck));
        std::cout << nt::strategy_name(s) << ": mean Dice " << fmt(runs.back().mean_dice) << ", mean hd95 "
                  << fmt(runs.back().mean_hd95) << "\n";
    }
    for (const auto& p : nt::write_comparison(run.out_dir(), runs)) run.output(p.stem().string(), p.filename().string());
    const nt::Reconstruction rec = nt::reconstruct_single_tube(cfg, runs.back().model);
    for (const auto& p : nt::write_reconstruction(run.out_dir(), rec))
        run.output(p.stem().string(), p.filename().string());
    std::cout << "reconstruction ESA " << fmt(rec.predicted.esa) << " (label trace " << fmt(rec.label_only.esa)
              << ")\n";
    run.note("training_blocks", std::to_string(blocks.size()));
    run.finish();
    return 0;
}

}  // namespace ntcli
