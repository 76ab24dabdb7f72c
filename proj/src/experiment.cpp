#include "neurotube/experiment.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include "neurotube/rng.hpp"

namespace nt {
namespace {

// Shortest text that parses back to the same double.
std::string fmt(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <class T>
T parse_number(const KeyValues& kv, const std::string& key, T fallback) {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    const std::string& s = it->second;
    T value{};
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || end != s.data() + s.size() || s.empty()) {
        throw ArgumentError("config: '" + key + "' has invalid value '" + s + "'");
    }
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(value)) throw ArgumentError("config: '" + key + "' must be finite");
    }
    return value;
}

bool parse_bool(const KeyValues& kv, const std::string& key, bool fallback) {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    throw ArgumentError("config: '" + key + "' must be true or false");
}

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::desk_default() {
    ExperimentConfig c;
    c.phantom.size = {16, 48, 48};
    c.phantom.branches = 3;
    c.phantom.radius_range = {2.0, 3.5};
    c.model.embed_dim = 8;
    c.model.layers = 2;
    c.model.heads = 2;
    c.model.height = 48;
    c.model.width = 48;
    c.model.seed = 7;
    c.model.dtype = DType::f32;
    c.train.steps = 500;
    c.train.batch = 4;
    c.train.lr = 0.05;
    c.train.seed = 1;
    return c;
}

KeyValues ExperimentConfig::to_key_values() const {
    KeyValues kv = model.to_key_values();
    kv.erase("model.strategy");
    kv["exp.seed"] = std::to_string(seed);
    kv["exp.train_volumes"] = std::to_string(train_volumes);
    kv["exp.test_volumes"] = std::to_string(test_volumes);
    kv["exp.ratio_threshold"] = fmt(ratio_threshold);
    kv["exp.checkpoint_seed"] = std::to_string(checkpoint_seed);
    kv["exp.binarize"] = fmt(binarize);
    kv["phantom.depth"] = std::to_string(phantom.size[0]);
    kv["phantom.height"] = std::to_string(phantom.size[1]);
    kv["phantom.width"] = std::to_string(phantom.size[2]);
    kv["phantom.branches"] = std::to_string(phantom.branches);
    kv["phantom.radius_min"] = fmt(phantom.radius_range[0]);
    kv["phantom.radius_max"] = fmt(phantom.radius_range[1]);
    kv["phantom.noise"] = fmt(phantom.noise);
    kv["phantom.decay"] = fmt(phantom.decay);
    kv["block.stride"] = std::to_string(blocks.stride);
    kv["train.steps"] = std::to_string(train.steps);
    kv["train.batch"] = std::to_string(train.batch);
    kv["train.lr"] = fmt(train.lr);
    kv["train.momentum"] = fmt(train.momentum);
    kv["train.seed"] = std::to_string(train.seed);
    kv["train.flip_y"] = train.flip_y ? "true" : "false";
    kv["train.flip_x"] = train.flip_x ? "true" : "false";
    return kv;
}

ExperimentConfig ExperimentConfig::from_key_values(const KeyValues& kv, const ExperimentConfig& base) {
    ExperimentConfig c = base;
    KeyValues model_kv = base.model.to_key_values();
    for (const auto& [k, v] : kv)
        if (k.rfind("model.", 0) == 0) model_kv[k] = v;
    c.model = ModelConfig::from_key_values(model_kv);
    c.seed = parse_number(kv, "exp.seed", c.seed);
    c.train_volumes = parse_number(kv, "exp.train_volumes", c.train_volumes);
    c.test_volumes = parse_number(kv, "exp.test_volumes", c.test_volumes);
    c.ratio_threshold = parse_number(kv, "exp.ratio_threshold", c.ratio_threshold);
    c.checkpoint_seed = parse_number(kv, "exp.checkpoint_seed", c.checkpoint_seed);
    c.binarize = parse_number(kv, "exp.binarize", c.binarize);
    c.phantom.size[0] = parse_number(kv, "phantom.depth", c.phantom.size[0]);
    c.phantom.size[1] = parse_number(kv, "phantom.height", c.phantom.size[1]);
    c.phantom.size[2] = parse_number(kv, "phantom.width", c.phantom.size[2]);
    c.phantom.branches = parse_number(kv, "phantom.branches", c.phantom.branches);
    c.phantom.radius_range[0] = parse_number(kv, "phantom.radius_min", c.phantom.radius_range[0]);
    c.phantom.radius_range[1] = parse_number(kv, "phantom.radius_max", c.phantom.radius_range[1]);
    c.phantom.noise = parse_number(kv, "phantom.noise", c.phantom.noise);
    c.phantom.decay = parse_number(kv, "phantom.decay", c.phantom.decay);
    // Without an explicit stride, blocks tile the plane edge to edge.
    c.blocks.stride = kv.contains("block.stride") ? parse_number(kv, "block.stride", c.blocks.stride)
                                                  : std::min(c.model.height, c.model.width);
    c.train.steps = parse_number(kv, "train.steps", c.train.steps);
    c.train.batch = parse_number(kv, "train.batch", c.train.batch);
    c.train.lr = parse_number(kv, "train.lr", c.train.lr);
    c.train.momentum = parse_number(kv, "train.momentum", c.train.momentum);
    c.train.seed = parse_number(kv, "train.seed", c.train.seed);
    c.train.flip_y = parse_bool(kv, "train.flip_y", c.train.flip_y);
    c.train.flip_x = parse_bool(kv, "train.flip_x", c.train.flip_x);
    // Training blocks always match the model input.
    c.blocks.depth = c.model.depth;
    c.blocks.height = c.model.height;
    c.blocks.width = c.model.width;
    if (c.train_volumes == 0 || c.test_volumes == 0) throw ArgumentError("config: volume counts must be positive");
    if (c.blocks.stride == 0) throw ArgumentError("config: block.stride must be positive");
    return c;
}

PhantomSuite make_suite(const ExperimentConfig& cfg) {
    Rng rng(cfg.seed);
    PhantomSuite s;
    for (std::size_t i = 0; i < cfg.train_volumes; ++i) s.train_seeds.push_back(rng.next());
    for (std::size_t i = 0; i < cfg.test_volumes; ++i) s.test_seeds.push_back(rng.next());
    for (auto seed : s.train_seeds) s.train.push_back(gen_phantom(seed, cfg.phantom));
    for (auto seed : s.test_seeds) s.test.push_back(gen_phantom(seed, cfg.phantom));
    return s;
}

std::vector<Block> suite_blocks(const ExperimentConfig& cfg, const PhantomSuite& suite) {
    std::vector<Block> out;
    for (const auto& ph : suite.train) {
        auto b = partition_blocks(ph.image, ph.label, cfg.ratio_threshold, cfg.blocks, cfg.model.dtype);
        std::move(b.begin(), b.end(), std::back_inserter(out));
    }
    if (out.empty()) throw ArgumentError("experiment: no training block passes the foreground threshold");
    return out;
}

Checkpoint2D experiment_checkpoint(const ExperimentConfig& cfg) {
    return Checkpoint2D::from_tensors(make_fixture_checkpoint(cfg.model.embed_dim, 3, cfg.model.layers,
                                                              cfg.model.heads, cfg.model.tokens(),
                                                              cfg.checkpoint_seed));
}

SegmentationScore score_volume(const std::string& id, const Volume& prob, const Volume& label, double threshold) {
    const BinaryMask p = BinaryMask::from_volume(prob, threshold), t = BinaryMask::from_volume(label, threshold);
    SegmentationScore s;
    s.volume_id = id;
    s.threshold = threshold;
    s.dice = dice(p, t);
    s.hd95 = p.empty() || t.empty() ? std::numeric_limits<double>::quiet_NaN() : hd95(p, t);
    return s;
}

StrategyRun run_strategy(const ExperimentConfig& cfg, Strategy strategy, const PhantomSuite& suite,
                         const std::vector<Block>& blocks, const Checkpoint2D& checkpoint) {
    ModelConfig mc = cfg.model;
    mc.strategy = strategy;
    SegModel model(mc, seed_model(checkpoint, mc));
    std::vector<double> losses = train(model, blocks, cfg.train);
    std::vector<SegmentationScore> scores;
    double dice_sum = 0.0, hd_sum = 0.0;
    std::size_t hd_n = 0;
    for (std::size_t i = 0; i < suite.test.size(); ++i) {
        const Volume prob = segment_volume(model, suite.test[i].image, cfg.threads);
        scores.push_back(score_volume("test_" + std::to_string(i), prob, suite.test[i].label, cfg.binarize));
        dice_sum += scores.back().dice;
        if (std::isfinite(scores.back().hd95)) {
            hd_sum += scores.back().hd95;
            ++hd_n;
        }
    }
    const double mean_dice = dice_sum / static_cast<double>(scores.size());
    const double mean_hd = hd_n ? hd_sum / static_cast<double>(hd_n) : std::numeric_limits<double>::quiet_NaN();
    return StrategyRun{strategy, std::move(losses), std::move(scores), mean_dice, mean_hd, std::move(model)};
}

std::vector<std::filesystem::path> write_comparison(const std::filesystem::path& dir,
                                                    const std::vector<StrategyRun>& runs) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    for (const auto& r : runs) {
        const std::string name = strategy_name(r.strategy);
        const auto loss_path = dir / ("loss_" + name + ".csv");
        auto loss = open_out(loss_path);
        write_loss_csv(loss, r.losses);
        written.push_back(loss_path);
        const auto score_path = dir / ("scores_" + name + ".csv");
        auto scores = open_out(score_path);
        write_score_header(scores);
        for (const auto& s : r.scores) write_score_row(scores, s);
        written.push_back(score_path);
    }
    const auto summary_path = dir / "summary.csv";
    auto summary = open_out(summary_path);
    summary << "strategy,mean_dice,mean_hd95,final_loss\n";
    for (const auto& r : runs) {
        summary << strategy_name(r.strategy) << ',' << fmt(r.mean_dice) << ',' << fmt(r.mean_hd95) << ','
                << fmt(r.losses.empty() ? 0.0 : r.losses.back()) << '\n';
    }
    written.push_back(summary_path);
    return written;
}

Reconstruction reconstruct_single_tube(const ExperimentConfig& cfg, const SegModel& model,
                                       const TraceOptions& options) {
    PhantomSpec spec = cfg.phantom;
    spec.branches = 1;
    // A seed stream separate from the train/test suite.
    Rng rng(cfg.seed ^ 0x5157554245ULL);
    const Phantom ph = gen_phantom(rng.next(), spec);
    const Volume prob = segment_volume(model, ph.image, cfg.threads);
    Reconstruction r;
    r.truth = ph.swc;
    r.from_label = trace(ph.label, options);
    r.label_only = neuron_distance(r.from_label, r.truth);
    r.from_prediction = trace(prob, options);
    r.predicted = neuron_distance(r.from_prediction, r.truth);
    return r;
}

std::vector<std::filesystem::path> write_reconstruction(const std::filesystem::path& dir, const Reconstruction& r) {
    std::filesystem::create_directories(dir);
    const auto csv_path = dir / "reconstruction.csv";
    auto csv = open_out(csv_path);
    csv << "source,nodes,esa,dsa,pds\n";
    csv << "prediction," << r.from_prediction.size() << ',' << fmt(r.predicted.esa) << ',' << fmt(r.predicted.dsa)
        << ',' << fmt(r.predicted.pds) << '\n';
    csv << "label," << r.from_label.size() << ',' << fmt(r.label_only.esa) << ',' << fmt(r.label_only.dsa) << ','
        << fmt(r.label_only.pds) << '\n';
    const std::vector<std::filesystem::path> swcs{dir / "truth.swc", dir / "trace_prediction.swc",
                                                  dir / "trace_label.swc"};
    save_swc(swcs[0].string(), r.truth);
    save_swc(swcs[1].string(), r.from_prediction);
    save_swc(swcs[2].string(), r.from_label);
    std::vector<std::filesystem::path> written{csv_path};
    written.insert(written.end(), swcs.begin(), swcs.end());
    return written;
}

}  // namespace nt
