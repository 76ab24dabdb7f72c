#include "neurotube/config.hpp"

#include <sstream>

namespace nt {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t to_size(const KeyValues& kv, const std::string& key, std::size_t fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        if (it->second.empty() || it->second[0] == '-') throw std::invalid_argument(key);
        std::size_t used = 0;
        const auto v = std::stoull(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(key);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ArgumentError("config: '" + key + "' is not an unsigned integer: " + it->second);
    }
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ArgumentError("config: line " + std::to_string(lineno) + " is not key=value: " + t);
        }
        kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return kv;
}

std::string format_key_values(const KeyValues& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

Strategy parse_strategy(const std::string& name) {
    if (name == "random") return Strategy::random;
    if (name == "average") return Strategy::average;
    if (name == "center") return Strategy::center;
    if (name == "tubular") return Strategy::tubular;
    throw ArgumentError("unknown strategy '" + name + "' (expected random|average|center|tubular)");
}

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::random: return "random";
        case Strategy::average: return "average";
        case Strategy::center: return "center";
        case Strategy::tubular: return "tubular";
    }
    return "?";
}

ChannelReduction parse_reduction(const std::string& name) {
    if (name == "mean") return ChannelReduction::mean;
    if (name == "sum") return ChannelReduction::sum;
    throw ArgumentError("unknown channel reduction '" + name + "' (expected mean|sum)");
}

std::string reduction_name(ChannelReduction r) { return r == ChannelReduction::mean ? "mean" : "sum"; }

void ModelConfig::validate() const {
    if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0) {
        throw ArgumentError("config: embed_dim must be a positive multiple of heads");
    }
    if (depth == 0 || depth % 2 == 0) throw ArgumentError("config: depth must be odd");
    if (height == 0 || width == 0) throw ArgumentError("config: block height/width must be positive");
    if (mlp_ratio == 0) throw ArgumentError("config: mlp_ratio must be positive");
    std::size_t f = 1;
    for (auto h : head_factors) f *= h;
    if (f != kPatch) throw ArgumentError("config: head_factors must multiply to 16");
}

KeyValues ModelConfig::to_key_values() const {
    KeyValues kv;
    kv["model.embed_dim"] = std::to_string(embed_dim);
    kv["model.layers"] = std::to_string(layers);
    kv["model.heads"] = std::to_string(heads);
    kv["model.mlp_ratio"] = std::to_string(mlp_ratio);
    kv["model.depth"] = std::to_string(depth);
    kv["model.height"] = std::to_string(height);
    kv["model.width"] = std::to_string(width);
    kv["model.strategy"] = strategy_name(strategy);
    kv["model.reduction"] = reduction_name(reduction);
    std::string factors;
    for (std::size_t i = 0; i < head_factors.size(); ++i) factors += (i ? "," : "") + std::to_string(head_factors[i]);
    kv["model.head_factors"] = factors;
    kv["model.seed"] = std::to_string(seed);
    kv["model.dtype"] = dtype_name(dtype);
    kv["model.freeze_blocks"] = freeze_blocks ? "true" : "false";
    return kv;
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
    ModelConfig c;
    c.embed_dim = to_size(kv, "model.embed_dim", c.embed_dim);
    c.layers = to_size(kv, "model.layers", c.layers);
    c.heads = to_size(kv, "model.heads", c.heads);
    c.mlp_ratio = to_size(kv, "model.mlp_ratio", c.mlp_ratio);
    c.depth = to_size(kv, "model.depth", c.depth);
    c.height = to_size(kv, "model.height", c.height);
    c.width = to_size(kv, "model.width", c.width);
    c.seed = to_size(kv, "model.seed", c.seed);
    if (auto it = kv.find("model.strategy"); it != kv.end()) c.strategy = parse_strategy(it->second);
    if (auto it = kv.find("model.reduction"); it != kv.end()) c.reduction = parse_reduction(it->second);
    if (auto it = kv.find("model.head_factors"); it != kv.end()) {
        c.head_factors.clear();
        std::istringstream in(it->second);
        std::string part;
        while (std::getline(in, part, ',')) {
            KeyValues one{{"f", trim(part)}};
            c.head_factors.push_back(to_size(one, "f", 0));
        }
    }
    if (auto it = kv.find("model.dtype"); it != kv.end()) {
        if (it->second == "f32") {
            c.dtype = DType::f32;
        } else if (it->second == "f64") {
            c.dtype = DType::f64;
        } else {
            throw ArgumentError("config: model.dtype must be f32 or f64");
        }
    }
    if (auto it = kv.find("model.freeze_blocks"); it != kv.end()) {
        if (it->second != "true" && it->second != "false") {
            throw ArgumentError("config: model.freeze_blocks must be true or false");
        }
        c.freeze_blocks = it->second == "true";
    }
    c.validate();
    return c;
}

}  // namespace nt
