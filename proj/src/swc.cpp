#include "neurotube/swc.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace nt {
namespace {

std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

template <class T>
bool parse_field(const std::string& s, T& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    auto res = std::from_chars(b, e, out);
    return res.ec == std::errc{} && res.ptr == e;
}

// Uniform hash grid over node positions for nearest-node queries.
class NodeGrid {
  public:
    explicit NodeGrid(const std::vector<SwcNode>& nodes, double cell = 4.0) : nodes_(nodes), cell_(cell) {
        for (std::size_t i = 0; i < nodes.size(); ++i) cells_[key(cell_of(nodes[i].x), cell_of(nodes[i].y), cell_of(nodes[i].z))].push_back(i);
    }

    double nearest(double x, double y, double z) const {
        const long cx = cell_of(x), cy = cell_of(y), cz = cell_of(z);
        double best = std::numeric_limits<double>::infinity();
        // Grow the search shell until no unvisited cell can beat `best`.
        for (long r = 0;; ++r) {
            for (long dz = -r; dz <= r; ++dz)
                for (long dy = -r; dy <= r; ++dy)
                    for (long dx = -r; dx <= r; ++dx) {
                        if (std::max({std::labs(dx), std::labs(dy), std::labs(dz)}) != r) continue;
                        auto it = cells_.find(key(cx + dx, cy + dy, cz + dz));
                        if (it == cells_.end()) continue;
                        for (auto i : it->second) {
                            const auto& n = nodes_[i];
                            const double d2 = (n.x - x) * (n.x - x) + (n.y - y) * (n.y - y) + (n.z - z) * (n.z - z);
                            best = std::min(best, d2);
                        }
                    }
            if (best < std::numeric_limits<double>::infinity()) {
                const double reach = static_cast<double>(r) * cell_;
                if (best <= reach * reach) break;
            }
            if (r > max_radius_) break;
        }
        return std::sqrt(best);
    }

  private:
    long cell_of(double v) const { return static_cast<long>(std::floor(v / cell_)); }
    static std::uint64_t key(long x, long y, long z) {
        auto u = [](long v) { return static_cast<std::uint64_t>(v + (1L << 20)) & 0x1FFFFF; };
        return (u(x) << 42) | (u(y) << 21) | u(z);
    }

    const std::vector<SwcNode>& nodes_;
    double cell_;
    long max_radius_ = 1L << 20;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

}  // namespace

SwcTree SwcTree::from_nodes(std::vector<SwcNode> nodes) {
    SwcTree t;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!t.index_.emplace(nodes[i].id, i).second) {
            throw ArgumentError("swc: duplicate id " + std::to_string(nodes[i].id));
        }
    }
    for (const auto& n : nodes) {
        if (n.parent != -1 && !t.index_.contains(n.parent)) {
            throw ArgumentError("swc: node " + std::to_string(n.id) + " has missing parent " + std::to_string(n.parent));
        }
    }
    // Cycle check: colour walk along parent links.
    std::vector<char> state(nodes.size(), 0);  // 0 new, 1 on path, 2 done
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        std::vector<std::size_t> path;
        std::size_t cur = i;
        while (state[cur] == 0) {
            state[cur] = 1;
            path.push_back(cur);
            if (nodes[cur].parent == -1) break;
            cur = t.index_.at(nodes[cur].parent);
            if (state[cur] == 1) throw ArgumentError("swc: cycle through node " + std::to_string(nodes[cur].id));
        }
        for (auto p : path) state[p] = 2;
    }
    if (!nodes.empty() && std::none_of(nodes.begin(), nodes.end(), [](const SwcNode& n) { return n.parent == -1; })) {
        throw ArgumentError("swc: no root node");
    }
    t.nodes_ = std::move(nodes);
    return t;
}

std::size_t SwcTree::index_of(long id) const {
    auto it = index_.find(id);
    return it == index_.end() ? npos : it->second;
}

std::size_t SwcTree::root_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const SwcNode& n) { return n.parent == -1; }));
}

SwcTree parse_swc(const std::string& text) {
    std::vector<SwcNode> nodes;
    std::vector<std::size_t> lines;
    std::unordered_map<long, std::size_t> seen;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream fields(line);
        std::vector<std::string> f;
        for (std::string tok; fields >> tok;) f.push_back(tok);
        if (f.size() != 7) {
            throw ParseError("swc: expected 7 fields, found " + std::to_string(f.size()), lineno);
        }
        SwcNode n;
        if (!parse_field(f[0], n.id) || !parse_field(f[1], n.type) || !parse_field(f[2], n.x) ||
            !parse_field(f[3], n.y) || !parse_field(f[4], n.z) || !parse_field(f[5], n.radius) ||
            !parse_field(f[6], n.parent)) {
            throw ParseError("swc: malformed field", lineno);
        }
        if (!std::isfinite(n.x) || !std::isfinite(n.y) || !std::isfinite(n.z) || !std::isfinite(n.radius)) {
            throw ParseError("swc: non-finite value", lineno);
        }
        if (n.parent < -1) throw ParseError("swc: invalid parent id " + f[6], lineno);
        if (!seen.emplace(n.id, nodes.size()).second) {
            throw ParseError("swc: duplicate id " + std::to_string(n.id), lineno);
        }
        nodes.push_back(n);
        lines.push_back(lineno);
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].parent != -1 && !seen.contains(nodes[i].parent)) {
            throw ParseError("swc: parent " + std::to_string(nodes[i].parent) + " does not exist", lines[i]);
        }
    }
    try {
        return SwcTree::from_nodes(std::move(nodes));
    } catch (const ArgumentError& e) {
        // Only cycles and missing roots reach here; report the first record.
        throw ParseError(e.what(), lines.empty() ? 0 : lines.front());
    }
}

SwcTree load_swc(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_swc(ss.str());
}

std::string write_swc(const SwcTree& tree) {
    std::string out;
    for (const auto& n : tree.nodes()) {
        out += std::to_string(n.id) + ' ' + std::to_string(n.type) + ' ' + format_number(n.x) + ' ' +
               format_number(n.y) + ' ' + format_number(n.z) + ' ' + format_number(n.radius) + ' ' +
               std::to_string(n.parent) + '\n';
    }
    return out;
}

void save_swc(const std::string& path, const SwcTree& tree) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << write_swc(tree);
}

SwcTree resample(const SwcTree& tree, double step) {
    if (!(step > 0.0)) throw ArgumentError("resample: step must be positive");
    long next_id = 0;
    for (const auto& n : tree.nodes()) next_id = std::max(next_id, n.id);
    ++next_id;
    std::vector<SwcNode> out;
    out.reserve(tree.size());
    for (const auto& n : tree.nodes()) {
        if (n.parent == -1) {
            out.push_back(n);
            continue;
        }
        const auto& p = tree.nodes()[tree.index_of(n.parent)];
        const double len = std::sqrt((n.x - p.x) * (n.x - p.x) + (n.y - p.y) * (n.y - p.y) + (n.z - p.z) * (n.z - p.z));
        const auto pieces = static_cast<long>(std::max(1.0, std::ceil(len / step - 1e-9)));
        long prev = p.id;
        for (long k = 1; k < pieces; ++k) {
            const double f = static_cast<double>(k) / static_cast<double>(pieces);
            SwcNode m;
            m.id = next_id++;
            m.type = n.type;
            m.x = p.x + f * (n.x - p.x);
            m.y = p.y + f * (n.y - p.y);
            m.z = p.z + f * (n.z - p.z);
            m.radius = p.radius + f * (n.radius - p.radius);
            m.parent = prev;
            prev = m.id;
            out.push_back(m);
        }
        SwcNode c = n;
        c.parent = prev;
        out.push_back(c);
    }
    return SwcTree::from_nodes(std::move(out));
}

double total_length(const SwcTree& tree) {
    double total = 0.0;
    for (const auto& n : tree.nodes()) {
        if (n.parent == -1) continue;
        const auto& p = tree.nodes()[tree.index_of(n.parent)];
        total += std::sqrt((n.x - p.x) * (n.x - p.x) + (n.y - p.y) * (n.y - p.y) + (n.z - p.z) * (n.z - p.z));
    }
    return total;
}

std::vector<double> nearest_node_distances(const SwcTree& from, const SwcTree& to) {
    if (to.empty()) throw ArgumentError("nearest_node_distances: empty target tree");
    NodeGrid grid(to.nodes());
    std::vector<double> d;
    d.reserve(from.size());
    for (const auto& n : from.nodes()) d.push_back(grid.nearest(n.x, n.y, n.z));
    return d;
}

NeuronDistance neuron_distance(const SwcTree& a, const SwcTree& b, double threshold) {
    if (a.empty() || b.empty()) throw ArgumentError("neuron_distance: empty tree");
    const SwcTree ra = resample(a, 1.0);
    const SwcTree rb = resample(b, 1.0);
    std::vector<double> pooled = nearest_node_distances(ra, rb);
    const auto back = nearest_node_distances(rb, ra);
    pooled.insert(pooled.end(), back.begin(), back.end());
    NeuronDistance r;
    r.threshold = threshold;
    double total = 0.0, far_total = 0.0;
    std::size_t far = 0;
    for (double d : pooled) {
        total += d;
        if (d > threshold) {
            far_total += d;
            ++far;
        }
    }
    r.esa = total / static_cast<double>(pooled.size());
    r.dsa = far == 0 ? 0.0 : far_total / static_cast<double>(far);
    r.pds = static_cast<double>(far) / static_cast<double>(pooled.size());
    return r;
}

}  // namespace nt
