#include "neurotube/tracer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>

#include "neurotube/distance.hpp"

namespace nt {
namespace {

struct Offset {
    int dz, dy, dx;
};

constexpr int cube_index(int dz, int dy, int dx) { return (dz + 1) * 9 + (dy + 1) * 3 + (dx + 1); }

// Adjacency tables inside the 3x3x3 cube.
struct CubeTables {
    std::array<std::vector<int>, 27> adj26;
    std::array<std::vector<int>, 27> adj6;
    std::array<bool, 27> in_n18{};
    std::array<bool, 27> face{};

    CubeTables() {
        for (int i = 0; i < 27; ++i) {
            const int z = i / 9 - 1, y = (i / 3) % 3 - 1, x = i % 3 - 1;
            const int l1 = std::abs(z) + std::abs(y) + std::abs(x);
            in_n18[i] = l1 >= 1 && l1 <= 2;
            face[i] = l1 == 1;
            for (int j = 0; j < 27; ++j) {
                if (i == j) continue;
                const int z2 = j / 9 - 1, y2 = (j / 3) % 3 - 1, x2 = j % 3 - 1;
                const int a = std::abs(z - z2), b = std::abs(y - y2), c = std::abs(x - x2);
                if (std::max({a, b, c}) == 1) adj26[i].push_back(j);
                if (a + b + c == 1) adj6[i].push_back(j);
            }
        }
    }
};

const CubeTables& tables() {
    static const CubeTables t;
    return t;
}

constexpr int kCentre = 13;

}  // namespace

bool is_simple_point(const std::array<bool, 27>& nb) {
    const auto& t = tables();
    // Foreground: exactly one 26-component among the 26 neighbours.
    std::array<bool, 27> seen{};
    int fg_components = 0;
    for (int s = 0; s < 27; ++s) {
        if (s == kCentre || !nb[s] || seen[s]) continue;
        ++fg_components;
        std::vector<int> stack{s};
        seen[s] = true;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int w : t.adj26[v])
                if (w != kCentre && nb[w] && !seen[w]) {
                    seen[w] = true;
                    stack.push_back(w);
                }
        }
    }
    if (fg_components != 1) return false;
    // Background: exactly one 6-component in N18 touching a face neighbour.
    seen.fill(false);
    int bg_components = 0;
    for (int s = 0; s < 27; ++s) {
        if (!t.face[s] || nb[s] || seen[s]) continue;
        ++bg_components;
        std::vector<int> stack{s};
        seen[s] = true;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int w : t.adj6[v])
                if (t.in_n18[w] && !nb[w] && !seen[w]) {
                    seen[w] = true;
                    stack.push_back(w);
                }
        }
    }
    return bg_components == 1;
}

BinaryMask skeletonize(const BinaryMask& mask) {
    const auto [D, H, W] = mask.shape();
    std::vector<std::uint8_t> img = mask.bits();
    auto get = [&](long z, long y, long x) -> bool {
        if (z < 0 || y < 0 || x < 0 || z >= long(D) || y >= long(H) || x >= long(W)) return false;
        return img[(std::size_t(z) * H + std::size_t(y)) * W + std::size_t(x)] != 0;
    };
    auto neighbourhood = [&](long z, long y, long x) {
        std::array<bool, 27> nb{};
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) nb[cube_index(dz, dy, dx)] = get(z + dz, y + dy, x + dx);
        return nb;
    };
    const std::array<Offset, 6> directions{{{0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}, {-1, 0, 0}, {1, 0, 0}}};

    bool changed = true;
    while (changed) {
        changed = false;
        for (const Offset& d : directions) {
            std::vector<std::size_t> candidates;
            for (std::size_t z = 0; z < D; ++z)
                for (std::size_t y = 0; y < H; ++y)
                    for (std::size_t x = 0; x < W; ++x) {
                        const std::size_t i = (z * H + y) * W + x;
                        if (!img[i] || get(long(z) + d.dz, long(y) + d.dy, long(x) + d.dx)) continue;
                        const auto nb = neighbourhood(long(z), long(y), long(x));
                        if (std::count(nb.begin(), nb.end(), true) - 1 <= 1) continue;
                        if (is_simple_point(nb)) candidates.push_back(i);
                    }
            // Sequential re-check keeps each single deletion topology-safe.
            for (std::size_t i : candidates) {
                const long z = long(i / (H * W)), y = long((i / W) % H), x = long(i % W);
                const auto nb = neighbourhood(z, y, x);
                if (std::count(nb.begin(), nb.end(), true) - 1 <= 1) continue;
                if (!is_simple_point(nb)) continue;
                img[i] = 0;
                changed = true;
            }
        }
    }
    return BinaryMask(mask.shape(), std::move(img));
}

namespace {

struct SkeletonGraph {
    std::vector<std::size_t> voxels;               // linear indices, ascending
    std::vector<std::vector<std::pair<std::size_t, double>>> adj;
};

SkeletonGraph build_graph(const BinaryMask& skel) {
    const auto [D, H, W] = skel.shape();
    SkeletonGraph g;
    std::map<std::size_t, std::size_t> node_of;
    for (std::size_t i = 0; i < skel.bits().size(); ++i)
        if (skel.bits()[i]) {
            node_of[i] = g.voxels.size();
            g.voxels.push_back(i);
        }
    g.adj.resize(g.voxels.size());
    for (std::size_t n = 0; n < g.voxels.size(); ++n) {
        const std::size_t i = g.voxels[n];
        const long z = long(i / (H * W)), y = long((i / W) % H), x = long(i % W);
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dz == 0 && dy == 0 && dx == 0) continue;
                    const long zz = z + dz, yy = y + dy, xx = x + dx;
                    if (zz < 0 || yy < 0 || xx < 0 || zz >= long(D) || yy >= long(H) || xx >= long(W)) continue;
                    const std::size_t j = (std::size_t(zz) * H + std::size_t(yy)) * W + std::size_t(xx);
                    auto it = node_of.find(j);
                    if (it == node_of.end()) continue;
                    g.adj[n].emplace_back(it->second, std::sqrt(double(dz * dz + dy * dy + dx * dx)));
                }
    }
    return g;
}

}  // namespace

SwcTree trace(const Volume& prob, const TraceOptions& options) {
    for (float v : prob.voxels())
        if (!(v >= 0.0f && v <= 1.0f)) throw ContractError("trace: probability outside [0, 1]");
    const BinaryMask fg = BinaryMask::from_volume(prob, options.binarize);
    if (fg.empty()) throw EmptyTrace("trace: no foreground voxel at threshold " + std::to_string(options.binarize));
    const auto [D, H, W] = fg.shape();

    std::vector<std::uint8_t> background(fg.bits().size());
    for (std::size_t i = 0; i < background.size(); ++i) background[i] = fg.bits()[i] ? 0 : 1;
    auto radius_sq = squared_distance_transform(background, fg.shape());

    const SkeletonGraph g = build_graph(skeletonize(fg));
    const std::size_t n = g.voxels.size();

    // Connected components in ascending voxel order.
    std::vector<long> comp(n, -1);
    std::vector<std::vector<std::size_t>> members;
    for (std::size_t s = 0; s < n; ++s) {
        if (comp[s] != -1) continue;
        const long c = long(members.size());
        members.emplace_back();
        std::vector<std::size_t> stack{s};
        comp[s] = c;
        while (!stack.empty()) {
            const std::size_t v = stack.back();
            stack.pop_back();
            members[c].push_back(v);
            for (auto [w, len] : g.adj[v])
                if (comp[w] == -1) {
                    comp[w] = c;
                    stack.push_back(w);
                }
        }
    }
    std::size_t largest = 0;
    for (std::size_t c = 1; c < members.size(); ++c)
        if (members[c].size() > members[largest].size()) largest = c;

    std::vector<SwcNode> out;
    long next_id = 1;
    std::vector<long> parent(n, -1);
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < members.size(); ++c) {
        auto& mem = members[c];
        if (mem.size() < options.prune_len && c != largest) continue;
        std::sort(mem.begin(), mem.end());
        std::size_t root = mem.front();
        for (std::size_t v : mem)
            if (radius_sq[g.voxels[v]] > radius_sq[g.voxels[root]]) root = v;

        // Dijkstra with (distance, node) ordering for deterministic ties.
        using Item = std::pair<double, std::size_t>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
        dist[root] = 0.0;
        pq.emplace(0.0, root);
        while (!pq.empty()) {
            const auto [d, v] = pq.top();
            pq.pop();
            if (d > dist[v]) continue;
            for (auto [w, len] : g.adj[v]) {
                const double nd = d + len;
                if (nd < dist[w] || (nd == dist[w] && long(v) < parent[w])) {
                    const bool improve = nd < dist[w];
                    dist[w] = nd;
                    parent[w] = long(v);
                    if (improve) pq.emplace(nd, w);
                }
            }
        }

        std::map<std::size_t, std::vector<std::size_t>> children;
        for (std::size_t v : mem)
            if (v != root) children[std::size_t(parent[v])].push_back(v);
        std::vector<bool> keep(n, false);
        for (std::size_t v : mem) keep[v] = true;
        // One pruning pass over the leaves present before pruning.
        for (std::size_t v : mem) {
            if (v == root || children.contains(v)) continue;
            std::vector<std::size_t> branch{v};
            std::size_t u = std::size_t(parent[v]);
            while (u != root && children[u].size() == 1) {
                branch.push_back(u);
                u = std::size_t(parent[u]);
            }
            if (children[u].size() < 2 || branch.size() >= options.prune_len) continue;
            for (std::size_t b : branch) keep[b] = false;
        }

        // Breadth-first numbering from the root.
        std::map<std::size_t, long> id_of;
        std::queue<std::size_t> q;
        q.push(root);
        while (!q.empty()) {
            const std::size_t v = q.front();
            q.pop();
            const std::size_t i = g.voxels[v];
            SwcNode node;
            node.id = next_id++;
            id_of[v] = node.id;
            node.type = v == root ? 1 : 3;
            node.z = double(i / (H * W));
            node.y = double((i / W) % H);
            node.x = double(i % W);
            const double r = std::sqrt(radius_sq[i]);
            node.radius = std::isfinite(r) ? r : 0.5 * double(std::min({D, H, W}));
            node.parent = v == root ? -1 : id_of.at(std::size_t(parent[v]));
            out.push_back(node);
            auto it = children.find(v);
            if (it == children.end()) continue;
            for (std::size_t w : it->second)
                if (keep[w]) q.push(w);
        }
    }
    return SwcTree::from_nodes(std::move(out));
}

}  // namespace nt
