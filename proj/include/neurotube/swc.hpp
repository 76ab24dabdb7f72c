#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "neurotube/archive.hpp"

namespace nt {

/// One SWC record. Coordinates and radius are in voxels; x, y, z index the
/// volume's W, H, D axes respectively.
struct SwcNode {
    long id = 0;
    int type = 0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double radius = 0.0;
    long parent = -1;

    bool operator==(const SwcNode&) const = default;
};

/// Validated neuron morphology: unique ids, parents present or -1, acyclic,
/// at least one root.
class SwcTree {
  public:
    SwcTree() = default;
    /// Throws ArgumentError on any invariant violation.
    static SwcTree from_nodes(std::vector<SwcNode> nodes);

    const std::vector<SwcNode>& nodes() const { return nodes_; }
    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }
    /// Position of `id` in nodes(), or npos.
    std::size_t index_of(long id) const;
    std::size_t root_count() const;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  private:
    std::vector<SwcNode> nodes_;
    std::unordered_map<long, std::size_t> index_;
};

/// '#' comment lines and blank lines are skipped; every other line must hold
/// exactly 7 whitespace-separated fields. Errors carry the 1-based line.
SwcTree parse_swc(const std::string& text);
SwcTree load_swc(const std::string& path);

/// Canonical text: one record per line, single spaces, shortest round-trip
/// number formatting, no comments.
std::string write_swc(const SwcTree& tree);
void save_swc(const std::string& path, const SwcTree& tree);

/// Subdivides every edge so consecutive nodes are at most `step` apart.
/// Original nodes keep their ids; inserted nodes get fresh ids above the
/// current maximum and linearly interpolated radii.
SwcTree resample(const SwcTree& tree, double step = 1.0);

/// Sum of all parent-child edge lengths.
double total_length(const SwcTree& tree);

struct NeuronDistance {
    double esa = 0.0;  // mean of pooled nearest-node distances
    double dsa = 0.0;  // mean over distances above threshold, 0 if none
    double pds = 0.0;  // fraction of pooled distances above threshold
    double threshold = 2.0;
};

/// Bidirectional nearest-node distances between unit-resampled trees.
NeuronDistance neuron_distance(const SwcTree& a, const SwcTree& b, double threshold = 2.0);

/// For each node of `from`, the distance to the nearest node of `to`.
std::vector<double> nearest_node_distances(const SwcTree& from, const SwcTree& to);

}  // namespace nt
