#include "neurotube/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "neurotube/distance.hpp"

namespace nt {

BinaryMask::BinaryMask(std::array<std::size_t, 3> shape, std::vector<std::uint8_t> bits)
    : shape_(shape), bits_(std::move(bits)) {
    if (bits_.size() != shape_[0] * shape_[1] * shape_[2]) {
        throw DimensionError("mask: " + std::to_string(bits_.size()) + " voxels for shape " +
                             shape_str({shape_[0], shape_[1], shape_[2]}));
    }
    for (auto& b : bits_) b = b ? 1 : 0;
}

BinaryMask::BinaryMask(std::array<std::size_t, 3> shape)
    : BinaryMask(shape, std::vector<std::uint8_t>(shape[0] * shape[1] * shape[2], 0)) {}

BinaryMask BinaryMask::from_volume(const Volume& vol, double threshold) {
    std::vector<std::uint8_t> bits(vol.size());
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = vol.voxels()[i] >= threshold ? 1 : 0;
    return BinaryMask(vol.shape(), std::move(bits));
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

namespace {

void require_same_shape(const char* op, const BinaryMask& a, const BinaryMask& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": mask shapes " + shape_str({a.shape()[0], a.shape()[1], a.shape()[2]}) +
                             " and " + shape_str({b.shape()[0], b.shape()[1], b.shape()[2]}) + " differ");
    }
}

std::vector<double> pooled(const BinaryMask& a, const BinaryMask& b, const char* op) {
    require_same_shape(op, a, b);
    if (a.empty() || b.empty()) throw UndefinedDistance(std::string(op) + ": distance to an empty mask is undefined");
    auto d = directed_distances(a, b);
    const auto back = directed_distances(b, a);
    d.insert(d.end(), back.begin(), back.end());
    return d;
}

}  // namespace

double dice(const BinaryMask& a, const BinaryMask& b) {
    require_same_shape("dice", a, b);
    std::size_t inter = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.bits().size(); ++i) {
        na += a.bits()[i];
        nb += b.bits()[i];
        inter += a.bits()[i] & b.bits()[i];
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

std::vector<double> directed_distances(const BinaryMask& from, const BinaryMask& to) {
    require_same_shape("directed_distances", from, to);
    if (to.empty()) throw UndefinedDistance("directed_distances: target mask is empty");
    const auto sq = squared_distance_transform(to.bits(), to.shape());
    std::vector<double> out;
    for (std::size_t i = 0; i < sq.size(); ++i)
        if (from.bits()[i]) out.push_back(std::sqrt(sq[i]));
    return out;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw UndefinedDistance("percentile: no values");
    if (!(q >= 0.0 && q <= 100.0)) throw ArgumentError("percentile: q must lie in [0, 100]");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

double hd95(const BinaryMask& a, const BinaryMask& b) { return percentile(pooled(a, b, "hd95"), 95.0); }

double hausdorff(const BinaryMask& a, const BinaryMask& b) {
    const auto d = pooled(a, b, "hausdorff");
    return *std::max_element(d.begin(), d.end());
}

void write_score_header(std::ostream& out) { out << "volume_id,dice,hd95,threshold\n"; }

void write_score_row(std::ostream& out, const SegmentationScore& s) {
    char buf[160];
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g\n", s.dice, s.hd95, s.threshold);
    out << s.volume_id << buf;
}

}  // namespace nt
