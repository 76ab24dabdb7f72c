#include "neurotube/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "neurotube/rng.hpp"

namespace nt {

std::vector<Block> partition_blocks(const Volume& image, const Volume& labels, double ratio_threshold,
                                    const BlockGeometry& geo, DType dtype) {
    if (!(ratio_threshold >= 0.0 && ratio_threshold <= 1.0)) {
        throw ArgumentError("partition_blocks: ratio threshold must lie in [0, 1]");
    }
    if (image.shape() != labels.shape()) throw DimensionError("partition_blocks: image and label shapes differ");
    if (geo.depth == 0 || geo.height == 0 || geo.width == 0 || geo.stride == 0) {
        throw ArgumentError("partition_blocks: block geometry must be positive");
    }
    if (image.depth() < geo.depth || image.height() < geo.height || image.width() < geo.width) {
        throw DimensionError("partition_blocks: volume smaller than block");
    }
    std::vector<Block> out;
    const std::size_t mid = geo.depth / 2;
    for (std::size_t z = 0; z + geo.depth <= image.depth(); ++z)
        for (std::size_t y = 0; y + geo.height <= image.height(); y += geo.stride)
            for (std::size_t x = 0; x + geo.width <= image.width(); x += geo.stride) {
                std::size_t fg = 0;
                for (std::size_t yy = 0; yy < geo.height; ++yy)
                    for (std::size_t xx = 0; xx < geo.width; ++xx)
                        fg += is_foreground(labels.at(z + mid, y + yy, x + xx)) ? 1 : 0;
                const double ratio = static_cast<double>(fg) / static_cast<double>(geo.height * geo.width);
                if (ratio < ratio_threshold) continue;
                Block b;
                b.origin = {z, y, x};
                b.data = image.crop(z, y, x, geo.depth, geo.height, geo.width, dtype);
                Tensor lab = labels.crop(z + mid, y, x, 1, geo.height, geo.width, dtype);
                b.soft_label = Tensor({geo.height, geo.width},
                                      std::vector<double>(lab.data().begin(), lab.data().end()), dtype);
                b.foreground_ratio = ratio;
                out.push_back(std::move(b));
            }
    return out;
}

Volume dt_labels(const std::array<std::size_t, 3>& shape, const SwcTree& swc, double decay) {
    if (swc.empty()) throw ArgumentError("dt_labels: empty tree");
    if (!(decay > 0.0)) throw ArgumentError("dt_labels: decay must be positive");
    struct Segment {
        double ax, ay, az, bx, by, bz, ra, rb;
    };
    std::vector<Segment> segs;
    for (const auto& n : swc.nodes()) {
        if (!(n.radius > 0.0)) throw ArgumentError("dt_labels: node " + std::to_string(n.id) + " has radius <= 0");
        const SwcNode& p = n.parent == -1 ? n : swc.nodes()[swc.index_of(n.parent)];
        segs.push_back({p.x, p.y, p.z, n.x, n.y, n.z, p.radius, n.radius});
    }
    Volume out(shape[0], shape[1], shape[2]);
    for (std::size_t z = 0; z < shape[0]; ++z)
        for (std::size_t y = 0; y < shape[1]; ++y)
            for (std::size_t x = 0; x < shape[2]; ++x) {
                const double px = static_cast<double>(x), py = static_cast<double>(y), pz = static_cast<double>(z);
                double best = std::numeric_limits<double>::infinity();
                double best_r = 1.0;
                for (const auto& s : segs) {
                    const double dx = s.bx - s.ax, dy = s.by - s.ay, dz = s.bz - s.az;
                    const double len2 = dx * dx + dy * dy + dz * dz;
                    double t = 0.0;
                    if (len2 > 0.0) {
                        t = ((px - s.ax) * dx + (py - s.ay) * dy + (pz - s.az) * dz) / len2;
                        t = std::clamp(t, 0.0, 1.0);
                    }
                    const double qx = s.ax + t * dx - px, qy = s.ay + t * dy - py, qz = s.az + t * dz - pz;
                    const double d2 = qx * qx + qy * qy + qz * qz;
                    if (d2 < best) {
                        best = d2;
                        best_r = s.ra + t * (s.rb - s.ra);
                    }
                }
                const double label = 1.0 - std::sqrt(best) / (best_r * decay);
                out.at(z, y, x) = static_cast<float>(std::clamp(label, 0.0, 1.0));
            }
    return out;
}

namespace {

struct Vec3 {
    double x, y, z;
};

Vec3 normalized(Vec3 v) {
    const double n = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
    return {v.x / n, v.y / n, v.z / n};
}

class TreeBuilder {
  public:
    TreeBuilder(Rng& rng, const PhantomSpec& spec) : rng_(rng), spec_(spec) {
        const double r = spec.radius_range[1];
        lo_ = {r + 2.0, r + 2.0, std::min(2.0, (spec.size[0] - 1) / 2.0)};
        hi_ = {spec.size[2] - 1 - lo_.x, spec.size[1] - 1 - lo_.y, spec.size[0] - 1 - lo_.z};
    }

    bool inside(const Vec3& p) const {
        return p.x >= lo_.x && p.x <= hi_.x && p.y >= lo_.y && p.y <= hi_.y && p.z >= lo_.z && p.z <= hi_.z;
    }

    Vec3 random_direction() {
        const double a = rng_.uniform(0.0, 2.0 * std::numbers::pi);
        return normalized({std::cos(a), std::sin(a), 0.15 * rng_.normal()});
    }

    long add(const Vec3& p, double radius, long parent) {
        SwcNode n;
        n.id = static_cast<long>(nodes_.size()) + 1;
        n.type = parent == -1 ? 1 : 3;
        n.x = p.x;
        n.y = p.y;
        n.z = p.z;
        n.radius = radius;
        n.parent = parent;
        nodes_.push_back(n);
        return n.id;
    }

    // Straight trunk through `start` in both directions, one node per `step`.
    void trunk(const Vec3& start, const Vec3& dir, double radius, double step) {
        std::vector<Vec3> back, fwd;
        for (Vec3 p = start;;) {
            Vec3 q{p.x - step * dir.x, p.y - step * dir.y, p.z - step * dir.z};
            if (!inside(q)) break;
            back.push_back(q);
            p = q;
        }
        for (Vec3 p = start;;) {
            Vec3 q{p.x + step * dir.x, p.y + step * dir.y, p.z + step * dir.z};
            if (!inside(q)) break;
            fwd.push_back(q);
            p = q;
        }
        long prev = -1;
        for (auto it = back.rbegin(); it != back.rend(); ++it) prev = add(*it, radius, prev);
        prev = add(start, radius, prev);
        for (const auto& p : fwd) prev = add(p, radius, prev);
    }

    // A curved child branch leaving node `from`.
    void branch(std::size_t from, double step) {
        const SwcNode base = nodes_[from];
        Vec3 dir = random_direction();
        const double radius = std::min(base.radius, rng_.uniform(spec_.radius_range[0], spec_.radius_range[1]));
        const auto steps = static_cast<int>(rng_.uniform(4.0, 10.0));
        Vec3 p{base.x, base.y, base.z};
        long prev = base.id;
        for (int s = 0; s < steps; ++s) {
            dir = normalized({dir.x + 0.2 * rng_.normal(), dir.y + 0.2 * rng_.normal(), dir.z + 0.05 * rng_.normal()});
            Vec3 q{p.x + step * dir.x, p.y + step * dir.y, p.z + step * dir.z};
            if (!inside(q)) break;
            prev = add(q, radius, prev);
            p = q;
        }
    }

    Vec3 random_interior() {
        return {rng_.uniform(lo_.x, hi_.x), rng_.uniform(lo_.y, hi_.y), rng_.uniform(lo_.z, hi_.z)};
    }

    std::vector<SwcNode>& nodes() { return nodes_; }

  private:
    Rng& rng_;
    const PhantomSpec& spec_;
    Vec3 lo_{}, hi_{};
    std::vector<SwcNode> nodes_;
};

}  // namespace

Phantom gen_phantom(std::uint64_t seed, const PhantomSpec& spec) {
    const auto [lo_r, hi_r] = spec.radius_range;
    if (!(lo_r > 0.0) || !(hi_r >= lo_r) || !std::isfinite(hi_r)) {
        throw ArgumentError("gen_phantom: radius_range must satisfy 0 < lo <= hi");
    }
    if (spec.size[1] < 32 || spec.size[2] < 32 || spec.size[0] < 5) {
        throw ArgumentError("gen_phantom: size must be at least 5 x 32 x 32 (D x H x W)");
    }
    if (spec.branches < 1) throw ArgumentError("gen_phantom: at least one branch required");
    if (!(spec.noise >= 0.0)) throw ArgumentError("gen_phantom: noise must be non-negative");
    if (2.0 * (hi_r + 2.0) >= static_cast<double>(std::min(spec.size[1], spec.size[2])) - 4.0) {
        throw ArgumentError("gen_phantom: radius too large for the volume");
    }

    Rng rng(seed);
    TreeBuilder tb(rng, spec);
    const double step = 3.0;
    const Vec3 centre = tb.random_interior();
    Vec3 dir = tb.random_direction();
    tb.trunk(centre, dir, rng.uniform(lo_r, hi_r), step);
    for (std::size_t b = 1; b < spec.branches; ++b) {
        const std::size_t from = static_cast<std::size_t>(rng.below(tb.nodes().size()));
        tb.branch(from, step);
    }

    Phantom ph;
    ph.swc = SwcTree::from_nodes(std::move(tb.nodes()));
    ph.label = dt_labels(spec.size, ph.swc, spec.decay);
    ph.image = ph.label;
    for (auto& v : ph.image.voxels()) {
        const double noisy = spec.noise > 0.0 ? v + spec.noise * rng.normal() : v;
        v = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
    }
    return ph;
}

}  // namespace nt
