#include "neurotube/distance.hpp"

#include <algorithm>
#include <limits>

namespace nt {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1-D squared distance transform of a sampled function (Felzenszwalb &
// Huttenlocher). `f` and `out` have `n` entries; scratch buffers reused.
void dt1d(const double* f, double* out, std::size_t n, std::vector<std::size_t>& v, std::vector<double>& z) {
    v.resize(n);
    z.resize(n + 1);
    std::size_t k = 0;
    std::size_t first = n;
    for (std::size_t q = 0; q < n; ++q)
        if (f[q] < kInf) {
            first = q;
            break;
        }
    if (first == n) {
        for (std::size_t q = 0; q < n; ++q) out[q] = kInf;
        return;
    }
    v[0] = first;
    z[0] = -kInf;
    z[1] = kInf;
    for (std::size_t q = first + 1; q < n; ++q) {
        if (f[q] == kInf) continue;
        const double qd = static_cast<double>(q);
        double s;
        while (true) {
            const double vk = static_cast<double>(v[k]);
            s = ((f[q] + qd * qd) - (f[v[k]] + vk * vk)) / (2.0 * qd - 2.0 * vk);
            if (s <= z[k] && k > 0) {
                --k;
                continue;
            }
            break;
        }
        if (s <= z[k]) {
            // k == 0 and the new parabola dominates everywhere.
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (std::size_t q = 0; q < n; ++q) {
        const double qd = static_cast<double>(q);
        while (z[k + 1] < qd) ++k;
        const double d = qd - static_cast<double>(v[k]);
        out[q] = d * d + f[v[k]];
    }
}

}  // namespace

std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& features,
                                               const std::array<std::size_t, 3>& shape) {
    const auto [D, H, W] = shape;
    std::vector<double> g(features.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = features[i] ? 0.0 : kInf;
    std::vector<std::size_t> v;
    std::vector<double> z;
    const std::size_t longest = std::max({D, H, W});
    std::vector<double> line(longest), res(longest);

    auto pass = [&](std::size_t n, std::size_t stride, auto&& starts) {
        for (std::size_t base : starts) {
            for (std::size_t i = 0; i < n; ++i) line[i] = g[base + i * stride];
            dt1d(line.data(), res.data(), n, v, z);
            for (std::size_t i = 0; i < n; ++i) g[base + i * stride] = res[i];
        }
    };
    std::vector<std::size_t> starts;
    // x lines
    starts.clear();
    for (std::size_t zz = 0; zz < D; ++zz)
        for (std::size_t y = 0; y < H; ++y) starts.push_back((zz * H + y) * W);
    pass(W, 1, starts);
    // y lines
    starts.clear();
    for (std::size_t zz = 0; zz < D; ++zz)
        for (std::size_t x = 0; x < W; ++x) starts.push_back(zz * H * W + x);
    pass(H, W, starts);
    // z lines
    starts.clear();
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) starts.push_back(y * W + x);
    pass(D, H * W, starts);
    return g;
}

}  // namespace nt
