#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "neurotube/distance.hpp"
#include "neurotube/metrics.hpp"
#include "test_support.hpp"

using namespace nt;

namespace {

using Shape3 = std::array<std::size_t, 3>;

BinaryMask random_mask(Rng& rng, const Shape3& s, double density) {
    BinaryMask m(s);
    for (std::size_t z = 0; z < s[0]; ++z)
        for (std::size_t y = 0; y < s[1]; ++y)
            for (std::size_t x = 0; x < s[2]; ++x) m.set(z, y, x, rng.uniform(0, 1) < density);
    return m;
}

std::vector<std::array<double, 3>> points(const BinaryMask& m) {
    std::vector<std::array<double, 3>> p;
    const auto& s = m.shape();
    for (std::size_t z = 0; z < s[0]; ++z)
        for (std::size_t y = 0; y < s[1]; ++y)
            for (std::size_t x = 0; x < s[2]; ++x)
                if (m.at(z, y, x)) p.push_back({double(z), double(y), double(x)});
    return p;
}

std::vector<double> brute_directed(const BinaryMask& a, const BinaryMask& b) {
    const auto pa = points(a), pb = points(b);
    std::vector<double> out;
    for (const auto& p : pa) {
        double best = 1e300;
        for (const auto& q : pb)
            best = std::min(best, std::hypot(p[0] - q[0], p[1] - q[1], p[2] - q[2]));
        out.push_back(best);
    }
    return out;
}

// Percentile by the textbook definition, computed independently of the
// library helper.
double oracle_percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q / 100.0 * double(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

BinaryMask shifted(const BinaryMask& m, std::size_t dz, std::size_t dy, std::size_t dx) {
    const auto& s = m.shape();
    BinaryMask out({s[0] + dz, s[1] + dy, s[2] + dx});
    for (std::size_t z = 0; z < s[0]; ++z)
        for (std::size_t y = 0; y < s[1]; ++y)
            for (std::size_t x = 0; x < s[2]; ++x)
                if (m.at(z, y, x)) out.set(z + dz, y + dy, x + dx);
    return out;
}

BinaryMask padded(const BinaryMask& m, std::size_t dz, std::size_t dy, std::size_t dx) {
    const auto& s = m.shape();
    BinaryMask out({s[0] + dz, s[1] + dy, s[2] + dx});
    for (std::size_t z = 0; z < s[0]; ++z)
        for (std::size_t y = 0; y < s[1]; ++y)
            for (std::size_t x = 0; x < s[2]; ++x)
                if (m.at(z, y, x)) out.set(z, y, x);
    return out;
}

}  // namespace

TEST(Dice, IdenticalDisjointAndEmpty) {
    Rng rng(1);
    const BinaryMask a = random_mask(rng, {4, 5, 6}, 0.3);
    EXPECT_EQ(dice(a, a), 1.0);
    BinaryMask inv({4, 5, 6});
    for (std::size_t z = 0; z < 4; ++z)
        for (std::size_t y = 0; y < 5; ++y)
            for (std::size_t x = 0; x < 6; ++x) inv.set(z, y, x, !a.at(z, y, x));
    EXPECT_EQ(dice(a, inv), 0.0);
    EXPECT_EQ(dice(BinaryMask({2, 2, 2}), BinaryMask({2, 2, 2})), 1.0);
    EXPECT_THROW(dice(a, BinaryMask({4, 5, 7})), DimensionError);
}

TEST(Dice, MatchesSetOracle) {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const BinaryMask a = random_mask(rng, {3, 7, 5}, 0.4), b = random_mask(rng, {3, 7, 5}, 0.4);
        std::size_t inter = 0, na = 0, nb = 0;
        for (std::size_t i = 0; i < a.bits().size(); ++i) {
            inter += a.bits()[i] && b.bits()[i];
            na += a.bits()[i];
            nb += b.bits()[i];
        }
        EXPECT_NEAR(dice(a, b), 2.0 * double(inter) / double(na + nb), 1e-15);
        EXPECT_EQ(dice(a, b), dice(b, a));
    }
}

TEST(Mask, FromVolumeThresholdsInclusive) {
    Volume v(1, 1, 3);
    v.at(0, 0, 0) = 0.49f;
    v.at(0, 0, 1) = 0.5f;
    v.at(0, 0, 2) = 0.9f;
    const BinaryMask m = BinaryMask::from_volume(v);
    EXPECT_FALSE(m.at(0, 0, 0));
    EXPECT_TRUE(m.at(0, 0, 1));
    EXPECT_EQ(m.count(), 2u);
    EXPECT_EQ(BinaryMask({1, 1, 2}, {0, 7}).bits()[1], 1);
    EXPECT_THROW(BinaryMask({1, 1, 2}, {0}), DimensionError);
}

TEST(DistanceTransform, MatchesBruteForce) {
    Rng rng(3);
    const Shape3 s{5, 6, 7};
    const BinaryMask m = random_mask(rng, s, 0.1);
    const auto dt = squared_distance_transform(m.bits(), s);
    const auto pts = points(m);
    ASSERT_FALSE(pts.empty());
    for (std::size_t z = 0; z < s[0]; ++z)
        for (std::size_t y = 0; y < s[1]; ++y)
            for (std::size_t x = 0; x < s[2]; ++x) {
                double best = 1e300;
                for (const auto& p : pts) {
                    const double dz = p[0] - double(z), dy = p[1] - double(y), dx = p[2] - double(x);
                    best = std::min(best, dz * dz + dy * dy + dx * dx);
                }
                EXPECT_EQ(dt[(z * s[1] + y) * s[2] + x], best);
            }
}

TEST(Hd95, IdenticalMasksAreZero) {
    Rng rng(4);
    const BinaryMask a = random_mask(rng, {6, 6, 6}, 0.2);
    EXPECT_EQ(hd95(a, a), 0.0);
    EXPECT_EQ(hausdorff(a, a), 0.0);
}

TEST(Hd95, SingletonsThreeApart) {
    BinaryMask a({1, 1, 8}), b({1, 1, 8});
    a.set(0, 0, 1);
    b.set(0, 0, 4);
    EXPECT_DOUBLE_EQ(hd95(a, b), 3.0);
    EXPECT_DOUBLE_EQ(hausdorff(a, b), 3.0);
}

TEST(Hd95, MatchesAllPairsOracleOnRandomMasks) {
    Rng rng(5);
    for (int trial = 0; trial < 25; ++trial) {
        const Shape3 s{1 + rng.below(16), 1 + rng.below(16), 1 + rng.below(16)};
        const double density = rng.uniform(0.02, 0.3);
        BinaryMask a = random_mask(rng, s, density), b = random_mask(rng, s, density);
        a.set(0, 0, 0);
        b.set(s[0] - 1, s[1] - 1, s[2] - 1);
        auto pooled = brute_directed(a, b);
        const auto back = brute_directed(b, a);
        pooled.insert(pooled.end(), back.begin(), back.end());
        EXPECT_NEAR(hd95(a, b), oracle_percentile(pooled, 95.0), 1e-9);
        EXPECT_NEAR(hausdorff(a, b), *std::max_element(pooled.begin(), pooled.end()), 1e-9);
        const auto directed = directed_distances(a, b);
        const auto expect = brute_directed(a, b);
        ASSERT_EQ(directed.size(), expect.size());
        for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(directed[i], expect[i], 1e-12);
    }
}

TEST(Hd95, BoundedSymmetricAndTranslationInvariant) {
    Rng rng(6);
    for (int trial = 0; trial < 15; ++trial) {
        const Shape3 s{6, 9, 8};
        BinaryMask a = random_mask(rng, s, 0.15), b = random_mask(rng, s, 0.15);
        a.set(1, 1, 1);
        b.set(2, 3, 4);
        const double h = hd95(a, b);
        EXPECT_GE(h, 0.0);
        EXPECT_LE(h, hausdorff(a, b));
        EXPECT_EQ(h, hd95(b, a));
        EXPECT_NEAR(hd95(shifted(a, 2, 1, 3), shifted(b, 2, 1, 3)), h, 1e-12);
        EXPECT_NEAR(hd95(padded(a, 3, 0, 2), padded(b, 3, 0, 2)), h, 1e-12);
    }
}

TEST(Hd95, EmptyMaskIsUndefined) {
    BinaryMask a({2, 2, 2}), b({2, 2, 2});
    b.set(0, 0, 0);
    EXPECT_THROW(hd95(a, b), UndefinedDistance);
    EXPECT_THROW(hd95(b, a), UndefinedDistance);
    EXPECT_THROW(hd95(a, a), UndefinedDistance);
    EXPECT_THROW(hausdorff(a, b), UndefinedDistance);
}

TEST(Percentile, LinearInterpolation) {
    EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, 5}, 50), 3.0);
    EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 50), 2.5);
    EXPECT_DOUBLE_EQ(percentile({0, 10}, 95), 9.5);
    EXPECT_DOUBLE_EQ(percentile({7}, 95), 7.0);
    EXPECT_DOUBLE_EQ(percentile({3, 1, 2}, 100), 3.0);
    EXPECT_DOUBLE_EQ(percentile({3, 1, 2}, 0), 1.0);
    EXPECT_THROW(percentile({}, 50), UndefinedDistance);
    EXPECT_THROW(percentile({1.0}, 101), ArgumentError);
}

TEST(ScoreCsv, HeaderAndRowFormat) {
    std::ostringstream out;
    write_score_header(out);
    write_score_row(out, {"vol_3", 0.75, 1.5, 0.5});
    EXPECT_EQ(out.str(), "volume_id,dice,hd95,threshold\nvol_3,0.75,1.5,0.5\n");
}
