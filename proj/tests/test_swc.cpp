#include <gtest/gtest.h>

#include <cmath>

#include "neurotube/swc.hpp"
#include "test_support.hpp"

using namespace nt;

namespace {

std::uint64_t parse_line(const std::string& text) {
    try {
        parse_swc(text);
    } catch (const ParseError& e) {
        return e.offset();
    }
    ADD_FAILURE() << "expected ParseError for:\n" << text;
    return 0;
}

SwcTree random_tree(Rng& rng, std::size_t n) {
    std::vector<SwcNode> nodes;
    for (std::size_t i = 1; i <= n; ++i) {
        const long parent = i == 1 ? -1 : 1 + static_cast<long>(rng.below(i - 1));
        nodes.push_back({static_cast<long>(i), i == 1 ? 1 : 3, rng.uniform(0, 30), rng.uniform(0, 30),
                         rng.uniform(0, 10), rng.uniform(0.5, 3), parent});
    }
    return SwcTree::from_nodes(nodes);
}

SwcTree polyline(const std::vector<std::array<double, 3>>& pts) {
    std::vector<SwcNode> nodes;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        nodes.push_back({static_cast<long>(i + 1), i == 0 ? 1 : 3, pts[i][0], pts[i][1], pts[i][2], 1.0,
                         i == 0 ? -1 : static_cast<long>(i)});
    }
    return SwcTree::from_nodes(nodes);
}

double brute_nearest(const SwcNode& n, const SwcTree& t) {
    double best = 1e300;
    for (const auto& m : t.nodes())
        best = std::min(best, std::sqrt((n.x - m.x) * (n.x - m.x) + (n.y - m.y) * (n.y - m.y) + (n.z - m.z) * (n.z - m.z)));
    return best;
}

}  // namespace

TEST(SwcParse, SingleRecord) {
    const SwcTree t = parse_swc("1 1 0.5 1.5 2.5 1 -1\n");
    ASSERT_EQ(t.size(), 1u);
    EXPECT_EQ(t.nodes()[0], (SwcNode{1, 1, 0.5, 1.5, 2.5, 1.0, -1}));
    EXPECT_EQ(t.root_count(), 1u);
}

TEST(SwcParse, SkipsCommentsAndBlankLines) {
    const SwcTree t = parse_swc("# header\n\n  # indented comment\n1 1 0 0 0 1 -1\n\t\n2 3 1 0 0 1 1\n");
    ASSERT_EQ(t.size(), 2u);
    EXPECT_EQ(t.nodes()[1].parent, 1);
}

TEST(SwcParse, CanonicalWriteRoundTrips) {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const SwcTree t = random_tree(rng, 1 + rng.below(30));
        const std::string text = write_swc(t);
        const SwcTree back = parse_swc(text);
        EXPECT_EQ(back.nodes(), t.nodes());
        EXPECT_EQ(write_swc(back), text);
    }
}

TEST(SwcParse, FileRoundTrip) {
    Rng rng(2);
    const SwcTree t = random_tree(rng, 12);
    nt::testing::TempDir dir("swc");
    const auto path = (dir.path() / "t.swc").string();
    save_swc(path, t);
    EXPECT_EQ(load_swc(path).nodes(), t.nodes());
}

TEST(SwcParse, DanglingParentReportsItsLine) {
    EXPECT_EQ(parse_line("1 1 0 0 0 1 -1\n2 3 1 0 0 1 7\n"), 2u);
    EXPECT_EQ(parse_line("# c\n1 1 0 0 0 1 -1\n2 3 1 0 0 1 7\n"), 3u);
}

TEST(SwcParse, MalformedRecordsReportLines) {
    EXPECT_EQ(parse_line("1 1 0 0 0 1\n"), 1u);
    EXPECT_EQ(parse_line("1 1 0 0 0 1 -1\n2 3 a 0 0 1 1\n"), 2u);
    EXPECT_EQ(parse_line("1 1 0 0 0 1 -1 9\n"), 1u);
    EXPECT_EQ(parse_line("1 1 0 0 0 1 -1\n1 3 1 0 0 1 -1\n"), 2u);
    EXPECT_EQ(parse_line("1 1 nan 0 0 1 -1\n"), 1u);
    EXPECT_EQ(parse_line("1 1 0 0 0 1 -3\n"), 1u);
}

TEST(SwcParse, CycleWithoutRootIsRejected) {
    EXPECT_THROW(parse_swc("1 3 0 0 0 1 2\n2 3 1 0 0 1 1\n"), ParseError);
    EXPECT_THROW(SwcTree::from_nodes({{1, 3, 0, 0, 0, 1, 2}, {2, 3, 0, 0, 0, 1, 1}}), ArgumentError);
    EXPECT_THROW(SwcTree::from_nodes({{1, 1, 0, 0, 0, 1, -1}, {2, 3, 0, 0, 0, 1, 3}, {3, 3, 0, 0, 0, 1, 2}}),
                 ArgumentError);
}

TEST(SwcResample, SpacingAndLengthPreserved) {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const SwcTree t = random_tree(rng, 2 + rng.below(10));
        for (double step : {0.5, 1.0, 2.5}) {
            const SwcTree r = resample(t, step);
            EXPECT_NEAR(total_length(r), total_length(t), 1e-9 * total_length(t));
            for (const auto& n : r.nodes()) {
                if (n.parent == -1) continue;
                const auto& p = r.nodes()[r.index_of(n.parent)];
                const double len = std::hypot(n.x - p.x, n.y - p.y, n.z - p.z);
                EXPECT_LE(len, step + 1e-9);
            }
            // Every original node survives with its id and coordinates.
            for (const auto& n : t.nodes()) {
                const auto i = r.index_of(n.id);
                ASSERT_NE(i, SwcTree::npos);
                EXPECT_EQ(r.nodes()[i].x, n.x);
                EXPECT_EQ(r.nodes()[i].radius, n.radius);
            }
        }
    }
}

TEST(SwcResample, SegmentOfLengthFiveGetsFourInsertedNodes) {
    const SwcTree r = resample(polyline({{0, 0, 0}, {5, 0, 0}}), 1.0);
    ASSERT_EQ(r.size(), 6u);
    EXPECT_THROW(resample(r, 0.0), ArgumentError);
}

TEST(NeuronDistance, IdenticalTreesAreZero) {
    Rng rng(4);
    const SwcTree t = random_tree(rng, 15);
    const NeuronDistance d = neuron_distance(t, t);
    EXPECT_EQ(d.esa, 0.0);
    EXPECT_EQ(d.dsa, 0.0);
    EXPECT_EQ(d.pds, 0.0);
}

TEST(NeuronDistance, ParallelSegmentsOneApart) {
    const SwcTree a = polyline({{0, 0, 0}, {10, 0, 0}});
    const SwcTree b = polyline({{0, 1, 0}, {10, 1, 0}});
    const NeuronDistance d = neuron_distance(a, b);
    EXPECT_DOUBLE_EQ(d.esa, 1.0);
    EXPECT_EQ(d.dsa, 0.0);
    EXPECT_EQ(d.pds, 0.0);
    const NeuronDistance far = neuron_distance(a, polyline({{0, 3, 0}, {10, 3, 0}}));
    EXPECT_DOUBLE_EQ(far.esa, 3.0);
    EXPECT_DOUBLE_EQ(far.dsa, 3.0);
    EXPECT_DOUBLE_EQ(far.pds, 1.0);
}

TEST(NeuronDistance, MatchesAllPairsOracle) {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const SwcTree a = random_tree(rng, 2 + rng.below(8)), b = random_tree(rng, 2 + rng.below(8));
        const SwcTree ra = resample(a, 1.0), rb = resample(b, 1.0);
        std::vector<double> pooled;
        for (const auto& n : ra.nodes()) pooled.push_back(brute_nearest(n, rb));
        for (const auto& n : rb.nodes()) pooled.push_back(brute_nearest(n, ra));
        double sum = 0.0, far_sum = 0.0;
        std::size_t far = 0;
        for (double v : pooled) {
            sum += v;
            if (v > 2.0) {
                far_sum += v;
                ++far;
            }
        }
        const NeuronDistance d = neuron_distance(a, b);
        EXPECT_NEAR(d.esa, sum / double(pooled.size()), 1e-9);
        EXPECT_NEAR(d.dsa, far ? far_sum / double(far) : 0.0, 1e-9);
        EXPECT_NEAR(d.pds, double(far) / double(pooled.size()), 1e-12);
    }
}

TEST(NeuronDistance, SymmetricTranslationInvariantAndBounded) {
    Rng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const SwcTree a = random_tree(rng, 2 + rng.below(8)), b = random_tree(rng, 2 + rng.below(8));
        const NeuronDistance ab = neuron_distance(a, b), ba = neuron_distance(b, a);
        EXPECT_NEAR(ab.esa, ba.esa, 1e-9);
        EXPECT_NEAR(ab.dsa, ba.dsa, 1e-9);
        EXPECT_NEAR(ab.pds, ba.pds, 1e-12);
        EXPECT_GE(ab.pds, 0.0);
        EXPECT_LE(ab.pds, 1.0);
        if (ab.pds > 0.0) {
            EXPECT_GE(ab.dsa, ab.threshold);
        } else {
            EXPECT_EQ(ab.dsa, 0.0);
        }
        auto shift = [](const SwcTree& t) {
            auto nodes = t.nodes();
            for (auto& n : nodes) {
                n.x += 7.25;
                n.y -= 3.5;
                n.z += 11.0;
            }
            return SwcTree::from_nodes(nodes);
        };
        const NeuronDistance moved = neuron_distance(shift(a), shift(b));
        EXPECT_NEAR(moved.esa, ab.esa, 1e-9);
        EXPECT_NEAR(moved.pds, ab.pds, 1e-12);
    }
}

TEST(NeuronDistance, EmptyTreeIsAnError) {
    EXPECT_THROW(neuron_distance(SwcTree{}, polyline({{0, 0, 0}})), ArgumentError);
}
