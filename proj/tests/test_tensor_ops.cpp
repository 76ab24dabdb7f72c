#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "neurotube/ops.hpp"
#include "test_support.hpp"

using namespace nt;
using nt::testing::check_gradients;
using nt::testing::probe;
using nt::testing::random_tensor;

namespace {

constexpr double kTol = 1e-4;

Tensor t2(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor({r, c}, std::move(v)); }

}  // namespace

TEST(Tensor, ConstructionValidatesSize) {
    EXPECT_THROW(Tensor({2, 3}, {1.0, 2.0}), DimensionError);
    const Tensor z = Tensor::zeros({2, 2});
    EXPECT_EQ(z.numel(), 4u);
    EXPECT_EQ(Tensor::scalar(3.5).item(), 3.5);
    EXPECT_THROW(z.item(), DimensionError);
}

TEST(Tensor, HandleCopiesShareStorageCloneDoesNot) {
    Tensor a = Tensor::full({3}, 1.0);
    Tensor b = a;
    Tensor c = a.clone();
    a.mutable_data()[0] = 5.0;
    EXPECT_EQ(b.data()[0], 5.0);
    EXPECT_EQ(c.data()[0], 1.0);
    EXPECT_TRUE(a.same_storage(b));
    EXPECT_FALSE(a.same_storage(c));
}

TEST(Tensor, F32ValuesAreFloatRepresentable) {
    const Tensor a = Tensor::full({4}, 0.1, DType::f32);
    EXPECT_EQ(a.data()[0], static_cast<double>(0.1f));
    Graph g = Graph::inference();
    const Tensor s = ops::add(g, a, a);
    for (double v : s.data()) EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
    EXPECT_EQ(s.dtype(), DType::f32);
    const Tensor mixed = ops::add(g, a, Tensor::full({4}, 0.1));
    EXPECT_EQ(mixed.dtype(), DType::f64);
}

TEST(Autograd, BackwardRequiresScalarOnGraph) {
    Graph g;
    Tensor a = Tensor::full({2}, 1.0);
    a.set_requires_grad();
    const Tensor b = ops::scale(g, a, 2.0);
    EXPECT_THROW(backward(g, b), ContractError);
    Graph other;
    const Tensor s = ops::sum(other, b);  // b is not on `other`'s tape as a leaf; s is.
    EXPECT_THROW(backward(g, s), ContractError);
}

TEST(Autograd, LeafGradientsAccumulateAcrossBackwardCalls) {
    Tensor a = Tensor::full({3}, 2.0);
    a.set_requires_grad();
    for (int i = 0; i < 2; ++i) {
        Graph g;
        backward(g, ops::sum(g, ops::mul(g, a, a)));
    }
    for (double v : a.grad()) EXPECT_DOUBLE_EQ(v, 8.0);
    a.zero_grad();
    for (double v : a.grad()) EXPECT_EQ(v, 0.0);
}

TEST(Autograd, DisabledGraphRecordsNothing) {
    Graph g = Graph::inference();
    Tensor a = Tensor::full({3}, 2.0);
    a.set_requires_grad();
    const Tensor b = ops::mul(g, a, a);
    EXPECT_EQ(g.size(), 0u);
    EXPECT_FALSE(b.requires_grad());
}

TEST(Ops, MatmulMatchesTripleLoop) {
    Rng rng(1);
    const Tensor a = random_tensor(rng, {5, 7});
    const Tensor b = random_tensor(rng, {7, 3});
    Graph g = Graph::inference();
    const Tensor c = ops::matmul(g, a, b);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 7; ++k) s += a.at({i, k}) * b.at({k, j});
            EXPECT_NEAR(c.at({i, j}), s, 1e-12);
        }
    EXPECT_THROW(ops::matmul(g, a, a), DimensionError);
}

TEST(Ops, LayernormMatchesTwoPassOracle) {
    Rng rng(2);
    const Tensor x = random_tensor(rng, {4, 6}, -3.0, 3.0);
    const Tensor gamma = random_tensor(rng, {6});
    const Tensor beta = random_tensor(rng, {6});
    Graph g = Graph::inference();
    const Tensor y = ops::layernorm(g, x, gamma, beta, 1e-5);
    for (std::size_t r = 0; r < 4; ++r) {
        double mu = 0.0;
        for (std::size_t c = 0; c < 6; ++c) mu += x.at({r, c});
        mu /= 6.0;
        double var = 0.0;
        for (std::size_t c = 0; c < 6; ++c) var += (x.at({r, c}) - mu) * (x.at({r, c}) - mu);
        var /= 6.0;
        for (std::size_t c = 0; c < 6; ++c) {
            const double expect = (x.at({r, c}) - mu) / std::sqrt(var + 1e-5) * gamma.data()[c] + beta.data()[c];
            EXPECT_NEAR(y.at({r, c}), expect, 1e-12);
        }
    }
    EXPECT_THROW(ops::layernorm(g, Tensor::zeros({2, 0}), Tensor::zeros({0}), Tensor::zeros({0})), DimensionError);
}

TEST(Ops, SoftmaxRowsSumToOneAndAreShiftInvariant) {
    Rng rng(3);
    const Tensor x = random_tensor(rng, {3, 5}, -4.0, 4.0);
    Graph g = Graph::inference();
    const Tensor s = ops::softmax(g, x);
    const Tensor s2 = ops::softmax(g, ops::add_scalar(g, x, 100.0));
    for (std::size_t r = 0; r < 3; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < 5; ++c) total += s.at({r, c});
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
    EXPECT_LT(nt::testing::max_abs_diff(s, s2), 1e-12);
}

TEST(Ops, GeluMatchesTanhFormula) {
    Graph g = Graph::inference();
    const Tensor x({5}, {-3.0, -0.5, 0.0, 1.0, 2.5});
    const Tensor y = ops::gelu(g, x);
    for (std::size_t i = 0; i < 5; ++i) {
        const double v = x.data()[i];
        const double expect =
            0.5 * v * (1.0 + std::tanh(std::sqrt(2.0 / std::numbers::pi) * (v + 0.044715 * v * v * v)));
        EXPECT_NEAR(y.data()[i], expect, 1e-15);
    }
    EXPECT_EQ(y.data()[2], 0.0);
}

TEST(Ops, BceWithLogitsIsStableAndMatchesDefinition) {
    Graph g = Graph::inference();
    const Tensor z({4}, {-50.0, -1.0, 0.5, 60.0});
    const Tensor y({4}, {0.0, 1.0, 0.3, 1.0});
    const double got = ops::bce_with_logits(g, z, y).item();
    double expect = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        const double zi = z.data()[i], yi = y.data()[i];
        // log(1 + e^z) - y z, written with log1p for the oracle.
        expect += std::max(zi, 0.0) + std::log1p(std::exp(-std::abs(zi))) - yi * zi;
    }
    EXPECT_NEAR(got, expect / 4.0, 1e-12);
    EXPECT_TRUE(std::isfinite(got));
}

TEST(Ops, ShapeMismatchesRaiseDimensionError) {
    Graph g = Graph::inference();
    const Tensor a = Tensor::zeros({2, 3}), b = Tensor::zeros({3, 2});
    EXPECT_THROW(ops::add(g, a, b), DimensionError);
    EXPECT_THROW(ops::mul(g, a, b), DimensionError);
    EXPECT_THROW(ops::reshape(g, a, {4}), DimensionError);
    EXPECT_THROW(ops::slice_cols(g, a, 2, 2), DimensionError);
    EXPECT_THROW(ops::add_bias(g, a, Tensor::zeros({2})), DimensionError);
}

TEST(Ops, SliceAndConcatRoundTrip) {
    Rng rng(4);
    const Tensor a = random_tensor(rng, {3, 7});
    Graph g = Graph::inference();
    const Tensor back =
        ops::concat_cols(g, {ops::slice_cols(g, a, 0, 2), ops::slice_cols(g, a, 2, 4), ops::slice_cols(g, a, 6, 1)});
    EXPECT_EQ(nt::testing::max_abs_diff(a, back), 0.0);
}

// ---- trilinear sampling -------------------------------------------------

TEST(Trilinear, IntegerCoordinatesReturnVoxelValues) {
    Rng rng(5);
    const Tensor vol = random_tensor(rng, {3, 4, 5});
    Graph g = Graph::inference();
    const Tensor coords({2, 3}, {1.0, 2.0, 3.0, 2.0, 0.0, 4.0});
    const Tensor s = ops::trilinear_sample(g, vol, coords);
    EXPECT_EQ(s.data()[0], vol.at({1, 2, 3}));
    EXPECT_EQ(s.data()[1], vol.at({2, 0, 4}));
}

TEST(Trilinear, MatchesEightCornerOracle) {
    Rng rng(6);
    const Tensor vol = random_tensor(rng, {4, 5, 6});
    std::vector<double> c;
    for (int i = 0; i < 50; ++i) {
        c.push_back(rng.uniform(0.0, 3.0));
        c.push_back(rng.uniform(0.0, 4.0));
        c.push_back(rng.uniform(0.0, 5.0));
    }
    const Tensor coords({50, 3}, c);
    Graph g = Graph::inference();
    const Tensor s = ops::trilinear_sample(g, vol, coords);
    for (std::size_t p = 0; p < 50; ++p) {
        const double z = c[3 * p], y = c[3 * p + 1], x = c[3 * p + 2];
        double expect = 0.0;
        for (int cz = 0; cz < 2; ++cz)
            for (int cy = 0; cy < 2; ++cy)
                for (int cx = 0; cx < 2; ++cx) {
                    const double iz = std::floor(z) + cz, iy = std::floor(y) + cy, ix = std::floor(x) + cx;
                    const double w = (1.0 - std::abs(z - iz)) * (1.0 - std::abs(y - iy)) * (1.0 - std::abs(x - ix));
                    if (w <= 0.0) continue;
                    expect += w * vol.at({std::size_t(iz), std::size_t(iy), std::size_t(ix)});
                }
        EXPECT_NEAR(s.data()[p], expect, 1e-12);
    }
}

TEST(Trilinear, OutOfRangeCoordinatesClampAndHaveZeroGradient) {
    Rng rng(7);
    const Tensor vol = random_tensor(rng, {3, 3, 3});
    Tensor coords({1, 3}, {-2.0, 1.5, 7.0});
    coords.set_requires_grad();
    Graph g;
    const Tensor s = ops::trilinear_sample(g, vol, coords);
    const double expect = 0.5 * (vol.at({0, 1, 2}) + vol.at({0, 2, 2}));
    EXPECT_NEAR(s.item(), expect, 1e-15);
    backward(g, ops::sum(g, s));
    EXPECT_EQ(coords.grad()[0], 0.0);
    EXPECT_EQ(coords.grad()[2], 0.0);
    EXPECT_NE(coords.grad()[1], 0.0);
}

TEST(Trilinear, NonFiniteCoordinateIsRejected) {
    Graph g = Graph::inference();
    const Tensor vol = Tensor::zeros({2, 2, 2});
    EXPECT_THROW(ops::trilinear_sample(g, vol, Tensor({1, 3}, {0.0, std::nan(""), 0.0})), ArgumentError);
    EXPECT_THROW(ops::trilinear_sample(g, vol, Tensor::zeros({2, 2})), DimensionError);
}

TEST(Trilinear, SwappingYAndXAxesIsBitExact) {
    Rng rng(8);
    const std::size_t D = 3, N = 6;
    const Tensor vol = random_tensor(rng, {D, N, N});
    std::vector<double> swapped(vol.numel());
    for (std::size_t z = 0; z < D; ++z)
        for (std::size_t y = 0; y < N; ++y)
            for (std::size_t x = 0; x < N; ++x) swapped[(z * N + x) * N + y] = vol.at({z, y, x});
    const Tensor volT({D, N, N}, swapped);
    std::vector<double> c, cT;
    for (int i = 0; i < 40; ++i) {
        const double z = rng.uniform(0, 2), y = rng.uniform(0, 5), x = rng.uniform(0, 5);
        c.insert(c.end(), {z, y, x});
        cT.insert(cT.end(), {z, x, y});
    }
    Graph g = Graph::inference();
    const Tensor a = ops::trilinear_sample(g, vol, Tensor({40, 3}, c));
    const Tensor b = ops::trilinear_sample(g, volT, Tensor({40, 3}, cT));
    for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
}

// ---- spatial ops ----------------------------------------------------------

TEST(Ops, ExtractPatchesReplicatesEdges) {
    const std::size_t D = 2, H = 5, W = 3;
    std::vector<double> v(D * H * W);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = double(i);
    const Tensor block({D, H, W}, v);
    Graph g = Graph::inference();
    const Tensor p = ops::extract_patches(g, block, 4);
    ASSERT_EQ(p.shape(), (Shape{2, D * 16}));
    // token 1 covers rows 4..7 (rows 5..7 replicate row 4), columns 0..3.
    for (std::size_t d = 0; d < D; ++d)
        for (std::size_t r = 0; r < 4; ++r)
            for (std::size_t c = 0; c < 4; ++c) {
                const std::size_t yy = std::min<std::size_t>(4 + r, H - 1), xx = std::min<std::size_t>(c, W - 1);
                EXPECT_EQ(p.at({1, (d * 4 + r) * 4 + c}), block.at({d, yy, xx}));
            }
}

TEST(Ops, Conv2dSameMatchesDirectSum) {
    Rng rng(9);
    const Tensor x = random_tensor(rng, {2, 4, 5});
    const Tensor w = random_tensor(rng, {3, 2, 3, 3});
    const Tensor b = random_tensor(rng, {3});
    Graph g = Graph::inference();
    const Tensor y = ops::conv2d_same(g, x, w, b);
    ASSERT_EQ(y.shape(), (Shape{3, 4, 5}));
    for (std::size_t o = 0; o < 3; ++o)
        for (long i = 0; i < 4; ++i)
            for (long j = 0; j < 5; ++j) {
                double s = b.data()[o];
                for (std::size_t c = 0; c < 2; ++c)
                    for (long u = 0; u < 3; ++u)
                        for (long v = 0; v < 3; ++v) {
                            const long ii = std::clamp(i + u - 1, 0L, 3L), jj = std::clamp(j + v - 1, 0L, 4L);
                            s += w.at({o, c, std::size_t(u), std::size_t(v)}) *
                                 x.at({c, std::size_t(ii), std::size_t(jj)});
                        }
                EXPECT_NEAR(y.at({o, std::size_t(i), std::size_t(j)}), s, 1e-12);
            }
}

TEST(Ops, UpsampleNearestAndCrop) {
    const Tensor x({1, 2, 2}, {1, 2, 3, 4});
    Graph g = Graph::inference();
    const Tensor u = ops::upsample_nearest(g, x, 2);
    ASSERT_EQ(u.shape(), (Shape{1, 4, 4}));
    EXPECT_EQ(u.at({0, 1, 1}), 1.0);
    EXPECT_EQ(u.at({0, 2, 3}), 4.0);
    const Tensor c = ops::crop(g, u, 3, 2);
    ASSERT_EQ(c.shape(), (Shape{1, 3, 2}));
    EXPECT_EQ(c.at({0, 2, 1}), 3.0);
    EXPECT_THROW(ops::crop(g, u, 5, 1), DimensionError);
}

// ---- finite-difference gradient suite ----------------------------------

class OpGradient : public ::testing::Test {
  protected:
    Rng rng{42};
};

TEST_F(OpGradient, ElementwiseArithmetic) {
    const Tensor a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {3, 4}, 0.5, 2.0);
    auto r = check_gradients(
        [](Graph& g, const std::vector<Tensor>& in) {
            Tensor t = ops::add(g, in[0], in[1]);
            t = ops::mul(g, t, in[0]);
            t = ops::sub(g, t, ops::div(g, in[0], in[1]));
            t = ops::add_scalar(g, ops::scale(g, t, 1.7), 0.3);
            return probe(g, t);
        },
        {a, b});
    EXPECT_LT(r.rel_error, kTol);
}

TEST_F(OpGradient, BiasReshapeTransposeMean) {
    const Tensor a = random_tensor(rng, {3, 4}), bias = random_tensor(rng, {4});
    auto r = check_gradients(
        [](Graph& g, const std::vector<Tensor>& in) {
            Tensor t = ops::add_bias(g, in[0], in[1]);
            t = ops::transpose(g, ops::reshape(g, t, {2, 6}));
            return ops::add(g, probe(g, t), ops::mean(g, ops::mul(g, t, t)));
        },
        {a, bias});
    EXPECT_LT(r.rel_error, kTol);
}

TEST_F(OpGradient, MatmulSliceConcat) {
    const Tensor a = random_tensor(rng, {3, 5}), b = random_tensor(rng, {5, 4});
    auto r = check_gradients(
        [](Graph& g, const std::vector<Tensor>& in) {
            const Tensor c = ops::matmul(g, in[0], in[1]);
            const Tensor t = ops::concat_cols(g, {ops::slice_cols(g, c, 2, 2), ops::slice_cols(g, c, 0, 1)});
            return probe(g, t);
        },
        {a, b});
    EXPECT_LT(r.rel_error, kTol);
}

TEST_F(OpGradient, LayernormAllInputs) {
    const Tensor x = random_tensor(rng, {3, 6}, -2, 2), gm = random_tensor(rng, {6}), bt = random_tensor(rng, {6});
    auto r = check_gradients(
        [](Graph& g, const std::vector<Tensor>& in) { return probe(g, ops::layernorm(g, in[0], in[1], in[2])); },
        {x, gm, bt});
    EXPECT_LT(r.rel_error, kTol);
}

TEST_F(OpGradient, Nonlinearities) {
    const Tensor x = random_tensor(rng, {2, 5}, -2.5, 2.5);
    for (int which = 0; which < 5; ++which) {
        auto r = check_gradients(
            [which](Graph& g, const std::vector<Tensor>& in) {
                switch (which) {
                    case 0: return probe(g, ops::softmax(g, in[0]));
                    case 1: return probe(g, ops::gelu(g, in[0]));
                    case 2: return probe(g, ops::sigmoid(g, in[0]));
                    case 3: return probe(g, ops::tanh(g, in[0]));
                    default: return probe(g, ops::clamp(g, in[0], -5.0, 5.0));
                }
            },
            {x});
        EXPECT_LT(r.rel_error, kTol) << "nonlinearity " << which;
    }
}

TEST_F(OpGradient, BceWithLogits) {
    const Tensor z = random_tensor(rng, {10}, -3, 3), y = random_tensor(rng, {10}, 0, 1);
    auto r = check_gradients(
        [y](Graph& g, const std::vector<Tensor>& in) { return ops::bce_with_logits(g, in[0], y); }, {z});
    EXPECT_LT(r.rel_error, kTol);
}

TEST_F(OpGradient, TrilinearVolumeAndCoordinates) {
    const Tensor vol = random_tensor(rng, {3, 4, 5});
    std::vector<double> c;
    for (int i = 0; i < 12; ++i) {
        // keep away from integer kinks
        c.push_back(std::floor(rng.uniform(0, 2)) + rng.uniform(0.1, 0.9));
        c.push_back(std::floor(rng.uniform(0, 3)) + rng.uniform(0.1, 0.9));
        c.push_back(std::floor(rng.uniform(0, 4)) + rng.uniform(0.1, 0.9));
    }
    auto r = check_gradients(
        [](Graph& g, const std::vector<Tensor>& in) { return probe(g, ops::trilinear_sample(g, in[0], in[1])); },
        {vol, Tensor({12, 3}, c)});
    EXPECT_LT(r.rel_error, kTol);
    EXPECT_GT(r.analytic_norm, 0.0);
}

TEST_F(OpGradient, SpatialOps) {
    const Tensor block = random_tensor(rng, {2, 9, 7});
    const Tensor w = random_tensor(rng, {2, 3, 3, 3}), b = random_tensor(rng, {2});
    auto r = check_gradients(
        [](Graph& g, const std::vector<Tensor>& in) {
            const Tensor p = ops::extract_patches(g, in[0], 4);  // [6, 32]
            const Tensor fm = ops::reshape(g, ops::slice_cols(g, p, 0, 27), {3, 6, 9});
            Tensor y = ops::conv2d_same(g, ops::upsample_nearest(g, fm, 2), in[1], in[2]);
            y = ops::crop(g, y, 10, 15);
            return probe(g, y);
        },
        {block, w, b});
    EXPECT_LT(r.rel_error, kTol);
}
