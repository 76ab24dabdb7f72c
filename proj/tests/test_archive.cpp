#include <gtest/gtest.h>

#include <cstring>

#include "neurotube/archive.hpp"
#include "test_support.hpp"

using namespace nt;

namespace {

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
    b.push_back(std::uint8_t(v & 0xFF));
    b.push_back(std::uint8_t(v >> 8));
}
void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(std::uint8_t(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(std::uint8_t(v >> (8 * i)));
}

// Hand-assembled archive with one f32 [2] tensor named "w".
std::vector<std::uint8_t> handmade(std::uint32_t count_field = 1) {
    std::vector<std::uint8_t> b{'D', 'T', 'N', 'A'};
    put_u32(b, 1);
    put_u32(b, count_field);
    put_u16(b, 1);
    b.push_back('w');
    b.push_back(0);  // f32
    b.push_back(1);  // rank
    put_u64(b, 2);
    for (float f : {1.5f, -2.25f}) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(b, bits);
    }
    return b;
}

template <class Fn>
std::uint64_t parse_offset(Fn&& fn) {
    try {
        fn();
    } catch (const ParseError& e) {
        return e.offset();
    }
    ADD_FAILURE() << "expected ParseError";
    return ~std::uint64_t{0};
}

TensorMap random_map(Rng& rng, std::size_t n) {
    TensorMap m;
    for (std::size_t i = 0; i < n; ++i) {
        Shape s(rng.below(6));
        for (auto& e : s) e = 1 + rng.below(4);
        const DType dt = rng.below(2) ? DType::f64 : DType::f32;
        std::vector<double> v(shape_numel(s));
        for (auto& x : v) x = rng.normal() * 1e3;
        m["t" + std::to_string(i) + (rng.below(2) ? ".w" : ".bias")] = Tensor(s, v, dt);
    }
    return m;
}

void expect_bit_equal(const TensorMap& a, const TensorMap& b) {
    ASSERT_EQ(a.size(), b.size());
    for (const auto& [name, t] : a) {
        ASSERT_TRUE(b.contains(name)) << name;
        const Tensor& u = b.at(name);
        EXPECT_EQ(t.shape(), u.shape()) << name;
        EXPECT_EQ(t.dtype(), u.dtype()) << name;
        EXPECT_EQ(std::memcmp(t.data().data(), u.data().data(), t.numel() * sizeof(double)), 0) << name;
    }
}

}  // namespace

TEST(Archive, EmptyMapRoundTrips) {
    const auto bytes = encode_archive({});
    EXPECT_EQ(bytes.size(), 12u);
    EXPECT_TRUE(decode_archive(bytes).empty());
}

TEST(Archive, DecodesHandAssembledBytes) {
    const TensorMap m = decode_archive(handmade());
    ASSERT_EQ(m.size(), 1u);
    const Tensor& w = m.at("w");
    EXPECT_EQ(w.dtype(), DType::f32);
    EXPECT_EQ(w.shape(), (Shape{2}));
    EXPECT_EQ(w.data()[0], 1.5);
    EXPECT_EQ(w.data()[1], -2.25);
    EXPECT_EQ(encode_archive(m), handmade());
}

TEST(Archive, F32TensorRoundTripIsBitIdentical) {
    Rng rng(3);
    std::vector<double> v(6);
    for (auto& x : v) x = rng.normal();
    TensorMap m{{"x", Tensor({2, 3}, v, DType::f32)}};
    nt::testing::TempDir dir("archive");
    save_archive(dir.path() / "a.dtna", m);
    expect_bit_equal(m, load_archive(dir.path() / "a.dtna"));
}

TEST(Archive, FuzzedMapsRoundTripBitExact) {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const TensorMap m = random_map(rng, rng.below(6));
        const auto bytes = encode_archive(m);
        const TensorMap back = decode_archive(bytes);
        expect_bit_equal(m, back);
        EXPECT_EQ(encode_archive(back), bytes);
    }
}

TEST(Archive, CorruptedMagicReportsOffsetZero) {
    auto b = handmade();
    b[1] = 'X';
    EXPECT_EQ(parse_offset([&] { decode_archive(b); }), 0u);
}

TEST(Archive, VersionMismatchReportsVersionField) {
    auto b = handmade();
    b[4] = 2;
    EXPECT_EQ(parse_offset([&] { decode_archive(b); }), 4u);
}

TEST(Archive, EveryTruncationIsRejected) {
    const auto full = handmade();
    for (std::size_t n = 0; n < full.size(); ++n) {
        std::vector<std::uint8_t> cut(full.begin(), full.begin() + long(n));
        EXPECT_THROW(decode_archive(cut), ParseError) << "length " << n;
    }
}

TEST(Archive, TruncatedPayloadNamesTensor) {
    auto b = handmade();
    b.pop_back();
    try {
        decode_archive(b);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("'w'"), std::string::npos);
    }
}

TEST(Archive, DuplicateNameRejectedAtSecondEntry) {
    auto b = handmade(2);
    const auto one = handmade();
    b.insert(b.end(), one.begin() + 12, one.end());
    EXPECT_EQ(parse_offset([&] { decode_archive(b); }), one.size());
}

TEST(Archive, TrailingBytesAndUnknownDtypeRejected) {
    auto b = handmade();
    b.push_back(0);
    EXPECT_THROW(decode_archive(b), ParseError);
    auto c = handmade();
    c[12 + 2 + 1] = 7;  // dtype byte
    EXPECT_EQ(parse_offset([&] { decode_archive(c); }), 15u);
}

TEST(Archive, EncodeRejectsEmptyName) { EXPECT_THROW(encode_archive({{"", Tensor::zeros({1})}}), ArgumentError); }
