#include <gtest/gtest.h>

#include "neurotube/config.hpp"

using namespace nt;

TEST(KeyValues, ParsesCommentsWhitespaceAndLastWins) {
    const KeyValues kv = parse_key_values("# comment\n\n a = 1 \nb=two words\r\na=3\n");
    ASSERT_EQ(kv.size(), 2u);
    EXPECT_EQ(kv.at("a"), "3");
    EXPECT_EQ(kv.at("b"), "two words");
    EXPECT_THROW(parse_key_values("novalue\n"), ArgumentError);
    EXPECT_THROW(parse_key_values("=x\n"), ArgumentError);
}

TEST(KeyValues, FormatIsSortedAndRoundTrips) {
    const KeyValues kv{{"z", "1"}, {"a", "x=y"}, {"m", ""}};
    const std::string text = format_key_values(kv);
    EXPECT_EQ(text, "a=x=y\nm=\nz=1\n");
    EXPECT_EQ(parse_key_values(text), kv);
}

TEST(ModelConfig, RoundTripsThroughKeyValues) {
    ModelConfig c;
    c.embed_dim = 24;
    c.layers = 3;
    c.heads = 4;
    c.height = 48;
    c.width = 64;
    c.strategy = Strategy::tubular;
    c.reduction = ChannelReduction::sum;
    c.head_factors = {2, 8};
    c.seed = 123456789012345ULL;
    c.dtype = DType::f64;
    c.freeze_blocks = true;
    const ModelConfig back = ModelConfig::from_key_values(parse_key_values(format_key_values(c.to_key_values())));
    EXPECT_EQ(back.to_key_values(), c.to_key_values());
    EXPECT_EQ(back.grid_h(), 3u);
    EXPECT_EQ(back.grid_w(), 4u);
    EXPECT_EQ(back.tokens(), 12u);
}

TEST(ModelConfig, UnknownKeysIgnoredDefaultsKept) {
    const ModelConfig c = ModelConfig::from_key_values({{"train.steps", "10"}});
    EXPECT_EQ(c.to_key_values(), ModelConfig{}.to_key_values());
}

TEST(ModelConfig, ValidationRejectsInconsistentSettings) {
    auto with = [](const std::string& k, const std::string& v) {
        return ModelConfig::from_key_values({{k, v}});
    };
    EXPECT_THROW(with("model.heads", "5"), ArgumentError);
    EXPECT_THROW(with("model.depth", "4"), ArgumentError);
    EXPECT_THROW(with("model.head_factors", "4,2"), ArgumentError);
    EXPECT_THROW(with("model.embed_dim", "abc"), ArgumentError);
    EXPECT_THROW(with("model.embed_dim", "-384"), ArgumentError);
    EXPECT_THROW(with("model.layers", "2x"), ArgumentError);
    EXPECT_THROW(with("model.strategy", "inflated"), ArgumentError);
    EXPECT_THROW(with("model.reduction", "max"), ArgumentError);
    EXPECT_THROW(with("model.dtype", "f16"), ArgumentError);
    EXPECT_THROW(with("model.freeze_blocks", "yes"), ArgumentError);
    EXPECT_NO_THROW(with("model.freeze_blocks", "false"));
}

TEST(Strategy, NamesRoundTrip) {
    for (Strategy s : {Strategy::random, Strategy::average, Strategy::center, Strategy::tubular})
        EXPECT_EQ(parse_strategy(strategy_name(s)), s);
    for (ChannelReduction r : {ChannelReduction::mean, ChannelReduction::sum})
        EXPECT_EQ(parse_reduction(reduction_name(r)), r);
}
