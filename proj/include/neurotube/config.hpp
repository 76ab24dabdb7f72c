#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "neurotube/tensor.hpp"

namespace nt {

/// Flat key=value configuration. Lines starting with '#' are comments;
/// keys are emitted sorted so rendered files diff cleanly.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
std::string format_key_values(const KeyValues& kv);

enum class Strategy { random, average, center, tubular };
enum class ChannelReduction { mean, sum };

Strategy parse_strategy(const std::string& name);
std::string strategy_name(Strategy s);
ChannelReduction parse_reduction(const std::string& name);
std::string reduction_name(ChannelReduction r);

struct ModelConfig {
    std::size_t embed_dim = 384;
    std::size_t layers = 12;
    std::size_t heads = 6;
    std::size_t mlp_ratio = 4;
    std::size_t depth = 5;
    std::size_t height = 100;
    std::size_t width = 100;
    Strategy strategy = Strategy::center;
    ChannelReduction reduction = ChannelReduction::mean;
    std::vector<std::size_t> head_factors = {4, 4};
    std::uint64_t seed = 0;
    DType dtype = DType::f32;
    bool freeze_blocks = false;

    static constexpr std::size_t kPatch = 16;

    std::size_t grid_h() const { return (height + kPatch - 1) / kPatch; }
    std::size_t grid_w() const { return (width + kPatch - 1) / kPatch; }
    std::size_t tokens() const { return grid_h() * grid_w(); }
    std::size_t mlp_dim() const { return embed_dim * mlp_ratio; }

    /// Throws ArgumentError when E % heads != 0, depth is even, or the head
    /// factors do not multiply to the patch size.
    void validate() const;

    KeyValues to_key_values() const;
    /// Unknown keys are ignored so model and training settings can share a file.
    static ModelConfig from_key_values(const KeyValues& kv);
};

}  // namespace nt
