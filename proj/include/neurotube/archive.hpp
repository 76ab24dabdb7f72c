#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "neurotube/tensor.hpp"

namespace nt {

/// Malformed input. `offset` is a byte offset for binary formats and a
/// 1-based line number for text formats.
class ParseError : public std::runtime_error {
  public:
    ParseError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " (at " + std::to_string(offset) + ")"), offset_(offset) {}
    std::uint64_t offset() const { return offset_; }

  private:
    std::uint64_t offset_;
};

using TensorMap = std::map<std::string, Tensor>;

// DTNA tensor archive, little-endian throughout:
//   "DTNA" | u32 version (=1) | u32 count
//   count x { u16 name_len | name | u8 dtype (0=f32,1=f64) | u8 rank |
//             rank x u64 extent | payload }
inline constexpr std::uint32_t kArchiveVersion = 1;

std::vector<std::uint8_t> encode_archive(const TensorMap& tensors);
TensorMap decode_archive(const std::vector<std::uint8_t>& bytes);

void save_archive(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap load_archive(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace nt
