#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "neurotube/archive.hpp"
#include "neurotube/tensor.hpp"

namespace nt {

/// Scalar 3-D image, z-major (index = (z * H + y) * W + x).
class Volume {
  public:
    Volume() = default;
    Volume(std::size_t depth, std::size_t height, std::size_t width, float fill = 0.0f);
    Volume(std::size_t depth, std::size_t height, std::size_t width, std::vector<float> voxels);

    std::size_t depth() const { return depth_; }
    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::array<std::size_t, 3> shape() const { return {depth_, height_, width_}; }
    std::size_t size() const { return voxels_.size(); }

    float at(std::size_t z, std::size_t y, std::size_t x) const { return voxels_[(z * height_ + y) * width_ + x]; }
    float& at(std::size_t z, std::size_t y, std::size_t x) { return voxels_[(z * height_ + y) * width_ + x]; }
    const std::vector<float>& voxels() const { return voxels_; }
    std::vector<float>& voxels() { return voxels_; }

    std::array<double, 3> spacing = {1.0, 1.0, 1.0};

    /// Copies [z0, z0+d) x [y0, y0+h) x [x0, x0+w) into a tensor.
    Tensor crop(std::size_t z0, std::size_t y0, std::size_t x0, std::size_t d, std::size_t h, std::size_t w,
                DType dtype = DType::f64) const;
    Tensor to_tensor(DType dtype = DType::f64) const;

    bool operator==(const Volume&) const = default;

  private:
    std::size_t depth_ = 0, height_ = 0, width_ = 0;
    std::vector<float> voxels_;
};

/// Writes "<stem>.vjson" (header) and "<stem>.vraw" (little-endian f32,
/// z-major) side by side. `path` is the .vjson path.
void save_volume(const std::filesystem::path& path, const Volume& vol);
/// Reads a .vjson header and the payload it names (relative to the header).
Volume load_volume(const std::filesystem::path& path);
/// Header-only variant used by tests: payload bytes supplied directly.
Volume decode_volume(const std::string& header_json, const std::vector<std::uint8_t>& payload);

}  // namespace nt
