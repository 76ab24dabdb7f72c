#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "neurotube/volume.hpp"

namespace nt {

/// Raised when a distance between masks is undefined (an empty mask).
struct UndefinedDistance : std::domain_error {
    using std::domain_error::domain_error;
};

/// Binary voxel set over a (D, H, W) grid, z-major.
class BinaryMask {
  public:
    BinaryMask(std::array<std::size_t, 3> shape, std::vector<std::uint8_t> bits);
    explicit BinaryMask(std::array<std::size_t, 3> shape);
    static BinaryMask from_volume(const Volume& vol, double threshold = 0.5);

    const std::array<std::size_t, 3>& shape() const { return shape_; }
    const std::vector<std::uint8_t>& bits() const { return bits_; }
    bool at(std::size_t z, std::size_t y, std::size_t x) const { return bits_[index(z, y, x)] != 0; }
    void set(std::size_t z, std::size_t y, std::size_t x, bool on = true) { bits_[index(z, y, x)] = on ? 1 : 0; }
    std::size_t count() const;
    bool empty() const { return count() == 0; }

  private:
    std::size_t index(std::size_t z, std::size_t y, std::size_t x) const { return (z * shape_[1] + y) * shape_[2] + x; }
    std::array<std::size_t, 3> shape_;
    std::vector<std::uint8_t> bits_;
};

/// 2|A∩B| / (|A|+|B|); 1.0 when both masks are empty.
double dice(const BinaryMask& a, const BinaryMask& b);

/// Euclidean distance from each foreground voxel of `from` to the nearest
/// foreground voxel of `to`, in index order of `from`.
std::vector<double> directed_distances(const BinaryMask& from, const BinaryMask& to);

/// 95th percentile (linear interpolation between order statistics) of the
/// pooled distances A->B and B->A.
double hd95(const BinaryMask& a, const BinaryMask& b);

/// Largest pooled nearest distance (classic Hausdorff distance).
double hausdorff(const BinaryMask& a, const BinaryMask& b);

/// Linear-interpolation percentile of `values` (q in [0, 100]).
double percentile(std::vector<double> values, double q);

struct SegmentationScore {
    std::string volume_id;
    double dice = 0.0;
    double hd95 = 0.0;
    double threshold = 0.5;
};

void write_score_header(std::ostream& out);
void write_score_row(std::ostream& out, const SegmentationScore& s);

}  // namespace nt
