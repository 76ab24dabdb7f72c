#include "neurotube/volume.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace nt {

Volume::Volume(std::size_t depth, std::size_t height, std::size_t width, float fill)
    : depth_(depth), height_(height), width_(width), voxels_(depth * height * width, fill) {
    if (depth == 0 || height == 0 || width == 0) throw DimensionError("volume: extents must be >= 1");
}

Volume::Volume(std::size_t depth, std::size_t height, std::size_t width, std::vector<float> voxels)
    : depth_(depth), height_(height), width_(width), voxels_(std::move(voxels)) {
    if (depth == 0 || height == 0 || width == 0) throw DimensionError("volume: extents must be >= 1");
    if (voxels_.size() != depth * height * width) {
        throw DimensionError("volume: " + std::to_string(voxels_.size()) + " voxels for shape " +
                             shape_str({depth, height, width}));
    }
    for (float v : voxels_)
        if (!std::isfinite(v)) throw ArgumentError("volume: non-finite voxel");
}

Tensor Volume::crop(std::size_t z0, std::size_t y0, std::size_t x0, std::size_t d, std::size_t h, std::size_t w,
                    DType dtype) const {
    if (z0 + d > depth_ || y0 + h > height_ || x0 + w > width_) throw DimensionError("volume: crop out of bounds");
    std::vector<double> out(d * h * w);
    for (std::size_t z = 0; z < d; ++z)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) out[(z * h + y) * w + x] = at(z0 + z, y0 + y, x0 + x);
    return Tensor({d, h, w}, std::move(out), dtype);
}

Tensor Volume::to_tensor(DType dtype) const { return crop(0, 0, 0, depth_, height_, width_, dtype); }

namespace {

std::array<std::size_t, 3> parse_header(const nlohmann::json& j, std::array<double, 3>& spacing) {
    if (!j.contains("shape") || !j["shape"].is_array() || j["shape"].size() != 3) {
        throw ParseError("volume header: 'shape' must be [D,H,W]", 0);
    }
    std::array<std::size_t, 3> shape{};
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& e = j["shape"][i];
        if (!e.is_number_integer() || e.get<long long>() < 1) {
            throw ParseError("volume header: extent " + std::to_string(i) + " must be a positive integer", 0);
        }
        shape[i] = e.get<std::size_t>();
    }
    if (j.value("dtype", std::string("f32")) != "f32") throw ParseError("volume header: dtype must be \"f32\"", 0);
    if (j.contains("spacing")) {
        if (!j["spacing"].is_array() || j["spacing"].size() != 3) {
            throw ParseError("volume header: 'spacing' must have 3 entries", 0);
        }
        for (std::size_t i = 0; i < 3; ++i) spacing[i] = j["spacing"][i].get<double>();
    }
    return shape;
}

}  // namespace

Volume decode_volume(const std::string& header_json, const std::vector<std::uint8_t>& payload) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(header_json);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("volume header: ") + e.what(), e.byte);
    }
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    const auto shape = parse_header(j, spacing);
    const std::size_t n = shape[0] * shape[1] * shape[2];
    if (payload.size() != n * sizeof(float)) {
        throw ParseError("volume payload: expected " + std::to_string(n * sizeof(float)) + " bytes, got " +
                             std::to_string(payload.size()),
                         std::min(payload.size(), n * sizeof(float)));
    }
    std::vector<float> voxels(n);
    std::memcpy(voxels.data(), payload.data(), payload.size());
    Volume v(shape[0], shape[1], shape[2], std::move(voxels));
    v.spacing = spacing;
    return v;
}

void save_volume(const std::filesystem::path& path, const Volume& vol) {
    auto raw = path;
    raw.replace_extension(".vraw");
    nlohmann::ordered_json j;
    j["shape"] = {vol.depth(), vol.height(), vol.width()};
    j["dtype"] = "f32";
    j["spacing"] = {vol.spacing[0], vol.spacing[1], vol.spacing[2]};
    j["data"] = raw.filename().string();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump() << '\n';
    std::vector<std::uint8_t> bytes(vol.size() * sizeof(float));
    std::memcpy(bytes.data(), vol.voxels().data(), bytes.size());
    write_file_bytes(raw, bytes);
}

Volume load_volume(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string header = ss.str();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(header);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("volume header: ") + e.what(), e.byte);
    }
    if (!j.contains("data") || !j["data"].is_string()) throw ParseError("volume header: missing 'data' path", 0);
    const auto raw = path.parent_path() / j["data"].get<std::string>();
    return decode_volume(header, read_file_bytes(raw));
}

}  // namespace nt
