#include "neurotube/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace nt {
namespace {

static_assert(std::endian::native == std::endian::little, "archive codec assumes a little-endian host");

class Writer {
  public:
    template <class T>
    void put(T v) {
        std::uint8_t raw[sizeof(T)];
        std::memcpy(raw, &v, sizeof(T));
        bytes_.insert(bytes_.end(), raw, raw + sizeof(T));
    }
    void put_bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes_.insert(bytes_.end(), b, b + n);
    }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

  private:
    std::vector<std::uint8_t> bytes_;
};

class Reader {
  public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    template <class T>
    T get(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_string(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    const std::uint8_t* take(std::size_t n, const char* what) {
        need(n, what);
        const auto* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == bytes_.size(); }

  private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw ParseError(std::string("archive: truncated while reading ") + what, pos_);
        }
    }
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_archive(const TensorMap& tensors) {
    Writer w;
    w.put_bytes("DTNA", 4);
    w.put<std::uint32_t>(kArchiveVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (name.empty()) throw ArgumentError("archive: empty tensor name");
        if (name.size() > 0xFFFF) throw ArgumentError("archive: tensor name too long: " + name.substr(0, 32));
        if (t.rank() > 0xFF) throw ArgumentError("archive: rank too large for " + name);
        w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
        w.put_bytes(name.data(), name.size());
        w.put<std::uint8_t>(static_cast<std::uint8_t>(t.dtype()));
        w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
        for (auto e : t.shape()) w.put<std::uint64_t>(e);
        if (t.dtype() == DType::f32) {
            for (double v : t.data()) w.put<float>(static_cast<float>(v));
        } else {
            for (double v : t.data()) w.put<double>(v);
        }
    }
    return w.take();
}

TensorMap decode_archive(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    const std::string magic = r.get_string(4, "magic");
    if (magic != "DTNA") throw ParseError("archive: bad magic", 0);
    const std::size_t version_at = r.pos();
    const auto version = r.get<std::uint32_t>("version");
    if (version != kArchiveVersion) {
        throw ParseError("archive: unsupported version " + std::to_string(version), version_at);
    }
    const auto count = r.get<std::uint32_t>("entry count");
    TensorMap out;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t entry_at = r.pos();
        const auto name_len = r.get<std::uint16_t>("name length");
        if (name_len == 0) throw ParseError("archive: empty tensor name", entry_at);
        std::string name = r.get_string(name_len, "name");
        const std::size_t dtype_at = r.pos();
        const auto dtype_code = r.get<std::uint8_t>("dtype");
        if (dtype_code > 1) throw ParseError("archive: unknown dtype code " + std::to_string(dtype_code), dtype_at);
        const auto dtype = static_cast<DType>(dtype_code);
        const auto rank = r.get<std::uint8_t>("rank");
        Shape shape(rank);
        std::uint64_t n = 1;
        for (auto& e : shape) {
            e = r.get<std::uint64_t>("extent");
            if (e != 0 && n > (std::uint64_t{1} << 48) / e) throw ParseError("archive: tensor too large", r.pos());
            n *= e;
        }
        const std::size_t width = dtype == DType::f32 ? 4 : 8;
        if (n > (bytes.size() - r.pos()) / width) {
            throw ParseError("archive: truncated payload for '" + name + "'", r.pos());
        }
        const std::uint8_t* payload = r.take(n * width, "payload");
        std::vector<double> values(n);
        for (std::size_t k = 0; k < n; ++k) {
            if (dtype == DType::f32) {
                float f;
                std::memcpy(&f, payload + 4 * k, 4);
                values[k] = f;
            } else {
                std::memcpy(&values[k], payload + 8 * k, 8);
            }
        }
        if (out.contains(name)) throw ParseError("archive: duplicate tensor name '" + name + "'", entry_at);
        out.emplace(std::move(name), Tensor(std::move(shape), std::move(values), dtype));
    }
    if (!r.done()) throw ParseError("archive: trailing bytes after last entry", r.pos());
    return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

void save_archive(const std::filesystem::path& path, const TensorMap& tensors) {
    write_file_bytes(path, encode_archive(tensors));
}

TensorMap load_archive(const std::filesystem::path& path) { return decode_archive(read_file_bytes(path)); }

}  // namespace nt
