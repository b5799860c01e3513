#include "hazelab/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hazelab/error.hpp"

namespace hazelab {

std::string Shape::str() const {
    std::ostringstream os;
    os << n << "x" << c << "x" << h << "x" << w;
    return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
        throw ShapeError("negative tensor dimension in " + shape.str());
    }
    data_.assign(shape.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape.numel()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape.str());
    }
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

float Tensor::item() const {
    if (data_.size() != 1) {
        throw ShapeError("item() on tensor of shape " + shape_.str());
    }
    return data_[0];
}

bool Tensor::identical(const Tensor& other) const {
    return shape_ == other.shape_ &&
           (data_.empty() ||
            std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (!(a == b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
    }
}

namespace detail {

void write_u16(std::ostream& out, std::uint16_t v) {
    const char bytes[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    out.write(bytes, 2);
}

void write_u32(std::ostream& out, std::uint32_t v) {
    char bytes[4];
    for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes, 4);
}

std::uint16_t read_u16(std::istream& in) {
    unsigned char bytes[2];
    if (!in.read(reinterpret_cast<char*>(bytes), 2)) throw IoError("unexpected end of file");
    return static_cast<std::uint16_t>(bytes[0] | (bytes[1] << 8));
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw IoError("unexpected end of file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
    return v;
}

}  // namespace detail

void write_hzt1(std::ostream& out, const Tensor& t) {
    out.write("HZT1", 4);
    detail::write_u32(out, 4);
    const Shape& s = t.shape();
    for (int d : {s.n, s.c, s.h, s.w}) detail::write_u32(out, static_cast<std::uint32_t>(d));
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(t.ptr()),
                  static_cast<std::streamsize>(t.numel() * sizeof(float)));
    } else {
        for (float v : t.data()) detail::write_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    if (!out) throw IoError("failed writing HZT1 tensor");
}

Tensor read_hzt1(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "HZT1", 4) != 0) {
        throw IoError("bad HZT1 magic");
    }
    const std::uint32_t rank = detail::read_u32(in);
    if (rank != 4) throw IoError("HZT1 rank must be 4, got " + std::to_string(rank));
    std::uint32_t dims[4];
    for (auto& d : dims) {
        d = detail::read_u32(in);
        if (d > (1u << 28)) throw IoError("HZT1 dimension out of range");
    }
    const Shape shape{static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                      static_cast<int>(dims[2]), static_cast<int>(dims[3])};
    if (shape.numel() > (std::size_t{1} << 32)) throw IoError("HZT1 tensor too large");
    std::vector<float> data(shape.numel());
    if constexpr (std::endian::native == std::endian::little) {
        if (!in.read(reinterpret_cast<char*>(data.data()),
                     static_cast<std::streamsize>(data.size() * sizeof(float)))) {
            throw IoError("truncated HZT1 payload");
        }
    } else {
        for (auto& v : data) v = std::bit_cast<float>(detail::read_u32(in));
    }
    return Tensor(shape, std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_hzt1(out, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_hzt1(in);
}

}  // namespace hazelab
