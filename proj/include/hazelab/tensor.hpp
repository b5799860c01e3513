#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace hazelab {

// NCHW extent of a dense tensor.
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t numel() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

// Dense 4-D float tensor, row-major with W fastest. Value type: copies deep.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    static Tensor scalar(float value) { return Tensor({1, 1, 1, 1}, value); }

    const Shape& shape() const { return shape_; }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    float* ptr() { return data_.data(); }
    const float* ptr() const { return data_.data(); }

    std::size_t offset(int n, int c, int h, int w) const {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }
    float& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
    float at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }
    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    // Pointer to the H*W plane of channel c in batch item n.
    float* plane(int n, int c) { return data_.data() + offset(n, c, 0, 0); }
    const float* plane(int n, int c) const { return data_.data() + offset(n, c, 0, 0); }

    void fill(float value);
    bool all_finite() const;
    float item() const;

    // Bitwise comparison of shape and contents.
    bool identical(const Tensor& other) const;

private:
    Shape shape_{};
    std::vector<float> data_;
};

// Throws ShapeError with both shapes in the message when a != b.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

// HZT1 binary format: "HZT1", u32 rank (4), 4 x u32 dims, then LE float32 data.
void write_hzt1(std::ostream& out, const Tensor& t);
Tensor read_hzt1(std::istream& in);
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

namespace detail {
void write_u16(std::ostream& out, std::uint16_t v);
void write_u32(std::ostream& out, std::uint32_t v);
std::uint16_t read_u16(std::istream& in);
std::uint32_t read_u32(std::istream& in);
}  // namespace detail

}  // namespace hazelab
