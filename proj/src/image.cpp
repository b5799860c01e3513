#include "hazelab/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "bilinear.hpp"
#include "hazelab/error.hpp"

namespace hazelab {

std::string to_string(StructureKind kind) {
    return kind == StructureKind::metric_depth ? "metric_depth" : "disparity";
}

StructureKind structure_kind_from_string(const std::string& s) {
    if (s == "metric_depth" || s == "depth") return StructureKind::metric_depth;
    if (s == "disparity") return StructureKind::disparity;
    throw ConfigError("unknown structure kind '" + s + "' (expected metric_depth or disparity)");
}

bool StructureMap::all_valid() const {
    return std::all_of(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; });
}

namespace {

void resize_channel(const float* in, int in_h, int in_w, float* out, int out_h, int out_w) {
    const auto ty = detail::bilinear_taps(in_h, out_h);
    const auto tx = detail::bilinear_taps(in_w, out_w);
    detail::resample_plane(in, in_h, in_w, out, out_h, out_w, ty, tx);
    const std::size_t in_count = static_cast<std::size_t>(in_h) * in_w;
    const auto [lo, hi] = std::minmax_element(in, in + in_count);
    const float a = *lo;
    const float b = *hi;
    for (std::size_t i = 0; i < static_cast<std::size_t>(out_h) * out_w; ++i) {
        out[i] = std::clamp(out[i], a, b);
    }
}

void require_target(int height, int width) {
    if (height < 1 || width < 1) {
        throw ShapeError("resize target must be at least 1x1, got " + std::to_string(height) +
                         "x" + std::to_string(width));
    }
}

}  // namespace

RgbImage resize_bilinear(const RgbImage& image, int height, int width) {
    require_target(height, width);
    RgbImage out(height, width);
    for (int c = 0; c < 3; ++c) {
        resize_channel(image.channel(c).data(), image.height, image.width, out.channel(c).data(),
                       height, width);
    }
    return out;
}

Plane resize_bilinear(const Plane& plane, int height, int width) {
    require_target(height, width);
    Plane out(height, width);
    resize_channel(plane.data.data(), plane.height, plane.width, out.data.data(), height, width);
    return out;
}

StructureMap resize_bilinear(const StructureMap& map, int height, int width) {
    if (!map.all_valid()) {
        throw ShapeError("resize_bilinear: structure map has invalid pixels; fill them first");
    }
    return StructureMap(resize_bilinear(map.values, height, width), map.kind);
}

CroppedPair crop_margins(const RgbImage& image, const StructureMap& structure, double left_frac,
                         double bottom_frac) {
    if (image.height != structure.height() || image.width != structure.width()) {
        throw ShapeError("crop_margins: image " + std::to_string(image.height) + "x" +
                         std::to_string(image.width) + " vs structure " +
                         std::to_string(structure.height()) + "x" +
                         std::to_string(structure.width()));
    }
    if (!(left_frac >= 0.0 && left_frac < 0.5) || !(bottom_frac >= 0.0 && bottom_frac < 0.5)) {
        throw ConfigError("crop_margins: fractions must lie in [0, 0.5)");
    }
    const int left = static_cast<int>(std::lround(left_frac * image.width));
    const int bottom = static_cast<int>(std::lround(bottom_frac * image.height));
    const int h = image.height - bottom;
    const int w = image.width - left;
    if (h < 64 || w < 64) {
        throw ShapeError("crop_margins: result " + std::to_string(h) + "x" + std::to_string(w) +
                         " is smaller than 64x64");
    }
    CroppedPair out{RgbImage(h, w), StructureMap(Plane(h, w), structure.kind)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) out.image.at(c, y, x) = image.at(c, y, x + left);
            out.structure.values.at(y, x) = structure.values.at(y, x + left);
            out.structure.valid[static_cast<std::size_t>(y) * w + x] =
                structure.valid[static_cast<std::size_t>(y) * image.width + x + left];
        }
    }
    return out;
}

Tensor to_tensor(std::span<const RgbImage> images) {
    if (images.empty()) throw ShapeError("to_tensor: no images");
    const int h = images[0].height;
    const int w = images[0].width;
    Tensor t({static_cast<int>(images.size()), 3, h, w});
    for (std::size_t n = 0; n < images.size(); ++n) {
        if (!images[n].same_size(images[0])) {
            throw ShapeError("to_tensor: images in a batch must share a size");
        }
        std::copy(images[n].data.begin(), images[n].data.end(), t.plane(static_cast<int>(n), 0));
    }
    return t;
}

Tensor to_tensor(const RgbImage& image) { return to_tensor(std::span<const RgbImage>(&image, 1)); }

RgbImage image_from_tensor(const Tensor& t, int n) {
    const Shape& s = t.shape();
    if (s.c != 3 || n < 0 || n >= s.n) {
        throw ShapeError("image_from_tensor: need 3 channels and valid item, got " + s.str());
    }
    RgbImage img(s.h, s.w);
    std::copy_n(t.plane(n, 0), img.data.size(), img.data.begin());
    return img;
}

Tensor to_tensor(const Plane& plane) {
    return Tensor({1, 1, plane.height, plane.width}, plane.data);
}

namespace {

// Reads the next whitespace-separated header token, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string token;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!token.empty()) break;
            continue;
        }
        token.push_back(static_cast<char>(ch));
    }
    return token;
}

struct NetpbmHeader {
    std::string magic;
    int width = 0;
    int height = 0;
    int maxval = 0;
};

NetpbmHeader read_header(std::istream& in, const std::filesystem::path& path) {
    NetpbmHeader h;
    h.magic = next_token(in);
    try {
        h.width = std::stoi(next_token(in));
        h.height = std::stoi(next_token(in));
        h.maxval = std::stoi(next_token(in));
    } catch (const std::exception&) {
        throw IoError("malformed netpbm header in " + path.string());
    }
    if (h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 65535) {
        throw IoError("invalid netpbm dimensions in " + path.string());
    }
    return h;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
    auto out = open_out(path);
    out << "P6\n" << image.width << " " << image.height << "\n255\n";
    std::vector<unsigned char> bytes(image.pixels() * 3);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
                bytes[(static_cast<std::size_t>(y) * image.width + x) * 3 + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        }
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

RgbImage read_ppm(const std::filesystem::path& path) {
    auto in = open_in(path);
    const NetpbmHeader h = read_header(in, path);
    if (h.magic != "P6") throw IoError(path.string() + " is not a binary PPM (P6)");
    const int bytes_per = h.maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(static_cast<std::size_t>(h.width) * h.height * 3 * bytes_per);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        throw IoError("truncated PPM data in " + path.string());
    }
    RgbImage img(h.height, h.width);
    const float scale = 1.0f / static_cast<float>(h.maxval);
    for (int y = 0; y < h.height; ++y) {
        for (int x = 0; x < h.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const std::size_t i = (static_cast<std::size_t>(y) * h.width + x) * 3 + c;
                const int level = bytes_per == 1 ? raw[i] : (raw[2 * i] << 8) | raw[2 * i + 1];
                img.at(c, y, x) = std::min(1.0f, static_cast<float>(level) * scale);
            }
        }
    }
    return img;
}

void write_pgm16(const std::filesystem::path& path, int height, int width,
                 std::span<const std::uint16_t> levels) {
    auto out = open_out(path);
    out << "P5\n" << width << " " << height << "\n65535\n";
    std::vector<unsigned char> bytes(levels.size() * 2);
    for (std::size_t i = 0; i < levels.size(); ++i) {
        bytes[2 * i] = static_cast<unsigned char>(levels[i] >> 8);
        bytes[2 * i + 1] = static_cast<unsigned char>(levels[i] & 0xff);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::uint16_t> read_pgm16(const std::filesystem::path& path, int& height, int& width) {
    auto in = open_in(path);
    const NetpbmHeader h = read_header(in, path);
    if (h.magic != "P5") throw IoError(path.string() + " is not a binary PGM (P5)");
    const int bytes_per = h.maxval > 255 ? 2 : 1;
    const std::size_t count = static_cast<std::size_t>(h.width) * h.height;
    std::vector<unsigned char> raw(count * bytes_per);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        throw IoError("truncated PGM data in " + path.string());
    }
    std::vector<std::uint16_t> levels(count);
    for (std::size_t i = 0; i < count; ++i) {
        levels[i] = bytes_per == 1 ? raw[i]
                                   : static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    }
    height = h.height;
    width = h.width;
    return levels;
}

void write_structure(const std::filesystem::path& path, const StructureMap& map, double scale) {
    if (!(scale > 0.0)) throw ConfigError("structure scale must be positive");
    std::vector<std::uint16_t> levels(map.values.size());
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (!map.valid[i]) {
            levels[i] = 0;
            continue;
        }
        const double level = std::round(map.values.data[i] / scale);
        levels[i] = static_cast<std::uint16_t>(std::clamp(level, 1.0, 65535.0));
    }
    write_pgm16(path, map.height(), map.width(), levels);
    nlohmann::json sidecar = {{"kind", to_string(map.kind)}, {"scale", scale}};
    auto out = open_out(path.string() + ".json");
    out << sidecar.dump(2) << "\n";
}

StructureMap read_structure(const std::filesystem::path& path, StructureKind fallback_kind) {
    if (path.extension() == ".hzt") {
        const Tensor t = load_tensor(path);
        const Shape& s = t.shape();
        if (s.n != 1 || s.c != 1) throw IoError("structure tensor must be 1x1xHxW: " + path.string());
        Plane p(s.h, s.w);
        std::copy(t.data().begin(), t.data().end(), p.data.begin());
        return StructureMap(std::move(p), fallback_kind);
    }
    int h = 0;
    int w = 0;
    const auto levels = read_pgm16(path, h, w);
    double scale = 1.0;
    StructureKind kind = fallback_kind;
    const std::filesystem::path sidecar_path = path.string() + ".json";
    if (std::filesystem::exists(sidecar_path)) {
        auto in = open_in(sidecar_path);
        try {
            const auto sidecar = nlohmann::json::parse(in);
            scale = sidecar.at("scale").get<double>();
            kind = structure_kind_from_string(sidecar.at("kind").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw IoError("bad structure sidecar " + sidecar_path.string() + ": " + e.what());
        }
    }
    StructureMap map(Plane(h, w), kind);
    for (std::size_t i = 0; i < levels.size(); ++i) {
        map.values.data[i] = static_cast<float>(levels[i] * scale);
        map.valid[i] = levels[i] != 0;
    }
    return map;
}

RgbImage hstack(std::span<const RgbImage> panels, int separator) {
    if (panels.empty()) throw ShapeError("hstack: no panels");
    const int h = panels[0].height;
    int w = 0;
    for (const auto& p : panels) {
        if (p.height != h) throw ShapeError("hstack: panel heights differ");
        w += p.width;
    }
    w += separator * static_cast<int>(panels.size() - 1);
    RgbImage out(h, w, 1.0f);
    int x0 = 0;
    for (const auto& p : panels) {
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < p.width; ++x) out.at(c, y, x0 + x) = p.at(c, y, x);
            }
        }
        x0 += p.width + separator;
    }
    return out;
}

}  // namespace hazelab
