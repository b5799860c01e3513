#include "hazelab/weights_io.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "hazelab/error.hpp"

namespace hazelab {
namespace {

constexpr char kMagic[4] = {'H', 'Z', 'W', '1'};

void write_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    detail::write_u32(out, bits);
}

float read_f32(std::istream& in) {
    const std::uint32_t bits = detail::read_u32(in);
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

}  // namespace

void write_weights(std::ostream& out, const Model& model) {
    out.write(kMagic, 4);
    detail::write_u32(out, static_cast<std::uint32_t>(model.params.size()));
    const char flag = model.normalization ? 1 : 0;
    out.put(flag);
    if (model.normalization) {
        for (float m : model.normalization->mean) write_f32(out, m);
        for (float s : model.normalization->std) write_f32(out, s);
    }
    for (const Param& p : model.params) {
        if (p.name.size() > 0xffff) throw ConfigError("tensor name too long: " + p.name);
        detail::write_u16(out, static_cast<std::uint16_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        write_hzt1(out, p.value);
    }
    if (!out) throw IoError("failed writing weights");
}

void save_weights(const std::filesystem::path& path, const Model& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_weights(out, model);
}

Model read_weights(std::istream& in, const ModelConfig& config) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("weights: bad magic, not an HZW1 file");
    }
    const std::uint32_t count = detail::read_u32(in);
    const int flag = in.get();
    if (flag != 0 && flag != 1) throw IoError("weights: bad normalisation flag");

    Model model = init_model(config, 0);
    if (flag == 1) {
        InputNormalization norm;
        for (float& m : norm.mean) m = read_f32(in);
        for (float& s : norm.std) {
            s = read_f32(in);
            if (!(s > 0.0f)) throw IoError("weights: normalisation std must be positive");
        }
        model.normalization = norm;
    }

    std::map<std::string, bool> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t len = detail::read_u16(in);
        std::string name(len, '\0');
        if (!in.read(name.data(), len)) throw IoError("weights: truncated tensor name");
        Tensor value = read_hzt1(in);
        Param* p = model.params.find(name);
        if (!p) {
            throw ConfigError("weights: unexpected tensor '" + name + "' for model " +
                              config.describe());
        }
        if (seen[name]) throw ConfigError("weights: tensor '" + name + "' appears twice");
        seen[name] = true;
        if (!(value.shape() == p->value.shape())) {
            throw ShapeError("weights: tensor '" + name + "' has shape " + value.shape().str() +
                             ", expected " + p->value.shape().str());
        }
        p->value = std::move(value);
    }
    for (const Param& p : model.params) {
        if (!seen[p.name]) throw ConfigError("weights: missing tensor '" + p.name + "'");
    }
    return model;
}

Model load_weights(const std::filesystem::path& path, const ModelConfig& config) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open weights " + path.string());
    return read_weights(in, config);
}

}  // namespace hazelab
