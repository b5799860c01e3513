#include "hazelab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "hazelab/error.hpp"
#include "hazelab/rng.hpp"
#include "hazelab/scene.hpp"

namespace hazelab {

using nlohmann::json;

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("manifest: cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("manifest: " + path.string() + " is not valid JSON: " + e.what());
    }
    if (!doc.is_array()) throw ConfigError("manifest: " + path.string() + " must hold a JSON list");
    const auto base = path.parent_path();
    std::vector<ManifestEntry> entries;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& item = doc[i];
        const std::string where = "manifest[" + std::to_string(i) + "]";
        auto field = [&](const char* key) -> std::string {
            if (!item.contains(key) || !item[key].is_string()) {
                throw ConfigError(where + "." + key + ": missing or not a string");
            }
            return item[key].get<std::string>();
        };
        ManifestEntry e;
        e.image = field("image");
        e.structure = field("structure");
        if (e.image.is_relative()) e.image = base / e.image;
        if (e.structure.is_relative()) e.structure = base / e.structure;
        try {
            e.kind = structure_kind_from_string(field("kind"));
        } catch (const ConfigError& err) {
            throw ConfigError(where + ".kind: " + err.what());
        }
        e.split = field("split");
        if (e.split != "train" && e.split != "val" && e.split != "test") {
            throw ConfigError(where + ".split: expected train, val or test");
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
    json doc = json::array();
    for (const auto& e : entries) {
        doc.push_back({{"image", e.image.generic_string()},
                       {"structure", e.structure.generic_string()},
                       {"kind", to_string(e.kind)},
                       {"split", e.split}});
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << doc.dump(2) << "\n";
}

Source load_source(const ManifestEntry& entry, const SourceOptions& options) {
    RgbImage image = read_ppm(entry.image);
    StructureMap structure = read_structure(entry.structure, entry.kind);
    structure.kind = entry.kind;
    if (entry.kind == StructureKind::disparity) {
        auto cropped = crop_margins(image, structure, options.crop_left, options.crop_bottom);
        image = std::move(cropped.image);
        structure = std::move(cropped.structure);
    } else if (image.height != structure.height() || image.width != structure.width()) {
        throw ShapeError("source " + entry.image.string() + ": image and structure sizes differ");
    }
    structure = fill_occlusions_nearest(structure);
    Source s;
    s.id = entry.image.stem().string();
    s.image = resize_bilinear(image, options.height, options.width);
    s.structure = resize_bilinear(structure, options.height, options.width);
    return s;
}

std::vector<Source> load_sources(std::span<const ManifestEntry> entries, const std::string& split,
                                 const SourceOptions& options) {
    std::vector<Source> out;
    for (const auto& e : entries) {
        if (e.split == split) out.push_back(load_source(e, options));
    }
    return out;
}

std::vector<Source> procedural_sources(int count, int height, int width, std::uint64_t seed,
                                       const std::string& split) {
    std::uint64_t tag = 0;
    for (char ch : split) tag = tag * 131 + static_cast<unsigned char>(ch);
    std::vector<Source> out;
    out.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int i = 0; i < count; ++i) {
        auto scene = generate_procedural_scene(hash_seed({seed, tag, static_cast<std::uint64_t>(i)}),
                                               height, width);
        char id[64];
        std::snprintf(id, sizeof id, "%s-%04d", split.c_str(), i);
        out.push_back({id, std::move(scene.image), std::move(scene.depth)});
    }
    return out;
}

void BetaSchedule::validate(const std::string& prefix) const {
    auto check = [&](const std::vector<float>& list, const char* which) {
        if (list.empty()) throw ConfigError(prefix + ": " + which + " beta list is empty");
        for (float b : list) {
            if (!(b >= 0.0f) || !std::isfinite(b)) {
                throw ConfigError(prefix + ": beta " + std::to_string(b) +
                                  " is invalid, expected a finite value >= 0");
            }
        }
    };
    check(depth, "depth");
    check(disparity, "disparity");
}

Protocol Protocol::testset_a() {
    Protocol p;
    p.name = "testsetA";
    return p;
}

Protocol Protocol::testset_b() {
    Protocol p;
    p.name = "testsetB";
    p.illumination = IlluminationRanges::grayscale();
    p.metric_depth_only = true;
    return p;
}

Protocol Protocol::by_name(const std::string& name) {
    if (name == "testsetA") return testset_a();
    if (name == "testsetB") return testset_b();
    if (name == "custom") return Protocol{};
    throw ConfigError("protocol: unknown protocol '" + name + "' (testsetA, testsetB, custom)");
}

EpochStream::EpochStream(std::span<const Source> sources, const Protocol& protocol,
                         std::uint64_t seed, std::uint64_t epoch, bool shuffle)
    : sources_(sources), protocol_(protocol), seed_(seed), epoch_(epoch) {
    if (sources.empty()) throw ConfigError("epoch_stream: empty source set");
    protocol_.betas.validate();
    protocol_.illumination.validate();
    for (std::size_t i = 0; i < sources.size(); ++i) {
        if (!protocol_.accepts(sources[i])) continue;
        const auto& betas = protocol_.betas.for_kind(sources[i].structure.kind);
        for (std::size_t b = 0; b < betas.size(); ++b) order_.push_back({i, b});
    }
    if (order_.empty()) {
        throw ConfigError("epoch_stream: no source qualifies for protocol " + protocol_.name);
    }
    if (shuffle) {
        Rng rng(hash_seed({seed, epoch, 0x5bu}));
        rng.shuffle(order_);
    }
}

HazySample EpochStream::operator[](std::size_t i) const {
    const Key k = order_.at(i);
    const Source& src = sources_[k.image];
    const float beta = protocol_.betas.for_kind(src.structure.kind)[k.beta];
    Rng rng(hash_seed({seed_, epoch_, k.image, k.beta}));
    const Illumination a = sample_illumination(protocol_.illumination, rng);
    return synthesize(src.image, src.structure, beta, a, src.id + "-b" + std::to_string(k.beta));
}

void write_sample_set(const std::filesystem::path& dir, std::span<const HazySample> samples,
                      const SampleSetInfo& info) {
    const auto sample_dir = dir / "samples";
    std::filesystem::create_directories(sample_dir);
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    for (const auto& s : samples) {
        const std::string hazy = "samples/" + s.id + "_hazy.ppm";
        const std::string clean = "samples/" + s.id + "_clean.ppm";
        const std::string trans = "samples/" + s.id + "_transmission.hzt";
        write_ppm(dir / hazy, s.hazy);
        write_ppm(dir / clean, s.clean);
        save_tensor(dir / trans, to_tensor(s.transmission));
        list.push_back({{"id", s.id},
                        {"hazy", hazy},
                        {"clean", clean},
                        {"transmission", trans},
                        {"beta", std::round(double{s.beta} * 1e6) / 1e6},
                        {"A", {s.illumination.rgb[0], s.illumination.rgb[1], s.illumination.rgb[2]}}});
    }
    nlohmann::ordered_json doc;
    doc["protocol"] = info.protocol;
    doc["seed"] = info.seed;
    doc["samples"] = std::move(list);
    std::ofstream out(dir / "samples.json");
    if (!out) throw IoError("cannot write " + (dir / "samples.json").string());
    out << doc.dump(2) << "\n";
}

bool is_sample_set(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) return false;
    try {
        const json doc = json::parse(in);
        return doc.is_object() && doc.contains("samples");
    } catch (const json::exception&) {
        return false;
    }
}

std::vector<HazySample> read_sample_set(const std::filesystem::path& samples_json,
                                        SampleSetInfo* info) {
    std::ifstream in(samples_json);
    if (!in) throw ConfigError("sample set: cannot open " + samples_json.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("sample set: invalid JSON in " + samples_json.string() + ": " + e.what());
    }
    const auto base = samples_json.parent_path();
    std::vector<HazySample> out;
    try {
        if (info) {
            info->protocol = doc.at("protocol").get<std::string>();
            info->seed = doc.at("seed").get<std::uint64_t>();
        }
        for (const auto& item : doc.at("samples")) {
            HazySample s;
            s.id = item.at("id").get<std::string>();
            s.hazy = read_ppm(base / item.at("hazy").get<std::string>());
            s.clean = read_ppm(base / item.at("clean").get<std::string>());
            const Tensor t = load_tensor(base / item.at("transmission").get<std::string>());
            s.transmission = Plane(t.shape().h, t.shape().w);
            std::copy(t.data().begin(), t.data().end(), s.transmission.data.begin());
            s.beta = item.at("beta").get<float>();
            const auto a = item.at("A").get<std::vector<float>>();
            if (a.size() != 3) throw ConfigError("sample set: A must have 3 entries for " + s.id);
            s.illumination = {{a[0], a[1], a[2]}};
            out.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw ConfigError("sample set: bad entry in " + samples_json.string() + ": " + e.what());
    }
    return out;
}

}  // namespace hazelab
