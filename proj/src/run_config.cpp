#include "hazelab/run_config.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "hazelab/error.hpp"

namespace hazelab {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

// Typed accessors over one JSON object that remember which keys were read.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError((path_.empty() ? "config" : path_) + ": expected an object");
    }

    bool has(const std::string& key) {
        known_.insert(key);
        return j_.contains(key);
    }
    const json& raw(const std::string& key) { return j_.at(key); }
    std::string where(const std::string& key) const { return join(path_, key); }

    void number(const std::string& key, double& out) {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (!v.is_number()) fail(key, "expected a number");
        out = v.get<double>();
    }
    void number(const std::string& key, float& out) {
        double d = out;
        number(key, d);
        out = static_cast<float>(d);
    }
    void integer(const std::string& key, int& out) {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (!v.is_number_integer()) fail(key, "expected an integer");
        out = v.get<int>();
    }
    void unsigned64(const std::string& key, std::uint64_t& out) {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
            fail(key, "expected a nonnegative integer");
        }
        out = v.get<std::uint64_t>();
    }
    void boolean(const std::string& key, bool& out) {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (!v.is_boolean()) fail(key, "expected true or false");
        out = v.get<bool>();
    }
    bool string(const std::string& key, std::string& out) {
        if (!has(key)) return false;
        const json& v = j_.at(key);
        if (!v.is_string()) fail(key, "expected a string");
        out = v.get<std::string>();
        return true;
    }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        throw ConfigError(where(key) + ": " + msg);
    }

    void reject_unknown() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!known_.contains(it.key())) {
                throw ConfigError(where(it.key()) + ": unknown key");
            }
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> known_;
};

std::vector<float> beta_list(Section& s, const std::string& key) {
    const json& v = s.raw(key);
    std::vector<float> out;
    if (v.is_number()) {
        out.push_back(v.get<float>());
    } else if (v.is_array() && !v.empty()) {
        for (const auto& item : v) {
            if (!item.is_number()) s.fail(key, "expected a number or a list of numbers");
            out.push_back(item.get<float>());
        }
    } else {
        s.fail(key, "expected a number or a nonempty list of numbers");
    }
    for (float b : out) {
        if (!(b >= 0.0f) || !std::isfinite(b)) {
            std::ostringstream m;
            m << "beta " << b << " is invalid, expected a finite value >= 0";
            s.fail(key, m.str());
        }
    }
    return out;
}

void parse_range(Section& s, const std::string& key, Range& r) {
    if (!s.has(key)) return;
    const json& v = s.raw(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
        s.fail(key, "expected [low, high]");
    }
    r.lo = v[0].get<double>();
    r.hi = v[1].get<double>();
    if (!(r.lo >= 0.0 && r.hi <= 1.0 && r.lo <= r.hi)) s.fail(key, "range must satisfy 0 <= low <= high <= 1");
}

void parse_model(const json& j, ModelConfig& model) {
    Section s(j, "model");
    std::string kind;
    if (s.string("kind", kind)) {
        if (kind == "full") model.kind = ModelKind::full;
        else if (kind == "baseline") model.kind = ModelKind::baseline;
        else s.fail("kind", "expected full or baseline");
    }
    std::string encoder;
    if (s.string("encoder", encoder)) {
        try {
            model.encoder = EncoderConfig::by_name(encoder);
        } catch (const ConfigError&) {
            s.fail("encoder", "expected tiny or vgg16");
        }
    }
    s.boolean("encoder_trainable", model.encoder.trainable);
    std::string head;
    if (s.string("head", head)) {
        if (head == "k_model") model.head = ColorHead::k_model;
        else if (head == "direct") model.head = ColorHead::direct;
        else s.fail("head", "expected k_model or direct");
    }
    s.reject_unknown();
}

void parse_data(const json& j, DataConfig& data, const std::filesystem::path& base) {
    Section s(j, "data");
    std::string manifest;
    if (s.string("manifest", manifest)) {
        std::filesystem::path p(manifest);
        data.manifest = p.is_relative() && !base.empty() ? base / p : p;
    }
    if (s.has("procedural")) {
        Section p(s.raw("procedural"), "data.procedural");
        p.integer("train", data.procedural_train);
        p.integer("val", data.procedural_val);
        p.integer("test", data.procedural_test);
        p.reject_unknown();
    }
    s.integer("height", data.sources.height);
    s.integer("width", data.sources.width);
    s.number("crop_left", data.sources.crop_left);
    s.number("crop_bottom", data.sources.crop_bottom);
    s.reject_unknown();
}

void parse_haze(const json& j, Protocol& haze) {
    Section s(j, "haze");
    std::string name;
    if (s.string("protocol", name)) {
        try {
            haze = Protocol::by_name(name);
        } catch (const ConfigError&) {
            s.fail("protocol", "expected testsetA, testsetB or custom");
        }
    }
    if (s.has("beta")) haze.betas.depth = beta_list(s, "beta");
    if (s.has("disparity_beta")) haze.betas.disparity = beta_list(s, "disparity_beta");
    if (s.has("illumination")) {
        Section il(s.raw("illumination"), "haze.illumination");
        parse_range(il, "hue", haze.illumination.hue);
        parse_range(il, "saturation", haze.illumination.saturation);
        parse_range(il, "value", haze.illumination.value);
        il.reject_unknown();
    }
    s.boolean("metric_depth_only", haze.metric_depth_only);
    s.reject_unknown();
}

void parse_train(const json& j, TrainConfig& train) {
    Section s(j, "train");
    s.integer("batch_size", train.batch_size);
    s.number("lr", train.adam.lr);
    s.number("beta1", train.adam.beta1);
    s.number("beta2", train.adam.beta2);
    s.number("eps", train.adam.eps);
    s.integer("patience", train.patience);
    s.integer("max_epochs", train.max_epochs);
    s.integer("convergence_window", train.convergence_window);
    s.number("convergence_threshold", train.convergence_threshold);
    s.reject_unknown();
}

}  // namespace

void RunConfig::finalize() {
    train.seed = seed;
    train.protocol = haze;
    model.validate();
    auto dim = [&](int v, const char* field) {
        if (v < 32 || v % 32 != 0) {
            throw ConfigError(std::string("data.") + field + ": must be a positive multiple of 32");
        }
    };
    dim(data.sources.height, "height");
    dim(data.sources.width, "width");
    if (!(data.sources.crop_left >= 0.0 && data.sources.crop_left < 0.5)) {
        throw ConfigError("data.crop_left: must be in [0, 0.5)");
    }
    if (!(data.sources.crop_bottom >= 0.0 && data.sources.crop_bottom < 0.5)) {
        throw ConfigError("data.crop_bottom: must be in [0, 0.5)");
    }
    if (data.procedural_train < 0 || data.procedural_val < 0 || data.procedural_test < 0) {
        throw ConfigError("data.procedural: counts must be >= 0");
    }
    haze.betas.validate("haze.beta");
    haze.illumination.validate("haze.illumination");
    train.validate();
}

std::vector<Source> RunConfig::sources(const std::string& split) const {
    if (data.manifest) {
        const auto entries = read_manifest(*data.manifest);
        return load_sources(entries, split, data.sources);
    }
    const int count = split == "train" ? data.procedural_train
                      : split == "val" ? data.procedural_val
                                       : data.procedural_test;
    return procedural_sources(count, data.sources.height, data.sources.width, seed, split);
}

RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    RunConfig cfg;
    Section s(doc, "");
    s.unsigned64("seed", cfg.seed);
    if (s.has("model")) parse_model(s.raw("model"), cfg.model);
    if (s.has("data")) parse_data(s.raw("data"), cfg.data, base);
    if (s.has("haze")) parse_haze(s.raw("haze"), cfg.haze);
    if (s.has("train")) parse_train(s.raw("train"), cfg.train);
    std::string init;
    if (s.string("init_weights", init)) {
        std::filesystem::path p(init);
        cfg.init_weights = p.is_relative() && !base.empty() ? base / p : p;
    }
    s.reject_unknown();
    cfg.finalize();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str(), path.parent_path());
}

}  // namespace hazelab
