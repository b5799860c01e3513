#include "hazelab/evaluation.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "hazelab/error.hpp"
#include "hazelab/metrics.hpp"

namespace hazelab {

std::optional<Aggregates> MetricsReport::aggregates() const {
    if (rows.empty()) return std::nullopt;
    Aggregates a;
    for (const auto& r : rows) {
        a.mse += r.mse;
        a.psnr += r.psnr;
        a.ssim += r.ssim;
    }
    const double n = static_cast<double>(rows.size());
    a.mse /= n;
    a.psnr /= n;
    a.ssim /= n;
    return a;
}

DehazeMethod identity_method() {
    return [](const HazySample& s) { return s.hazy; };
}

DehazeMethod dcp_method(const DcpOptions& options) {
    return [options](const HazySample& s) { return dcp_dehaze(s.hazy, options).image; };
}

DehazeMethod model_method(Model& model) {
    return [&model](const HazySample& s) {
        const Illumination a = s.illumination;
        const Tensor out =
            predict(to_tensor(s.hazy), illumination_tensor(std::span<const Illumination>(&a, 1)), model);
        return image_from_tensor(out);
    };
}

std::string weights_fingerprint(const Model& model) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* data, std::size_t bytes) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < bytes; ++i) h = (h ^ p[i]) * 0x100000001b3ULL;
    };
    for (const Param& p : model.params) {
        mix(p.name.data(), p.name.size());
        mix(p.value.ptr(), p.value.numel() * sizeof(float));
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

MetricsRow score_sample(const HazySample& sample, const RgbImage& prediction) {
    MetricsRow row;
    row.id = sample.id;
    row.beta = sample.beta;
    row.illumination = sample.illumination;
    row.mse = mse(prediction, sample.clean);
    row.psnr = psnr_from_mse(row.mse);
    row.ssim = ssim(prediction, sample.clean);
    return row;
}

RgbImage triptych(const RgbImage& hazy, const RgbImage& predicted, const RgbImage& clean) {
    const RgbImage panels[] = {hazy, predicted, clean};
    return hstack(panels, kTriptychSeparator);
}

MetricsReport evaluate_samples(std::span<const HazySample> samples, const DehazeMethod& method,
                               const EvalOptions& options) {
    MetricsReport report;
    if (options.triptych_dir) std::filesystem::create_directories(*options.triptych_dir);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const HazySample& s = samples[i];
        const RgbImage pred = method(s);
        if (!pred.same_size(s.clean)) {
            throw ShapeError("evaluate: method output size differs from the clean image for " + s.id);
        }
        report.rows.push_back(score_sample(s, pred));
        if (options.triptych_dir && i < options.max_triptychs) {
            write_ppm(*options.triptych_dir / (s.id + ".ppm"), triptych(s.hazy, pred, s.clean));
        }
    }
    return report;
}

MetricsReport evaluate_set(std::span<const Source> sources, const Protocol& protocol,
                           std::uint64_t seed, const DehazeMethod& method,
                           const EvalOptions& options) {
    EpochStream stream(sources, protocol, seed, 0, false);
    std::vector<HazySample> samples;
    samples.reserve(stream.size());
    for (std::size_t i = 0; i < stream.size(); ++i) samples.push_back(stream[i]);
    MetricsReport report = evaluate_samples(samples, method, options);
    report.protocol = protocol.name;
    report.seed = seed;
    return report;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_text(const std::filesystem::path& path) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

}  // namespace

void write_csv(const std::filesystem::path& path, const MetricsReport& report) {
    auto out = open_text(path);
    out << "id,beta,A_r,A_g,A_b,mse,psnr,ssim\n";
    for (const auto& r : report.rows) {
        out << r.id << "," << fmt(r.beta) << "," << fmt(r.illumination.rgb[0]) << ","
            << fmt(r.illumination.rgb[1]) << "," << fmt(r.illumination.rgb[2]) << "," << fmt(r.mse)
            << "," << fmt(r.psnr) << "," << fmt(r.ssim) << "\n";
    }
    if (!out) throw IoError("failed writing " + path.string());
}

void write_summary(const std::filesystem::path& path, const MetricsReport& report) {
    nlohmann::ordered_json doc;
    doc["protocol"] = report.protocol;
    doc["method"] = report.method;
    doc["weights_hash"] = report.weights_hash.empty() ? nlohmann::ordered_json(nullptr)
                                                     : nlohmann::ordered_json(report.weights_hash);
    doc["seed"] = report.seed;
    doc["count"] = report.rows.size();
    if (const auto agg = report.aggregates()) {
        doc["aggregates"] = {{"mse", agg->mse}, {"psnr", agg->psnr}, {"ssim", agg->ssim}};
    } else {
        doc["aggregates"] = nullptr;
    }
    auto out = open_text(path);
    out << doc.dump(2) << "\n";
    if (!out) throw IoError("failed writing " + path.string());
}

void emit_report(const MetricsReport& report, const std::filesystem::path& csv_path,
                 const std::filesystem::path& json_path) {
    write_csv(csv_path, report);
    write_summary(json_path, report);
}

std::vector<MetricsRow> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "id,beta,A_r,A_g,A_b,mse,psnr,ssim") {
        throw IoError("unexpected CSV header in " + path.string());
    }
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 8) throw IoError("malformed CSV row in " + path.string() + ": " + line);
        MetricsRow r;
        try {
            r.id = cells[0];
            r.beta = std::stof(cells[1]);
            for (int c = 0; c < 3; ++c) r.illumination.rgb[c] = std::stof(cells[2 + c]);
            r.mse = std::stod(cells[5]);
            r.psnr = std::stod(cells[6]);
            r.ssim = std::stod(cells[7]);
        } catch (const std::exception&) {
            throw IoError("malformed number in " + path.string() + ": " + line);
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace hazelab
