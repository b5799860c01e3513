#include "hazelab/commands.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>

#include "hazelab/error.hpp"
#include "hazelab/evaluation.hpp"
#include "hazelab/gradcheck.hpp"
#include "hazelab/metrics.hpp"
#include "hazelab/run_config.hpp"
#include "hazelab/training.hpp"
#include "hazelab/weights_io.hpp"

namespace hazelab {
namespace {

namespace fs = std::filesystem;

constexpr double kDepthScale = 1e-3;  // metres per PGM level

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::vector<float> beta;
};

RunConfig resolve_config(const CommonOptions& o) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (!o.beta.empty()) {
        for (float b : o.beta) {
            if (!(b >= 0.0f) || !std::isfinite(b)) {
                throw ConfigError("haze.beta: beta " + std::to_string(b) +
                                  " is invalid, expected a finite value >= 0");
            }
        }
        cfg.haze.betas.depth = o.beta;
        cfg.haze.betas.disparity = o.beta;
    }
    cfg.finalize();
    return cfg;
}

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config, "JSON run configuration");
    cmd->add_option("--seed", o.seed, "Seed for all randomness");
    cmd->add_option("--beta", o.beta, "Scattering coefficient(s), overrides haze.beta");
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

// synth --------------------------------------------------------------------

struct SynthOptions {
    CommonOptions common;
    std::string out;
    std::string preset;
    std::string split = "test";
    std::optional<int> count;
};

int cmd_synth(const SynthOptions& o, std::ostream& out) {
    RunConfig cfg = resolve_config(o.common);
    if (!o.preset.empty()) {
        const Protocol preset = Protocol::by_name(o.preset);
        cfg.haze.name = preset.name;
        cfg.haze.illumination = preset.illumination;
        cfg.haze.metric_depth_only = preset.metric_depth_only;
        cfg.finalize();
    }
    if (o.count) {
        if (*o.count < 1) throw ConfigError("--count: must be >= 1");
        if (o.split == "train") cfg.data.procedural_train = *o.count;
        else if (o.split == "val") cfg.data.procedural_val = *o.count;
        else cfg.data.procedural_test = *o.count;
    }
    if (o.split != "train" && o.split != "val" && o.split != "test") {
        throw ConfigError("--split: expected train, val or test");
    }
    const fs::path dir = o.out;
    fs::create_directories(dir);
    const std::vector<Source> sources = cfg.sources(o.split);
    if (sources.empty()) throw ConfigError("synth: no sources in split " + o.split);

    if (!cfg.data.manifest) {
        std::vector<ManifestEntry> entries;
        fs::create_directories(dir / "sources");
        for (const auto& s : sources) {
            const std::string image = "sources/" + s.id + ".ppm";
            const std::string depth = "sources/" + s.id + "_depth.pgm";
            write_ppm(dir / image, s.image);
            write_structure(dir / depth, s.structure, kDepthScale);
            entries.push_back({image, depth, s.structure.kind, o.split});
        }
        write_manifest(dir / "manifest.json", entries);
    }

    EpochStream stream(sources, cfg.haze, cfg.seed, 0, false);
    std::vector<HazySample> samples;
    for (std::size_t i = 0; i < stream.size(); ++i) samples.push_back(stream[i]);
    write_sample_set(dir, samples, {cfg.haze.name, cfg.seed});
    out << "synth: " << samples.size() << " samples from " << sources.size() << " sources ("
        << cfg.haze.name << ", seed " << cfg.seed << ") -> " << dir.string() << "\n";
    return exit_ok;
}

// train --------------------------------------------------------------------

struct TrainOptions {
    CommonOptions common;
    std::string out = "run";
    std::string resume;
    std::string manifest;
    std::optional<int> max_epochs;
};

int cmd_train(TrainOptions o, std::ostream& out) {
    RunConfig cfg = resolve_config(o.common);
    if (!o.manifest.empty()) cfg.data.manifest = o.manifest;
    if (o.max_epochs) {
        cfg.train.max_epochs = *o.max_epochs;
        cfg.finalize();
    }
    std::vector<Source> train = cfg.sources("train");
    std::vector<Source> val = cfg.sources("val");
    if (train.empty()) throw ConfigError("data: training split is empty");
    if (val.empty()) throw ConfigError("data: validation split is empty");

    auto make_trainer = [&]() {
        if (!o.resume.empty()) {
            return Trainer::resume(o.resume, cfg.model, std::move(train), std::move(val), cfg.train);
        }
        Model model = cfg.init_weights ? load_weights(*cfg.init_weights, cfg.model)
                                       : init_model(cfg.model, hash_seed({cfg.seed, 0x1417a1ULL}));
        return Trainer(std::move(model), std::move(train), std::move(val), cfg.train);
    };
    Trainer trainer = make_trainer();
    out << "train: " << trainer.epoch_size() << " samples per epoch, "
        << trainer.model().params.scalar_count() << " parameters, starting at epoch "
        << trainer.state().epoch + 1 << "\n";
    TrainOutputs outputs;
    outputs.dir = fs::path(o.out);
    outputs.on_epoch = [&out](const EpochRecord& r) {
        out << "epoch " << r.epoch << " train_loss " << fixed(r.train_loss, 6) << " val_loss "
            << fixed(r.val_loss, 6) << " wall_ms " << fixed(r.wall_ms, 0) << "\n"
            << std::flush;
    };
    trainer.run(outputs);
    save_weights(fs::path(o.out) / "final.hzw", trainer.model());
    out << "train: stopped after epoch " << trainer.state().epoch << ", best val_loss "
        << fixed(trainer.state().best_val_loss, 6) << "\n";
    return exit_ok;
}

// eval ---------------------------------------------------------------------

struct EvalArgs {
    CommonOptions common;
    std::string weights;
    std::string method;
    bool ablation = false;
    std::string manifest;
    std::string protocol;
    std::string split = "test";
    std::string out = "eval";
    std::size_t triptychs = 0;
};

int cmd_eval(const EvalArgs& o, std::ostream& out) {
    RunConfig cfg = resolve_config(o.common);
    if (!o.protocol.empty()) {
        cfg.haze = Protocol::by_name(o.protocol);
        cfg.finalize();
    }
    if (o.ablation) cfg.model.kind = ModelKind::baseline;

    std::string method_name = o.method.empty() ? (o.weights.empty() ? "identity" : "model") : o.method;
    std::optional<Model> model;
    DehazeMethod method;
    if (method_name == "identity") {
        method = identity_method();
    } else if (method_name == "dcp") {
        method = dcp_method();
    } else if (method_name == "model") {
        if (o.weights.empty()) throw ConfigError("--weights: required for --method model");
        model = load_weights(o.weights, cfg.model);
        method = model_method(*model);
        method_name = cfg.model.kind == ModelKind::baseline ? "baseline" : "model";
    } else {
        throw ConfigError("--method: expected model, identity or dcp");
    }

    EvalOptions options;
    if (o.triptychs > 0) {
        options.triptych_dir = fs::path(o.out) / "triptychs";
        options.max_triptychs = o.triptychs;
    }
    MetricsReport report;
    const fs::path manifest = o.manifest.empty() ? fs::path() : fs::path(o.manifest);
    if (!manifest.empty() && is_sample_set(manifest)) {
        SampleSetInfo info;
        const auto samples = read_sample_set(manifest, &info);
        report = evaluate_samples(samples, method, options);
        report.protocol = info.protocol;
        report.seed = info.seed;
    } else {
        if (!manifest.empty()) cfg.data.manifest = manifest;
        const auto sources = cfg.sources(o.split);
        report = evaluate_set(sources, cfg.haze, cfg.seed, method, options);
        report.seed = cfg.seed;
    }
    report.method = method_name;
    if (model) report.weights_hash = weights_fingerprint(*model);
    emit_report(report, fs::path(o.out) / "metrics.csv", fs::path(o.out) / "summary.json");
    if (const auto agg = report.aggregates()) {
        out << "eval: " << method_name << " on " << report.rows.size() << " samples ("
            << report.protocol << "): mse " << fixed(agg->mse, 6) << " psnr "
            << fixed(agg->psnr, 3) << " ssim " << fixed(agg->ssim, 4) << "\n";
    } else {
        out << "eval: no samples\n";
    }
    return exit_ok;
}

// dehaze -------------------------------------------------------------------

struct DehazeOptions {
    CommonOptions common;
    std::string weights;
    std::string input;
    std::string output;
    int size = 256;
    std::string dump_trace;
};

int cmd_dehaze(const DehazeOptions& o, std::ostream& out) {
    RunConfig cfg = resolve_config(o.common);
    if (cfg.model.kind != ModelKind::full) {
        throw ConfigError("model.kind: dehaze needs the full model (the baseline needs ground-truth illumination)");
    }
    if (o.size < 32 || o.size % 32 != 0) throw ConfigError("--size: must be a positive multiple of 32");
    const RgbImage image = read_ppm(o.input);
    Model model = load_weights(o.weights, cfg.model);
    const RgbImage resized = resize_bilinear(image, o.size, o.size);
    const ForwardTrace trace = trace_forward(to_tensor(resized), model);
    if (!trace.prediction.all_finite()) throw NumericError("dehaze: non-finite network output");
    const RgbImage restored = resize_bilinear(image_from_tensor(trace.prediction), image.height, image.width);
    write_ppm(o.output, restored);
    if (!o.dump_trace.empty()) {
        const fs::path dir = o.dump_trace;
        fs::create_directories(dir);
        save_tensor(dir / "confidence.hzt", trace.confidence);
        save_tensor(dir / "global.hzt", trace.global);
    }
    out << "dehaze: " << o.input << " -> " << o.output << " (" << image.width << "x" << image.height
        << ")\n";
    return exit_ok;
}

// gradcheck ----------------------------------------------------------------

int cmd_gradcheck(int seeds, double tolerance, std::ostream& out) {
    if (seeds < 1) throw ConfigError("--seeds: must be >= 1");
    std::vector<std::uint64_t> list;
    for (int s = 1; s <= seeds; ++s) list.push_back(static_cast<std::uint64_t>(s));
    const auto reports = run_gradcheck_suite(list, tolerance);
    bool all = true;
    char line[160];
    std::snprintf(line, sizeof line, "%-40s %12s %8s  %s\n", "operation", "max_rel_err", "elements", "result");
    out << line;
    for (const auto& r : reports) {
        std::snprintf(line, sizeof line, "%-40s %12.3e %8zu  %s\n", r.name.c_str(), r.max_rel_error,
                      r.elements_checked, r.passed ? "PASS" : "FAIL");
        out << line;
        all = all && r.passed;
    }
    out << (all ? "gradcheck: all passed" : "gradcheck: FAILURES") << " (tolerance " << tolerance << ")\n";
    return all ? exit_ok : exit_numeric;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"hazelab: semantic single-image dehazing toolkit", "hazelab"};
    app.require_subcommand(1);

    SynthOptions synth;
    auto* synth_cmd = app.add_subcommand("synth", "Synthesise a hazy dataset");
    add_common(synth_cmd, synth.common);
    synth_cmd->add_option("--out", synth.out, "Output directory")->required();
    synth_cmd->add_option("--preset", synth.preset, "testsetA, testsetB or custom");
    synth_cmd->add_option("--split", synth.split, "Source split to synthesise");
    synth_cmd->add_option("--count", synth.count, "Procedural source count");

    TrainOptions train;
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    add_common(train_cmd, train.common);
    train_cmd->add_option("--out", train.out, "Run directory for logs and checkpoints");
    train_cmd->add_option("--resume", train.resume, "Checkpoint to continue from");
    train_cmd->add_option("--manifest", train.manifest, "Source manifest (overrides data.manifest)");
    train_cmd->add_option("--max-epochs", train.max_epochs, "Epoch cap");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a method on a test set");
    add_common(eval_cmd, eval.common);
    eval_cmd->add_option("--weights", eval.weights, "HZW1 weights");
    eval_cmd->add_option("--method", eval.method, "model, identity or dcp");
    eval_cmd->add_flag("--ablation", eval.ablation, "Evaluate the baseline with true illumination");
    eval_cmd->add_option("--manifest", eval.manifest, "Source manifest or samples.json");
    eval_cmd->add_option("--protocol", eval.protocol, "testsetA, testsetB or custom");
    eval_cmd->add_option("--split", eval.split, "Split to evaluate");
    eval_cmd->add_option("--out", eval.out, "Report directory");
    eval_cmd->add_option("--triptychs", eval.triptychs, "Number of triptychs to write");

    DehazeOptions dehaze;
    auto* dehaze_cmd = app.add_subcommand("dehaze", "Dehaze one image");
    add_common(dehaze_cmd, dehaze.common);
    dehaze_cmd->add_option("--weights", dehaze.weights, "HZW1 weights")->required();
    dehaze_cmd->add_option("--input", dehaze.input, "Input PPM")->required();
    dehaze_cmd->add_option("--output", dehaze.output, "Output PPM")->required();
    dehaze_cmd->add_option("--size", dehaze.size, "Working resolution (multiple of 32)");
    dehaze_cmd->add_option("--dump-trace", dehaze.dump_trace, "Directory for confidence/global tensors");

    int seeds = 5;
    double tolerance = 1e-2;
    auto* grad_cmd = app.add_subcommand("gradcheck", "Check analytic gradients against finite differences");
    grad_cmd->add_option("--seeds", seeds, "Number of seeds");
    grad_cmd->add_option("--tolerance", tolerance, "Max relative error");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return exit_config;
    }

    try {
        if (*synth_cmd) return cmd_synth(synth, out);
        if (*train_cmd) return cmd_train(train, out);
        if (*eval_cmd) return cmd_eval(eval, out);
        if (*dehaze_cmd) return cmd_dehaze(dehaze, out);
        if (*grad_cmd) return cmd_gradcheck(seeds, tolerance, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const ShapeError& e) {
        err << "shape error: " << e.what() << "\n";
        return exit_config;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << "\n";
        return exit_io;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return exit_numeric;
    } catch (const fs::filesystem_error& e) {
        err << "i/o error: " << e.what() << "\n";
        return exit_io;
    }
    return exit_failure;
}

}  // namespace hazelab
