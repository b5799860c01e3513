#include "hazelab/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "hazelab/error.hpp"
#include "hazelab/weights_io.hpp"

namespace hazelab {

using nlohmann::json;

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
    if (!(adam.lr > 0.0f)) throw ConfigError("train.lr: must be positive");
    if (!(adam.beta1 >= 0.0f && adam.beta1 < 1.0f)) throw ConfigError("train.beta1: must be in [0, 1)");
    if (!(adam.beta2 >= 0.0f && adam.beta2 < 1.0f)) throw ConfigError("train.beta2: must be in [0, 1)");
    if (!(adam.eps > 0.0f)) throw ConfigError("train.eps: must be positive");
    if (patience < 1) throw ConfigError("train.patience: must be >= 1");
    if (max_epochs < 1) throw ConfigError("train.max_epochs: must be >= 1");
    if (convergence_window < 1) throw ConfigError("train.convergence_window: must be >= 1");
    if (!(convergence_threshold > 0.0)) throw ConfigError("train.convergence_threshold: must be > 0");
    protocol.betas.validate();
    protocol.illumination.validate();
}

std::uint64_t TrainConfig::hash(const ModelConfig& model) const {
    std::ostringstream s;
    s << model.describe() << "|" << batch_size << "|" << adam.lr << "|" << adam.beta1 << "|"
      << adam.beta2 << "|" << adam.eps << "|" << seed << "|" << protocol.name;
    for (float b : protocol.betas.depth) s << "," << b;
    s << "|";
    for (float b : protocol.betas.disparity) s << "," << b;
    const auto& r = protocol.illumination;
    s << "|" << r.hue.lo << "," << r.hue.hi << "," << r.saturation.lo << "," << r.saturation.hi
      << "," << r.value.lo << "," << r.value.hi;
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s.str()) h = (h ^ ch) * 0x100000001b3ULL;
    return h;
}

bool train_loss_converged(const TrainState& state, const TrainConfig& config) {
    const auto& hist = state.train_history;
    const auto window = static_cast<std::size_t>(config.convergence_window);
    if (hist.size() <= window) return false;
    const double now = hist.back();
    const double then = hist[hist.size() - 1 - window];
    if (then == 0.0) return now == 0.0;
    return std::abs(now - then) / std::abs(then) < config.convergence_threshold;
}

bool early_stop(const TrainState& state, const TrainConfig& config) {
    if (state.epoch >= config.max_epochs) return true;
    return state.epochs_since_best >= config.patience && train_loss_converged(state, config);
}

namespace {

struct Batch {
    Tensor hazy;
    Tensor clean;
    Tensor illumination;
};

Batch make_batch(std::span<const HazySample> samples) {
    std::vector<RgbImage> hazy;
    std::vector<RgbImage> clean;
    std::vector<Illumination> light;
    for (const auto& s : samples) {
        hazy.push_back(s.hazy);
        clean.push_back(s.clean);
        light.push_back(s.illumination);
    }
    return {to_tensor(hazy), to_tensor(clean), illumination_tensor(light)};
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

double dataset_loss(Model& model, std::span<const HazySample> samples, int batch_size) {
    if (samples.empty()) throw ConfigError("dataset_loss: no samples");
    double weighted = 0.0;
    for (std::size_t i = 0; i < samples.size(); i += static_cast<std::size_t>(batch_size)) {
        const auto chunk = samples.subspan(i, std::min<std::size_t>(batch_size, samples.size() - i));
        Batch b = make_batch(chunk);
        Graph g;
        Var pred = model_forward(g, b.hazy, b.illumination, model);
        const double loss = mse_loss(pred, g.constant(b.clean)).value().item();
        weighted += loss * static_cast<double>(chunk.size());
    }
    return weighted / static_cast<double>(samples.size());
}

double validation_loss(Model& model, std::span<const Source> sources, const TrainConfig& config) {
    EpochStream stream(sources, config.protocol, config.validation_seed(), 0, false);
    std::vector<HazySample> samples;
    samples.reserve(stream.size());
    for (std::size_t i = 0; i < stream.size(); ++i) samples.push_back(stream[i]);
    return dataset_loss(model, samples, config.batch_size);
}

Trainer::Trainer(Model model, std::vector<Source> train, std::vector<Source> val,
                 TrainConfig config)
    : model_(std::move(model)),
      train_(std::move(train)),
      val_(std::move(val)),
      config_(std::move(config)) {
    config_.validate();
    if (train_.empty()) throw ConfigError("train: empty training set");
    if (val_.empty()) throw ConfigError("train: empty validation set");
    best_ = model_;
}

EpochStream Trainer::stream_for(int epoch) const {
    return EpochStream(train_, config_.protocol, config_.seed, static_cast<std::uint64_t>(epoch),
                       true);
}

std::size_t Trainer::epoch_size() const { return stream_for(0).size(); }

double Trainer::step(std::span<const HazySample> batch) {
    Batch b = make_batch(batch);
    Graph g;
    Var pred = model_forward(g, b.hazy, b.illumination, model_);
    Var loss = mse_loss(pred, g.constant(b.clean));
    const double value = loss.value().item();
    if (!std::isfinite(value)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(state_.epoch) +
                           ", step " + std::to_string(state_.step) + ", batch starting at sample " +
                           std::to_string(state_.batch_cursor) + ", seed " +
                           std::to_string(config_.seed) + ", first sample " + batch.front().id);
    }
    g.backward(loss);
    adam_step(model_.params, config_.adam);
    ++state_.step;
    return value;
}

bool Trainer::advance() {
    const EpochStream stream = stream_for(state_.epoch);
    if (state_.batch_cursor >= stream.size()) return false;
    const std::size_t end =
        std::min(stream.size(), state_.batch_cursor + static_cast<std::size_t>(config_.batch_size));
    std::vector<HazySample> batch;
    for (std::size_t i = state_.batch_cursor; i < end; ++i) batch.push_back(stream[i]);
    const double loss = step(batch);
    state_.epoch_loss_sum += loss * static_cast<double>(batch.size());
    state_.epoch_samples += batch.size();
    state_.batch_cursor = end;
    return true;
}

EpochRecord Trainer::run_epoch() {
    const auto start = std::chrono::steady_clock::now();
    while (advance()) {
    }
    EpochRecord rec;
    rec.epoch = state_.epoch + 1;
    rec.train_loss = state_.epoch_loss_sum / static_cast<double>(state_.epoch_samples);
    rec.val_loss = validation_loss(model_, val_, config_);
    if (!std::isfinite(rec.val_loss)) {
        throw NumericError("non-finite validation loss after epoch " + std::to_string(rec.epoch));
    }
    state_.train_history.push_back(rec.train_loss);
    state_.val_history.push_back(rec.val_loss);
    if (rec.val_loss < state_.best_val_loss) {
        state_.best_val_loss = rec.val_loss;
        state_.epochs_since_best = 0;
        best_ = model_;
    } else {
        ++state_.epochs_since_best;
    }
    state_.epoch += 1;
    state_.batch_cursor = 0;
    state_.epoch_loss_sum = 0.0;
    state_.epoch_samples = 0;
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                      .count();
    return rec;
}

void Trainer::run(const TrainOutputs& outputs) {
    std::ofstream log;
    std::ofstream losses;
    if (outputs.dir) {
        std::filesystem::create_directories(*outputs.dir);
        const auto mode = state_.epoch == 0 && state_.batch_cursor == 0 ? std::ios::trunc : std::ios::app;
        log.open(*outputs.dir / "train_log.jsonl", std::ios::out | mode);
        losses.open(*outputs.dir / "epoch_losses.jsonl", std::ios::out | mode);
        if (!log || !losses) throw IoError("cannot write training logs in " + outputs.dir->string());
    }
    while (!early_stop(state_, config_)) {
        const EpochRecord rec = run_epoch();
        if (outputs.dir) {
            json line = {{"epoch", rec.epoch}, {"train_loss", rec.train_loss},
                         {"val_loss", rec.val_loss}, {"wall_ms", std::round(rec.wall_ms)}};
            log << line.dump() << "\n" << std::flush;
            line.erase("wall_ms");
            losses << line.dump() << "\n" << std::flush;
            if (state_.epochs_since_best == 0) save_weights(*outputs.dir / "best.hzw", best_);
            save_checkpoint(*outputs.dir / "last.ckpt");
        }
        if (outputs.on_epoch) outputs.on_epoch(rec);
    }
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
    json header = {
        {"format", "hazelab-checkpoint-1"},
        {"epoch", state_.epoch},
        {"step", state_.step},
        {"batch_cursor", state_.batch_cursor},
        {"epoch_loss_sum", state_.epoch_loss_sum},
        {"epoch_samples", state_.epoch_samples},
        {"best_val_loss", number_or_null(state_.best_val_loss)},
        {"epochs_since_best", state_.epochs_since_best},
        {"config_hash", hex64(config_.hash(model_.config))},
        {"model", model_.config.describe()},
        {"seed", config_.seed},
        {"adam_steps", model_.params.adam_steps},
        {"train_history", state_.train_history},
        {"val_history", state_.val_history},
    };
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write checkpoint " + path.string());
        out << header.dump() << "\n";
        write_weights(out, model_);
        write_weights(out, best_);
        detail::write_u32(out, static_cast<std::uint32_t>(model_.params.size()));
        for (const Param& p : model_.params) {
            write_hzt1(out, p.m);
            write_hzt1(out, p.v);
        }
        if (!out) throw IoError("failed writing checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

Trainer Trainer::resume(const std::filesystem::path& checkpoint, const ModelConfig& model_config,
                        std::vector<Source> train, std::vector<Source> val, TrainConfig config) {
    std::ifstream in(checkpoint, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + checkpoint.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError("checkpoint: missing header");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw IoError("checkpoint: corrupt header: " + std::string(e.what()));
    }
    if (header.value("format", "") != "hazelab-checkpoint-1") {
        throw IoError("checkpoint: unknown format in " + checkpoint.string());
    }
    const std::string expected = hex64(config.hash(model_config));
    if (header.value("config_hash", "") != expected) {
        throw ConfigError("resume: checkpoint was written for a different configuration (model " +
                          header.value("model", "?") + ", expected " + model_config.describe() + ")");
    }
    Model model = read_weights(in, model_config);
    Model best = read_weights(in, model_config);
    const std::uint32_t count = detail::read_u32(in);
    if (count != model.params.size()) throw IoError("checkpoint: optimizer state count mismatch");
    for (Param& p : model.params) {
        Tensor m = read_hzt1(in);
        Tensor v = read_hzt1(in);
        if (!(m.shape() == p.value.shape()) || !(v.shape() == p.value.shape())) {
            throw IoError("checkpoint: optimizer state shape mismatch for '" + p.name + "'");
        }
        p.m = std::move(m);
        p.v = std::move(v);
    }

    Trainer t(std::move(model), std::move(train), std::move(val), std::move(config));
    t.best_ = std::move(best);
    try {
        auto& s = t.state_;
        s.epoch = header.at("epoch").get<int>();
        s.step = header.at("step").get<std::int64_t>();
        s.batch_cursor = header.at("batch_cursor").get<std::size_t>();
        s.epoch_loss_sum = header.at("epoch_loss_sum").get<double>();
        s.epoch_samples = header.at("epoch_samples").get<std::size_t>();
        const auto& best_val = header.at("best_val_loss");
        s.best_val_loss = best_val.is_null() ? std::numeric_limits<double>::infinity()
                                             : best_val.get<double>();
        s.epochs_since_best = header.at("epochs_since_best").get<int>();
        s.train_history = header.at("train_history").get<std::vector<double>>();
        s.val_history = header.at("val_history").get<std::vector<double>>();
        t.model_.params.adam_steps = header.at("adam_steps").get<std::int64_t>();
    } catch (const json::exception& e) {
        throw IoError("checkpoint: bad header field: " + std::string(e.what()));
    }
    return t;
}

}  // namespace hazelab
