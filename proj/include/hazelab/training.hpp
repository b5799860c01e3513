#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hazelab/dataset.hpp"
#include "hazelab/network.hpp"
#include "hazelab/optim.hpp"

namespace hazelab {

struct TrainConfig {
    int batch_size = 8;
    AdamConfig adam;
    int patience = 7;
    int max_epochs = 200;
    int convergence_window = 3;
    double convergence_threshold = 1e-3;
    std::uint64_t seed = 0;
    // Haze applied to training and validation sources.
    Protocol protocol = Protocol::testset_a();

    std::uint64_t validation_seed() const { return hash_seed({seed, 0x7a11dULL}); }
    void validate() const;
    // Hash over everything that must match for a checkpoint to be resumable.
    std::uint64_t hash(const ModelConfig& model) const;
};

struct TrainState {
    int epoch = 0;                  // completed epochs
    std::int64_t step = 0;          // Adam updates so far
    std::size_t batch_cursor = 0;   // next sample index within the current epoch
    double epoch_loss_sum = 0.0;    // sample-weighted partial sum for the current epoch
    std::size_t epoch_samples = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    int epochs_since_best = 0;
    std::vector<double> train_history;
    std::vector<double> val_history;
};

// Stop when the epoch-mean training loss changed by less than the threshold
// (relative) over the convergence window and validation has not improved for
// `patience` epochs; always stop at max_epochs.
bool early_stop(const TrainState& state, const TrainConfig& config);
bool train_loss_converged(const TrainState& state, const TrainConfig& config);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double wall_ms = 0.0;
};

// Pixel MSE of the unclamped prediction, averaged over a sample set.
double dataset_loss(Model& model, std::span<const HazySample> samples, int batch_size);
// Loss on the validation stream: fixed seed, epoch 0, no shuffling.
double validation_loss(Model& model, std::span<const Source> sources, const TrainConfig& config);

struct TrainOutputs {
    // When set: train_log.jsonl, epoch_losses.jsonl, best.hzw and last.ckpt are written here.
    std::optional<std::filesystem::path> dir;
    std::function<void(const EpochRecord&)> on_epoch;
};

class Trainer {
public:
    Trainer(Model model, std::vector<Source> train, std::vector<Source> val, TrainConfig config);

    // Restores weights, optimizer moments and loop state from a checkpoint.
    // Throws ConfigError if the checkpoint was written for another config.
    static Trainer resume(const std::filesystem::path& checkpoint, const ModelConfig& model_config,
                          std::vector<Source> train, std::vector<Source> val, TrainConfig config);

    // One Adam update on the given samples; returns the batch loss.
    double step(std::span<const HazySample> batch);
    // Trains on the next batch of the current epoch; false once the epoch is exhausted.
    bool advance();
    // Finishes the current epoch (from the cursor on), validates and records it.
    EpochRecord run_epoch();
    // Epochs until early_stop; writes outputs after every epoch.
    void run(const TrainOutputs& outputs = {});

    void save_checkpoint(const std::filesystem::path& path) const;

    Model& model() { return model_; }
    const Model& best_model() const { return best_; }
    const TrainState& state() const { return state_; }
    const TrainConfig& config() const { return config_; }
    std::size_t epoch_size() const;

private:
    EpochStream stream_for(int epoch) const;

    Model model_;
    Model best_;
    std::vector<Source> train_;
    std::vector<Source> val_;
    TrainConfig config_;
    TrainState state_;
};

}  // namespace hazelab
