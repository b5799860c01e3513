#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "hazelab/error.hpp"
#include "hazelab/training.hpp"
#include "support.hpp"

using namespace hazelab;
using testing_support::TempDir;

namespace {

const std::vector<Source>& train_sources() {
    static const auto s = procedural_sources(4, 32, 32, 11, "train");
    return s;
}

const std::vector<Source>& val_sources() {
    static const auto s = procedural_sources(2, 32, 32, 11, "val");
    return s;
}

TrainConfig small_config(std::uint64_t seed = 3) {
    TrainConfig c;
    c.seed = seed;
    c.max_epochs = 3;
    c.adam.lr = 1e-3f;
    return c;
}

Trainer make_trainer(std::uint64_t seed = 3) {
    return Trainer(init_model(ModelConfig::full("tiny"), seed), train_sources(), val_sources(), small_config(seed));
}

bool same_weights(const Model& a, const Model& b) {
    for (const auto& p : a.params) {
        if (!p.value.identical(b.params.at(p.name).value)) return false;
    }
    return true;
}

TrainState stagnant(int epochs_since_best, std::vector<double> history) {
    TrainState s;
    s.epoch = static_cast<int>(history.size());
    s.epochs_since_best = epochs_since_best;
    s.train_history = std::move(history);
    s.best_val_loss = 0.1;
    return s;
}

}  // namespace

TEST(EarlyStop, ContinuesRightAfterAnImprovement) {
    TrainConfig c;
    EXPECT_FALSE(early_stop(stagnant(0, std::vector<double>(12, 0.5)), c));
}

TEST(EarlyStop, ContinuesWhileTrainLossStillDrops) {
    TrainConfig c;
    std::vector<double> h;
    for (int i = 0; i < 12; ++i) h.push_back(std::pow(0.95, i));
    EXPECT_FALSE(train_loss_converged(stagnant(7, h), c));
    EXPECT_FALSE(early_stop(stagnant(7, h), c));
}

TEST(EarlyStop, StopsWhenStagnantAndConverged) {
    TrainConfig c;
    std::vector<double> h(9, 0.5);
    h.push_back(0.5 * (1 - 4e-4));
    EXPECT_TRUE(train_loss_converged(stagnant(7, h), c));
    EXPECT_TRUE(early_stop(stagnant(7, h), c));
    EXPECT_FALSE(early_stop(stagnant(6, h), c));
}

TEST(EarlyStop, AlwaysStopsAtMaxEpochs) {
    TrainConfig c;
    c.max_epochs = 4;
    std::vector<double> h{1.0, 0.5, 0.25, 0.125};
    EXPECT_TRUE(early_stop(stagnant(0, h), c));
}

TEST(EarlyStop, NeverFiresBeforePatience) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> loss(0.01, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        TrainConfig c;
        c.patience = 1 + static_cast<int>(rng() % 10);
        c.convergence_window = 1 + static_cast<int>(rng() % 4);
        const int epoch = static_cast<int>(rng() % c.patience);
        std::vector<double> h(epoch);
        const double flat = loss(rng);
        for (auto& v : h) v = rng() % 2 ? flat : loss(rng);
        TrainState s = stagnant(static_cast<int>(rng() % (epoch + 1)), h);
        EXPECT_FALSE(early_stop(s, c)) << "patience " << c.patience << " epoch " << epoch;
    }
}

TEST(TrainConfig, InvariantsAreEnforced) {
    TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.batch_size, 8);
    EXPECT_FLOAT_EQ(c.adam.lr, 1e-4f);
    EXPECT_EQ(c.patience, 7);
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.patience = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.convergence_threshold = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Trainer, EmptySetsAreRejected) {
    const Model m = init_model(ModelConfig::full("tiny"), 1);
    EXPECT_THROW(Trainer(m, {}, val_sources(), {}), ConfigError);
    EXPECT_THROW(Trainer(m, train_sources(), {}, {}), ConfigError);
}

TEST(Trainer, RepeatedStepsOnOneBatchReduceTheLoss) {
    Trainer t = make_trainer();
    EpochStream stream(train_sources(), Protocol::testset_a(), 1, 0, false);
    std::vector<HazySample> batch{stream[0], stream[5], stream[10]};
    const double first = t.step(batch);
    double last = first;
    for (int i = 0; i < 10; ++i) last = t.step(batch);
    EXPECT_LT(last, first);
    EXPECT_EQ(t.state().step, 11);
}

TEST(Trainer, NonFiniteLossReportsBatchAndSeed) {
    Trainer t = make_trainer(4);
    t.model().params.at("color.conv5.bias").value.fill(std::nanf(""));
    try {
        t.advance();
        FAIL();
    } catch (const NumericError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("seed 4"), std::string::npos) << what;
        EXPECT_NE(what.find("first sample"), std::string::npos) << what;
    }
}

TEST(Trainer, ValidationUsesItsOwnFixedSeed) {
    const TrainConfig c = small_config(3);
    EXPECT_NE(c.validation_seed(), c.seed);
    Model m = init_model(ModelConfig::full("tiny"), 3);
    auto loss_for = [&](std::uint64_t seed) {
        EpochStream s(val_sources(), c.protocol, seed, 0, false);
        std::vector<HazySample> samples;
        for (std::size_t i = 0; i < s.size(); ++i) samples.push_back(s[i]);
        return dataset_loss(m, samples, c.batch_size);
    };
    const double v = validation_loss(m, val_sources(), c);
    EXPECT_EQ(v, loss_for(c.validation_seed()));
    EXPECT_NE(v, loss_for(c.seed));
    EXPECT_EQ(v, validation_loss(m, val_sources(), c));
}

TEST(Trainer, EpochsAreDeterministicAndStateIsConsistent) {
    Trainer a = make_trainer();
    Trainer b = make_trainer();
    a.run();
    b.run();
    EXPECT_EQ(a.state().epoch, 3);
    EXPECT_EQ(a.state().train_history, b.state().train_history);
    EXPECT_EQ(a.state().val_history, b.state().val_history);
    EXPECT_TRUE(same_weights(a.model(), b.model()));
    const auto& vh = a.state().val_history;
    EXPECT_EQ(a.state().best_val_loss, *std::min_element(vh.begin(), vh.end()));
    EXPECT_EQ(a.state().step, 3 * static_cast<std::int64_t>((a.epoch_size() + 7) / 8));
}

TEST(Trainer, BestWeightsReproduceBestValidationLoss) {
    Trainer t = make_trainer(6);
    t.run();
    Model best = t.best_model();
    EXPECT_NEAR(validation_loss(best, val_sources(), t.config()), t.state().best_val_loss, 1e-6);
}

TEST(Trainer, OutputsAreWrittenPerEpoch) {
    TempDir dir("train_out");
    Trainer t = make_trainer();
    int calls = 0;
    t.run({dir.path(), [&](const EpochRecord&) { ++calls; }});
    EXPECT_EQ(calls, 3);
    std::ifstream in(dir / "epoch_losses.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j.at("epoch").get<int>(), ++lines);
        EXPECT_FALSE(j.contains("wall_ms"));
    }
    EXPECT_EQ(lines, 3);
    EXPECT_TRUE(std::filesystem::exists(dir / "best.hzw"));
    EXPECT_TRUE(std::filesystem::exists(dir / "last.ckpt"));
}

TEST(Checkpoint, ResumeThenOneStepMatchesUninterrupted) {
    TempDir dir("ckpt");
    Trainer a = make_trainer();
    a.run_epoch();
    ASSERT_TRUE(a.advance());
    a.save_checkpoint(dir / "mid.ckpt");
    Trainer b = Trainer::resume(dir / "mid.ckpt", ModelConfig::full("tiny"), train_sources(), val_sources(),
                                small_config());
    EXPECT_EQ(b.state().epoch, 1);
    EXPECT_EQ(b.state().batch_cursor, a.state().batch_cursor);
    EXPECT_TRUE(same_weights(a.best_model(), b.best_model()));
    ASSERT_TRUE(a.advance());
    ASSERT_TRUE(b.advance());
    EXPECT_EQ(a.state().epoch_loss_sum, b.state().epoch_loss_sum);
    EXPECT_TRUE(same_weights(a.model(), b.model()));
    const EpochRecord ra = a.run_epoch();
    const EpochRecord rb = b.run_epoch();
    EXPECT_EQ(ra.train_loss, rb.train_loss);
    EXPECT_EQ(ra.val_loss, rb.val_loss);
}

TEST(Checkpoint, HeaderIsReadable) {
    TempDir dir("ckpt_header");
    Trainer t = make_trainer();
    t.run_epoch();
    t.save_checkpoint(dir / "c.ckpt");
    std::ifstream in(dir / "c.ckpt");
    std::string line;
    std::getline(in, line);
    const auto header = nlohmann::json::parse(line);
    EXPECT_EQ(header.at("epoch").get<int>(), 1);
    EXPECT_DOUBLE_EQ(header.at("best_val_loss").get<double>(), t.state().best_val_loss);
}

TEST(Checkpoint, MismatchedConfigIsRejected) {
    TempDir dir("ckpt_mismatch");
    Trainer t = make_trainer();
    t.save_checkpoint(dir / "c.ckpt");
    EXPECT_THROW(Trainer::resume(dir / "c.ckpt", ModelConfig::baseline(), train_sources(), val_sources(),
                                 small_config()),
                 ConfigError);
    TrainConfig other = small_config();
    other.adam.lr = 5e-4f;
    EXPECT_THROW(Trainer::resume(dir / "c.ckpt", ModelConfig::full("tiny"), train_sources(), val_sources(), other),
                 ConfigError);
}

TEST(Checkpoint, CorruptFilesAreIoErrors) {
    TempDir dir("ckpt_corrupt");
    Trainer t = make_trainer();
    t.save_checkpoint(dir / "c.ckpt");
    const std::string bytes = testing_support::read_file(dir / "c.ckpt");
    testing_support::write_file(dir / "cut.ckpt", bytes.substr(0, bytes.size() / 2));
    testing_support::write_file(dir / "junk.ckpt", "not a checkpoint\n");
    for (const char* name : {"cut.ckpt", "junk.ckpt", "missing.ckpt"}) {
        EXPECT_THROW(Trainer::resume(dir / name, ModelConfig::full("tiny"), train_sources(), val_sources(),
                                     small_config()),
                     IoError)
            << name;
    }
}
