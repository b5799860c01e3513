// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.
//
//   acceptance [--work-dir DIR] [--only 1,5,7]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hazelab/dataset.hpp"
#include "hazelab/dcp.hpp"
#include "hazelab/evaluation.hpp"
#include "hazelab/gradcheck.hpp"
#include "hazelab/haze.hpp"
#include "hazelab/metrics.hpp"
#include "hazelab/training.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace hazelab;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradTolerance = 1e-2;
constexpr int kGradSeeds = 5;
constexpr double kGradBudgetSeconds = 60.0;
constexpr double kRoundTripTolerance = 1e-5;
constexpr int kRoundTripTriples = 1000;
constexpr double kPoolTolerance = 1e-6;
constexpr int kPoolInputs = 100;
constexpr double kSsimIdentityTolerance = 1e-9;
constexpr double kPsnrTolerance = 1e-6;
constexpr double kSsimClosedFormTolerance = 1e-6;
constexpr double kOverfitTarget = 1e-3;
constexpr int kOverfitSteps = 2000;
constexpr float kOverfitLr = 1e-4f;
constexpr double kOverfitBudgetMinutes = 15.0;
constexpr double kAblationIdentityMargin = 3.0;
constexpr double kAblationBaselineMargin = 0.5;
constexpr double kAblationBudgetHours = 2.0;
constexpr int kAblationEpochs = 60;
constexpr double kDcpIlluminationTolerance = 0.1;
constexpr int kDcpScenes = 20;
constexpr int kDcpRequiredWins = 18;

struct Outcome {
    bool passed = false;
    std::string detail;
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, pattern, args...);
    return buf;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi) {
    Tensor t(shape);
    for (float& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

// 1 -------------------------------------------------------------------------

Outcome gradient_oracle() {
    const auto start = Clock::now();
    std::vector<std::uint64_t> seeds;
    for (int s = 1; s <= kGradSeeds; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
    const auto reports = run_gradcheck_suite(seeds, kGradTolerance);
    const double elapsed = seconds_since(start);
    double worst = 0.0;
    std::string worst_name;
    std::set<std::string> failed;
    for (const auto& r : reports) {
        if (r.max_rel_error > worst) {
            worst = r.max_rel_error;
            worst_name = r.name;
        }
        if (!r.passed) failed.insert(r.name);
    }
    const std::vector<std::string> required{"conv2d", "relu", "maxpool2", "upsample2_bilinear", "concat_channels",
                                            "softmax_spatial", "weighted_global_pool", "broadcast_spatial",
                                            "mse_loss", "k_head"};
    std::string missing;
    for (const auto& op : required) {
        const bool covered = std::any_of(reports.begin(), reports.end(),
                                         [&](const GradCheckReport& r) { return r.name.rfind(op, 0) == 0; });
        if (!covered) missing += " " + op;
    }
    const bool ok = failed.empty() && missing.empty() && elapsed < kGradBudgetSeconds;
    return {ok, fmt("%zu checks over %d seeds, worst %.2e (%s), %zu failed,%s %.1f s", reports.size(), kGradSeeds,
                    worst, worst_name.c_str(), failed.size(), missing.empty() ? "" : (" missing" + missing).c_str(),
                    elapsed)};
}

// 2 -------------------------------------------------------------------------

Outcome physical_round_trip() {
    Rng rng(hash_seed({2, 0xacce97ULL}));
    double worst = 0.0;
    for (int i = 0; i < kRoundTripTriples; ++i) {
        RgbImage clean(1, 1);
        for (float& v : clean.data) v = static_cast<float>(rng.uniform(0.05, 0.95));
        const Illumination a{{static_cast<float>(rng.uniform(0.0, 1.0)), static_cast<float>(rng.uniform(0.0, 1.0)),
                              static_cast<float>(rng.uniform(0.0, 1.0))}};
        const Plane t(1, 1, static_cast<float>(rng.uniform(0.1, 1.0)));
        const RgbImage back = invert_haze(compose_haze(clean, t, a), t, a);
        for (std::size_t k = 0; k < 3; ++k) worst = std::max(worst, double(std::abs(back.data[k] - clean.data[k])));
    }
    return {worst < kRoundTripTolerance, fmt("%d triples, max abs error %.3e", kRoundTripTriples, worst)};
}

// 3 -------------------------------------------------------------------------

Outcome limit_cases() {
    const RgbImage clean = testing_support::uniform_image(16, 16, 31);
    const Illumination a{{0.83f, 0.61f, 0.72f}};
    const RgbImage clear = compose_haze(clean, Plane(16, 16, 1.0f), a);
    const bool clear_exact = clear.data == clean.data;
    const RgbImage opaque = compose_haze(clean, Plane(16, 16, 0.0f), a);
    bool opaque_exact = true;
    for (int c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < opaque.pixels(); ++i) {
            opaque_exact = opaque_exact && opaque.data[c * opaque.pixels() + i] == a.rgb[c];
        }
    }
    StructureMap disparity(Plane(4, 4, 3.0f), StructureKind::disparity);
    disparity.values.at(1, 2) = 0.0f;
    const Plane t = transmission(disparity, 0.5f);
    const bool sky = t.at(1, 2) == 0.0f && t.at(0, 0) > 0.0f;
    return {clear_exact && opaque_exact && sky,
            fmt("t=1 exact %s, t=0 exact %s, D=0 gives t=0 %s", clear_exact ? "yes" : "no",
                opaque_exact ? "yes" : "no", sky ? "yes" : "no")};
}

// 4 -------------------------------------------------------------------------

Outcome pooling_properties() {
    Rng rng(hash_seed({4, 0x9001ULL}));
    double mean_err = 0.0, bound_violation = 0.0, shift_err = 0.0;
    for (int trial = 0; trial < kPoolInputs; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(2));
        const int c = 1 + static_cast<int>(rng.below(40));
        const int h = 1 + static_cast<int>(rng.below(9));
        const int w = 1 + static_cast<int>(rng.below(9));
        const Tensor features = random_tensor({n, c, h, w}, rng, -3.0, 3.0);
        const Tensor logits = random_tensor({n, 1, h, w}, rng, -8.0, 8.0);
        const float shift = static_cast<float>(rng.uniform(-50.0, 50.0));
        Graph g;
        const Var f = g.constant(features);
        const Tensor uniform_pool =
            weighted_global_pool(f, g.constant(Tensor({n, 1, h, w}, 1.0f / (h * w)))).value();
        const Tensor conf = softmax_spatial(g.constant(logits)).value();
        Tensor shifted = logits;
        for (float& v : shifted.data()) v += shift;
        const Tensor conf_shifted = softmax_spatial(g.constant(shifted)).value();
        const Tensor pooled = weighted_global_pool(f, g.constant(conf)).value();
        for (std::size_t i = 0; i < conf.numel(); ++i) {
            shift_err = std::max(shift_err, double(std::abs(conf[i] - conf_shifted[i])));
        }
        for (int b = 0; b < n; ++b) {
            for (int k = 0; k < c; ++k) {
                double sum = 0.0;
                float lo = features.at(b, k, 0, 0), hi = lo;
                for (int y = 0; y < h; ++y) {
                    for (int x = 0; x < w; ++x) {
                        const float v = features.at(b, k, y, x);
                        sum += v;
                        lo = std::min(lo, v);
                        hi = std::max(hi, v);
                    }
                }
                mean_err = std::max(mean_err, std::abs(uniform_pool.at(b, k, 0, 0) - sum / (h * w)));
                const float p = pooled.at(b, k, 0, 0);
                bound_violation = std::max({bound_violation, double(lo - p), double(p - hi)});
            }
        }
    }
    const bool ok = mean_err <= kPoolTolerance && bound_violation <= kPoolTolerance && shift_err <= kPoolTolerance;
    return {ok, fmt("%d inputs: uniform-vs-mean %.2e, bound violation %.2e, shift %.2e", kPoolInputs, mean_err,
                    std::max(0.0, bound_violation), shift_err)};
}

// 5 -------------------------------------------------------------------------

Outcome metric_sanity() {
    double identity_err = 0.0, psnr_err = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const RgbImage x = testing_support::uniform_image(24, 32, 50 + s);
        identity_err = std::max(identity_err, std::abs(ssim(x, x) - 1.0));
        RgbImage y = x;
        Rng rng(s);
        for (float& v : y.data) v = std::clamp(v + static_cast<float>(rng.uniform(-0.1, 0.1)), 0.0f, 1.0f);
        psnr_err = std::max(psnr_err, std::abs(psnr(y, x) - (-10.0 * std::log10(mse(y, x)))));
    }
    const double c1 = 0.01 * 0.01;
    const double closed = (2 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1);
    const double got = ssim(RgbImage(16, 16, 0.5f), RgbImage(16, 16, 0.6f));
    const double closed_err = std::abs(got - closed);
    const bool ok = identity_err <= kSsimIdentityTolerance && psnr_err <= kPsnrTolerance &&
                    closed_err <= kSsimClosedFormTolerance;
    return {ok, fmt("ssim(x,x) err %.1e, psnr/mse err %.1e dB, constants %.6f vs %.6f", identity_err, psnr_err, got,
                    closed)};
}

// 6 -------------------------------------------------------------------------

Outcome overfit_capacity() {
    const auto start = Clock::now();
    const auto sources = procedural_sources(1, 64, 64, 6, "train");
    EpochStream stream(sources, Protocol::testset_a(), 6, 0, false);
    const std::vector<HazySample> batch{stream[1]};
    TrainConfig cfg;
    cfg.adam.lr = kOverfitLr;
    Trainer trainer(init_model(ModelConfig::full("tiny"), 6), sources, sources, cfg);
    double loss = 0.0;
    int steps = 0;
    while (steps < kOverfitSteps) {
        loss = trainer.step(batch);
        ++steps;
        if (loss < kOverfitTarget) break;
    }
    const double minutes = seconds_since(start) / 60.0;
    return {loss < kOverfitTarget && minutes < kOverfitBudgetMinutes,
            fmt("mse %.2e after %d steps (beta %.1f), %.1f min", loss, steps, batch[0].beta, minutes)};
}

// 7 -------------------------------------------------------------------------

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

double summary_psnr(const fs::path& summary) {
    const auto j = nlohmann::json::parse(testing_support::read_file(summary));
    return j.at("aggregates").at("psnr").get<double>();
}

Outcome directional_ablation(const fs::path& work) {
    const auto start = Clock::now();
    const fs::path dir = work / "ablation";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::vector<double> full, base, identity;
    std::string per_seed;
    for (int seed = 1; seed <= 3; ++seed) {
        const fs::path run = dir / ("seed" + std::to_string(seed));
        fs::create_directories(run);
        auto config = [&](const std::string& kind) {
            const fs::path p = run / (kind + ".json");
            testing_support::write_file(
                p, fmt(R"({"seed": %d, "model": {"kind": "%s", "encoder": "tiny"},
 "data": {"procedural": {"train": 200, "val": 20, "test": 50}, "height": 64, "width": 64},
 "haze": {"protocol": "testsetA"}, "train": {"max_epochs": %d}})",
                       seed, kind.c_str(), kAblationEpochs));
            return p;
        };
        const fs::path full_cfg = config("full");
        const fs::path base_cfg = config("baseline");
        const std::string log = (run / "log.txt").string();
        int rc = testing_support::run_binary("train --config " + q(full_cfg) + " --out " + q(run / "full"), log);
        rc |= testing_support::run_binary("eval --config " + q(full_cfg) + " --weights " +
                                              q(run / "full" / "best.hzw") + " --out " + q(run / "eval_full"),
                                          run / "eval_full.log");
        rc |= testing_support::run_binary("train --config " + q(base_cfg) + " --out " + q(run / "baseline"),
                                          run / "train_baseline.log");
        rc |= testing_support::run_binary("eval --config " + q(base_cfg) + " --ablation --weights " +
                                              q(run / "baseline" / "best.hzw") + " --out " + q(run / "eval_baseline"),
                                          run / "eval_baseline.log");
        rc |= testing_support::run_binary("eval --config " + q(full_cfg) + " --method identity --out " +
                                              q(run / "eval_identity"),
                                          run / "eval_identity.log");
        if (rc != 0) return {false, fmt("seed %d: a train/eval invocation failed, see %s", seed, run.c_str())};
        full.push_back(summary_psnr(run / "eval_full" / "summary.json"));
        base.push_back(summary_psnr(run / "eval_baseline" / "summary.json"));
        identity.push_back(summary_psnr(run / "eval_identity" / "summary.json"));
        per_seed += fmt(" [seed %d: full %.2f base %.2f hazy %.2f]", seed, full.back(), base.back(), identity.back());
    }
    const double hours = seconds_since(start) / 3600.0;
    const double f = median3(full), b = median3(base), i = median3(identity);
    const bool ok = f - i >= kAblationIdentityMargin && f - b >= kAblationBaselineMargin && hours < kAblationBudgetHours;
    return {ok, fmt("median psnr full %.2f, baseline %.2f (%+.2f), hazy %.2f (%+.2f), %.2f h;", f, b, f - b, i, f - i,
                    hours) +
                    per_seed};
}

// 8 -------------------------------------------------------------------------

Outcome protocol_counts() {
    const auto sources = procedural_sources(6, 32, 32, 8, "test");
    EpochStream a(sources, Protocol::testset_a(), 8, 0, false);
    std::vector<int> per_source(sources.size(), 0);
    for (std::size_t i = 0; i < a.size(); ++i) ++per_source[a.key(i).image];
    const bool four = std::all_of(per_source.begin(), per_source.end(), [](int n) { return n == 4; });

    EpochStream b(sources, Protocol::testset_b(), 8, 0, false);
    bool gray = b.size() > 0;
    for (std::size_t i = 0; i < b.size(); ++i) gray = gray && b[i].illumination.is_gray();

    std::size_t differing = 0;
    EpochStream e1(sources, Protocol::testset_a(), 8, 1, false);
    EpochStream e2(sources, Protocol::testset_a(), 8, 2, false);
    for (std::size_t i = 0; i < e1.size(); ++i) differing += e1[i].illumination.rgb != e2[i].illumination.rgb;
    const bool fresh = differing == e1.size();
    return {four && gray && fresh, fmt("testsetA %zu samples from %zu sources (4 each: %s), testsetB gray: %s, "
                                       "epoch illumination differs in %zu/%zu",
                                       a.size(), sources.size(), four ? "yes" : "no", gray ? "yes" : "no", differing,
                                       e1.size())};
}

// 9 -------------------------------------------------------------------------

Outcome determinism(const fs::path& work) {
    const fs::path dir = work / "determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const fs::path cfg = dir / "config.json";
    testing_support::write_file(cfg, R"({"seed": 9,
 "data": {"procedural": {"train": 12, "val": 4, "test": 6}, "height": 64, "width": 64},
 "train": {"max_epochs": 3}})");
    int rc = 0;
    for (const char* run : {"train_a", "train_b"}) {
        rc |= testing_support::run_binary("train --config " + q(cfg) + " --out " + q(dir / run));
    }
    for (const char* run : {"synth_a", "synth_b"}) {
        rc |= testing_support::run_binary("synth --config " + q(cfg) + " --seed 7 --out " + q(dir / run));
    }
    if (rc != 0) return {false, "a train/synth invocation failed"};
    const std::string la = testing_support::read_file(dir / "train_a" / "epoch_losses.jsonl");
    const bool logs = !la.empty() && la == testing_support::read_file(dir / "train_b" / "epoch_losses.jsonl");
    const auto ta = testing_support::snapshot_tree(dir / "synth_a");
    const bool trees = !ta.empty() && ta == testing_support::snapshot_tree(dir / "synth_b");
    return {logs && trees, fmt("epoch-loss logs identical: %s, synth trees identical: %s (%zu files)",
                               logs ? "yes" : "no", trees ? "yes" : "no", ta.size())};
}

// 10 ------------------------------------------------------------------------

Outcome dcp_sanity() {
    const auto sources = procedural_sources(kDcpScenes, 128, 128, 10, "test");
    // The schedule's thinnest haze leaves no haze-opaque region at the scene's
    // far plane, which the illumination estimate relies on.
    std::vector<float> betas;
    for (float b : BetaSchedule{}.depth) {
        if (b >= 0.2f) betas.push_back(b);
    }
    Rng rng(hash_seed({10, 0xdc9ULL}));
    int a_ok = 0, wins = 0;
    double worst_a = 0.0;
    for (int i = 0; i < kDcpScenes; ++i) {
        RgbImage clean = sources[i].image;
        const std::size_t px = clean.pixels();
        for (std::size_t p = 0; p < px; ++p) {
            std::size_t darkest = 0;
            for (std::size_t c = 1; c < 3; ++c) {
                if (clean.data[c * px + p] < clean.data[darkest * px + p]) darkest = c;
            }
            clean.data[darkest * px + p] = 0.0f;
        }
        const Illumination a = Illumination::gray(static_cast<float>(rng.uniform(0.7, 0.95)));
        const float beta = betas[static_cast<std::size_t>(i) % betas.size()];
        const Plane t = transmission(sources[i].structure, beta);
        const RgbImage hazy = compose_haze(clean, t, a);
        const DcpResult r = dcp_dehaze(hazy);
        double err = 0.0;
        for (int c = 0; c < 3; ++c) err = std::max(err, double(std::abs(r.illumination.rgb[c] - a.rgb[c])));
        worst_a = std::max(worst_a, err);
        a_ok += err <= kDcpIlluminationTolerance;
        wins += psnr(r.image, clean) > psnr(hazy, clean);
    }
    return {a_ok == kDcpScenes && wins >= kDcpRequiredWins,
            fmt("A within %.1f on %d/%d (worst %.3f), beats hazy input on %d/%d", kDcpIlluminationTolerance, a_ok,
                kDcpScenes, worst_a, wins, kDcpScenes)};
}

}  // namespace

int main(int argc, char** argv) {
    fs::path work = fs::temp_directory_path() / "hazelab_acceptance";
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--work-dir" && i + 1 < argc) {
            work = argv[++i];
        } else if (arg == "--only" && i + 1 < argc) {
            std::stringstream list(argv[++i]);
            std::string item;
            while (std::getline(list, item, ',')) only.insert(std::stoi(item));
        } else {
            std::fprintf(stderr, "usage: acceptance [--work-dir DIR] [--only N[,N...]]\n");
            return 2;
        }
    }
    fs::create_directories(work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient oracle", gradient_oracle},
        {"physical round trip", physical_round_trip},
        {"limit cases", limit_cases},
        {"confidence pooling", pooling_properties},
        {"metric sanity", metric_sanity},
        {"overfit capacity", overfit_capacity},
        {"directional ablation", [&] { return directional_ablation(work); }},
        {"protocol counts", protocol_counts},
        {"determinism", [&] { return determinism(work); }},
        {"dcp sanity", dcp_sanity},
    };
    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int number = static_cast<int>(k) + 1;
        if (!only.empty() && !only.contains(number)) continue;
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.passed;
        std::printf("criterion %2d %-22s %s  %s\n", number, criteria[k].first.c_str(), o.passed ? "PASS" : "FAIL",
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
