#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqfake/model/model.hpp"
#include "seqfake/synth/dataset.hpp"
#include "seqfake/train/metrics.hpp"

namespace seqfake::train {

struct RunConfig {
    std::string preset = "desk";
    model::ModelConfig model{};
    int epochs = 30;
    int warmup_epochs = 4;
    std::vector<int> milestones{15, 24};
    double lr_transformer = 5e-4;
    double lr_backbone = 5e-4;
    double weight_decay = 1e-4;
    double momentum = 0.9;            // sgd only
    std::string optimizer = "adamw";  // sgd | adamw
    double grad_clip = 1.0;           // global-norm clip, 0 disables
    int batch_size = 32;
    int eval_batch_size = 64;
    std::uint64_t seed = 0;

    void validate() const;
};

// Named presets: "desk" (the defaults above) and "full" (SGD with momentum,
// lr 1e-3 transformer / 1e-4 backbone, no clipping, 170 epochs, warmup 20,
// milestones {70, 120}).
RunConfig preset(const std::string& name);

void to_json(nlohmann::json& j, const RunConfig& c);
// Keys absent from `j` keep the values of the named preset (j["preset"], default "desk").
void from_json(const nlohmann::json& j, RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);

struct LearningRates {
    double backbone = 0.0;
    double transformer = 0.0;
};

// Linear warmup to the base rates over `warmup_epochs` (epoch e gets
// (e+1)/warmup of the base), then x0.1 at each milestone epoch.
LearningRates learning_rates(const RunConfig& cfg, int epoch);

// Decoded uint8 images of one split held in memory, row-major RGB.
struct ImageSet {
    int size = 0;
    std::vector<std::uint8_t> pixels;
    std::vector<ManipulationSequence> annotations;
    std::vector<std::string> paths;

    std::size_t count() const { return annotations.size(); }
    // Planar (3, n*S*S) floats in [0, 1] for the given items.
    nn::Matrix<float> batch(const std::vector<std::size_t>& items) const;
};

ImageSet load_split(const synth::Manifest& manifest, const std::filesystem::path& manifest_dir, synth::Split split);

class Optimizer {
public:
    Optimizer(const nn::ParamStore<float>& store, const RunConfig& cfg);
    // Applies one update from the accumulated gradients; returns the gradient norm before clipping.
    double step(const LearningRates& lr);

private:
    std::vector<nn::ParamPtr<float>> params_;
    std::vector<nn::Matrix<float>> m1_, m2_;
    RunConfig cfg_;
    long steps_ = 0;
};

struct EpochRecord {
    int epoch = 0;
    LearningRates lr;
    double loss = 0, dec = 0, isc = 0, ism = 0;
    double val_fixed = 0, val_adaptive = 0;
    double seconds = 0;
};

struct TrainResult {
    double best_val_adaptive = -1.0;
    int best_epoch = -1;
    std::vector<EpochRecord> history;
    std::filesystem::path best_checkpoint, last_checkpoint;
};

std::vector<ManipulationSequence> predict_set(const model::Model<float>& m, const ImageSet& set, int batch_size);
MetricReport evaluate(const model::Model<float>& m, const ImageSet& set, int batch_size);

// Trains on `train_set`, selects by validation Adaptive-Acc, and writes
// best.ckpt, last.ckpt and log.jsonl into `out_dir`. On return `m` holds
// the best parameters.
TrainResult train(const RunConfig& cfg, model::Model<float>& m, const ImageSet& train_set, const ImageSet& val_set,
                  const std::filesystem::path& out_dir,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace seqfake::train
