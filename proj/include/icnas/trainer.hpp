#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "icnas/dataset.hpp"
#include "icnas/optim.hpp"
#include "icnas/supernet.hpp"

namespace icnas {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 32;
    double lr_initial = 0.025;
    double lr_final = 1e-5;
    double momentum = 0.9;
    double weight_decay = 3e-4;
    bool weight_decay_applies_to_bn = false;
    int warmup_epochs = 0;
    double label_smoothing = 0.0;
    AugmentSpec augment;
    std::uint64_t seed = 0;
    SupernetMode mode;  // supernet runs only

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

// Keys follow the training hyper-parameter table: initial_learning_rate,
// final_learning_rate, warmup_epochs, momentum, weight_decay,
// weight_decay_applies_to_batchnorm, epochs, batch_size,
// cross_entropy_label_smoothing, pixel_shift, random_horizontal_flipping,
// normalization, plus seed and mode.
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochLog {
    int epoch = 0;
    double loss = 0;
    double acc = 0;
    double lr = 0;
    double wall_time_s = 0;
    std::size_t params = 0;
};

struct TrainLog {
    nlohmann::json header;
    std::vector<EpochLog> epochs;
    std::vector<int> split_events;  // epochs at which weights were split
    std::uint64_t path_samples = 0; // sample_path calls
    std::uint64_t batches = 0;
    double wall_time_s = 0;

    // Header line, one line per epoch, one line per split event, in order.
    std::vector<nlohmann::json> lines() const;
    void write_jsonl(const std::string& path) const;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// SPOS training: a fresh uniform path per batch. Split mode fires
// split_weights once at the start of the configured epoch.
TrainLog train_supernet(Supernet& net, const Dataset& data, const TrainConfig& cfg, const EpochCallback& cb = {});

struct StandaloneResult {
    Genotype genotype;
    std::uint64_t seed = 0;
    double train_acc = 0;  // eval-mode accuracy on the training split
    double test_acc = 0;
    std::size_t params = 0;
    double train_time_s = 0;
    TrainLog log;
};

// Trains the stand-alone network of `g` (same plumbing, single fixed path).
StandaloneResult train_standalone(const SearchSpaceSpec& spec, const Genotype& g, const Dataset& data,
                                  const TrainConfig& cfg);

// Eval-mode top-1 accuracy along path g.
double accuracy(Supernet& net, const Genotype& g, const Split& s, int batch_size = 256);

}  // namespace icnas
