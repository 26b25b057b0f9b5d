#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "icnas/dataset.hpp"
#include "icnas/evaluator.hpp"
#include "icnas/search_space.hpp"
#include "icnas/supernet.hpp"
#include "icnas/trainer.hpp"

namespace icnas {

// YAML text to JSON. Quoted scalars stay strings; plain scalars become
// null, bool, integer or float when they parse as one.
nlohmann::json yaml_to_json(const std::string& text);
// Reads a .json file as JSON and anything else as YAML.
nlohmann::json read_config_file(const std::string& path);

struct ExperimentConfig {
    std::string name = "experiment";
    SearchSpaceSpec space;
    DatasetSpec dataset;
    TrainConfig supernet_training;
    TrainConfig standalone_training;
    EvalConfig evaluation;
    std::vector<SupernetMode> modes{SupernetMode::baseline()};
    std::vector<std::uint64_t> seeds{0, 1, 2};        // super-network seeds
    std::vector<std::uint64_t> bench_seeds{1, 2};     // stand-alone seeds
    int eval_sample_n = 0;                            // 0: every architecture
    std::uint64_t eval_sample_seed = 0;
    int stop_at_remaining = 10;
    std::string bench_path;  // reuse an existing table when set and present
    std::string output_dir = "runs/experiment";
    int threads = 1;

    void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace icnas
