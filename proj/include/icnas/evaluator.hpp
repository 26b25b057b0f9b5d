#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "icnas/dataset.hpp"
#include "icnas/supernet.hpp"
#include "icnas/trainer.hpp"

namespace icnas {

// BN running statistics of every batchnorm layer, in Supernet::batchnorms() order.
struct BnState {
    std::vector<Tensor> mean;
    std::vector<Tensor> var;
    bool operator==(const BnState&) const = default;
};

BnState capture_bn(const Supernet& net);
void apply_bn(Supernet& net, const BnState& state);

struct EvalConfig {
    int recalibration_passes = 20;
    int recalibration_batch_size = 64;
    int eval_batch_size = 256;
    std::uint64_t recalibration_seed = 0;
    int threads = 1;
    bool operator==(const EvalConfig&) const = default;
};

// `k` training batches in a fixed seeded order, identical for every genotype.
// Cycles through the training split when it is too small.
std::vector<Tensor> recalibration_batches(const Split& train, int k, int batch_size, std::uint64_t seed);

// Runs the batches (cycled up to k) in recalibrate mode on a private copy
// and returns its BN state. Statistics are not reset first.
BnState recalibrate_bn(const Supernet& net, const Genotype& g, const std::vector<Tensor>& batches, int k = 20);

struct EvalRecord {
    Genotype genotype;
    double predicted_acc = 0;
    std::uint64_t seed = 0;
    std::string supernet_id;
    bool operator==(const EvalRecord&) const = default;
};

// Eval-mode top-1 accuracy with the given BN state on a private copy.
EvalRecord predict_accuracy(const Supernet& net, const Genotype& g, const BnState& bn, const Split& validation,
                            std::uint64_t seed = 0, const std::string& supernet_id = "", int batch_size = 256);

// One record per genotype (duplicates kept), each recalibrated separately.
// With cfg.threads > 1 every worker owns its own network copy.
std::vector<EvalRecord> evaluate_set(const Supernet& net, const std::vector<Genotype>& genotypes,
                                     const Dataset& data, const EvalConfig& cfg, std::uint64_t seed = 0,
                                     const std::string& supernet_id = "");

// CSV with header genotype;predicted_acc;seed;supernet_id.
void write_eval_csv(const std::vector<EvalRecord>& records, const std::string& path);
std::vector<EvalRecord> read_eval_csv(const std::string& path);

// ---------------------------------------------------------------------------
// Benchmark table

struct BenchRecord {
    Genotype genotype;
    std::uint64_t seed = 0;
    double train_acc = 0;
    double test_acc = 0;
    std::size_t params = 0;
    double train_time_s = 0;
    bool ok = true;
    std::string error;
    bool operator==(const BenchRecord&) const = default;
};

struct BenchAggregate {
    Genotype genotype;
    double mean_test_acc = 0;
    int runs = 0;
    bool operator==(const BenchAggregate&) const = default;
};

struct BenchTable {
    std::string space_id;
    std::string dataset_id;
    std::vector<BenchRecord> records;
    std::vector<BenchAggregate> aggregates;  // sorted by genotype

    // Exact mean of the successful records per genotype.
    void recompute_aggregates();
    std::optional<double> truth(const Genotype& g) const;
    // Records with ok == false.
    std::size_t failures() const;
    bool operator==(const BenchTable&) const = default;
};

void to_json(nlohmann::json& j, const BenchTable& t);
void from_json(const nlohmann::json& j, BenchTable& t);
void save_bench(const BenchTable& t, const std::string& path);
BenchTable load_bench(const std::string& path);

// Trains every (genotype, seed) pair stand-alone. A failing run is kept as
// a record with ok = false and an error message.
BenchTable build_bench_table(const SearchSpaceSpec& spec, const std::vector<Genotype>& genotypes,
                             const std::vector<std::uint64_t>& seeds, const Dataset& data, const TrainConfig& cfg,
                             int threads = 1);

}  // namespace icnas
