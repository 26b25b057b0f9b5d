#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "icnas/config.hpp"
#include "icnas/evaluator.hpp"
#include "icnas/metrics.hpp"

namespace icnas {

// Artifact directory layout:
//   config.json, manifest.json, bench.json
//   supernets/<mode>_s<seed>.json   checkpoints
//   logs/<mode>_s<seed>.jsonl       training logs
//   evals/<mode>_s<seed>.csv        EvalRecords
//   curves/<mode>.csv               mean and std across seeds
//   curves/<mode>_s<seed>.csv       per seed
//   correlations.csv                mode,seed,KT,PCC,SCC,final_norm_improvement
//   self_consistency_<mode>.csv     (two or more seeds)
//   resources.csv                   wall time and parameter counts per mode
//   summary.json, notices.txt
std::string run_tag(const SupernetMode& m, std::uint64_t seed);  // "bias-1_s0"
std::string mode_tag(const SupernetMode& m);                     // "bias-1"

// Architectures to evaluate: all of them, or a seeded distinct sample.
std::vector<Genotype> evaluation_genotypes(const ExperimentConfig& cfg);

// Loads cfg.bench_path when it exists, otherwise trains the table.
BenchTable obtain_bench(const ExperimentConfig& cfg, const Dataset& data);

struct RunResult {
    SupernetMode mode;
    std::uint64_t seed = 0;
    std::vector<EvalRecord> records;
    double train_time_s = 0;
    std::size_t params = 0;
    std::size_t baseline_params = 0;
    bool ok = true;
    std::string error;
};

// Trains one super-network and evaluates it; writes checkpoint, log and CSV.
RunResult run_one(const ExperimentConfig& cfg, const Dataset& data, const SupernetMode& mode, std::uint64_t seed,
                  const std::vector<Genotype>& genotypes, const std::filesystem::path& out);

struct ModeSummary {
    SupernetMode mode;
    std::vector<std::uint64_t> seeds;
    std::vector<double> final_norm_improvement;  // per seed, at the last curve point
    std::vector<double> kt, pcc, scc;            // per seed, vs ground truth
    MetricCurve mean_curve;
    double mean_train_time_s = 0;
    std::size_t params = 0;
    std::size_t baseline_params = 0;
    bool has_self_consistency = false;
    SelfConsistency self;
};

// Joins runs with the bench table and writes curves, correlations,
// self-consistency and resource files. Missing truths are reported in
// `notices` and the metrics are skipped.
std::vector<ModeSummary> compute_metrics(const ExperimentConfig& cfg, const std::vector<RunResult>& runs,
                                         const BenchTable* bench, const std::filesystem::path& out,
                                         std::vector<std::string>& notices);

struct ExperimentResult {
    std::filesystem::path dir;
    std::vector<RunResult> runs;
    std::vector<ModeSummary> modes;
    std::vector<std::string> notices;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Human-readable summary of an artifact directory. Missing pieces are listed.
std::string report(const std::filesystem::path& dir);

}  // namespace icnas
