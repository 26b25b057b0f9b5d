#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "icnas/experiment.hpp"
#include "icnas/numeric.hpp"

namespace fs = std::filesystem;
using namespace icnas;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("icnas_harness_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ExperimentConfig tiny_experiment(const fs::path& out) {
    ExperimentConfig c;
    c.name = "tiny";
    c.space = SearchSpaceSpec::toy_sequential();
    c.dataset.train_count = 128;
    c.dataset.val_count = 64;
    c.dataset.test_count = 64;
    c.dataset.difficulty = 0.5;
    c.dataset.seed = 5;
    for (auto* t : {&c.supernet_training, &c.standalone_training}) {
        t->epochs = 4;
        t->batch_size = 16;
        t->lr_initial = 0.05;
    }
    c.evaluation.recalibration_passes = 3;
    c.evaluation.recalibration_batch_size = 16;
    c.modes = {SupernetMode::baseline(), SupernetMode::bias(1)};
    c.seeds = {0, 1};
    c.bench_seeds = {1};
    c.output_dir = out.string();
    return c;
}

}  // namespace

TEST_CASE("YAML scalars map to JSON types") {
    const auto j = yaml_to_json(R"(
int: 3
neg: -7
float: 1.0e-5
plain: hello
quoted_num: "12"
single: '0.5'
yes: true
no: False
nothing: ~
empty:
list: [1, 2.5, x]
nested:
  a: {b: [true, null]}
)");
    CHECK(j["int"] == 3);
    CHECK(j["int"].is_number_integer());
    CHECK(j["neg"] == -7);
    CHECK(j["float"].is_number_float());
    CHECK(j["float"].get<double>() == 1.0e-5);
    CHECK(j["plain"] == "hello");
    CHECK(j["quoted_num"] == "12");
    CHECK(j["single"] == "0.5");
    CHECK(j["yes"] == true);
    CHECK(j["no"] == false);
    CHECK(j["nothing"].is_null());
    CHECK(j["empty"].is_null());
    CHECK(j["list"] == nlohmann::json::array({1, 2.5, "x"}));
    CHECK(j["nested"]["a"]["b"] == nlohmann::json::array({true, nullptr}));
    CHECK_THROWS_AS(yaml_to_json("a: 1\na: 2\n"), std::invalid_argument);
    CHECK_THROWS_AS(yaml_to_json("a: [1, 2\n"), std::invalid_argument);
}

TEST_CASE("shipped toy config loads with the documented values") {
    const auto cfg = load_experiment_config(std::string(ICNAS_SOURCE_DIR) + "/configs/toy.yaml");
    CHECK(cfg.space == SearchSpaceSpec::toy_sequential());
    CHECK(space_size(cfg.space) == 27);
    CHECK(cfg.dataset.image_shape == Shape{3, 8, 8});
    CHECK(cfg.dataset.num_classes == 4);
    CHECK(cfg.supernet_training.epochs == 30);
    CHECK(cfg.seeds.size() == 3);
    CHECK(cfg.bench_seeds.size() == 2);
    CHECK(cfg.modes == std::vector<SupernetMode>{SupernetMode::baseline()});
    CHECK(cfg.evaluation.recalibration_passes == 20);
    // JSON form reads back to the same config.
    const nlohmann::json j = cfg;
    const nlohmann::json again = j.get<ExperimentConfig>();
    CHECK(again == j);

    const auto variants = load_experiment_config(std::string(ICNAS_SOURCE_DIR) + "/configs/toy_modes.yaml");
    CHECK(variants.modes.size() == 5);
    CHECK(variants.modes.back() == SupernetMode::split(15));
    CHECK_NOTHROW(variants.validate());
}

TEST_CASE("config errors") {
    auto parse = [](const std::string& yaml) { return yaml_to_json(yaml).get<ExperimentConfig>(); };
    CHECK_THROWS_AS(parse("nmae: typo\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse("evaluation: {passes: 3}\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse("supernet_training: {lr: 0.1}\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse("modes: [bias:x]\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse("dataset: {num_classes: 10}\n").validate(), std::invalid_argument);
    CHECK_THROWS_AS(parse("modes: ['split:40']\nsupernet_training: {epochs: 30}\n").validate(), std::invalid_argument);
    CHECK_THROWS_AS(parse("seeds: []\n").validate(), std::invalid_argument);
    CHECK_THROWS_AS(parse("threads: 0\n").validate(), std::invalid_argument);
    CHECK_NOTHROW(parse("modes: [baseline, 'bias:1', 'split:15']\n").validate());
    CHECK_THROWS(load_experiment_config("/nonexistent/config.yaml"));
}

TEST_CASE("synthetic dataset is deterministic and class balanced") {
    DatasetSpec s;
    s.seed = 11;
    const Dataset a = gen_synthetic_dataset(s), b = gen_synthetic_dataset(s);
    CHECK(a.train.images == b.train.images);
    CHECK(a.test.labels == b.test.labels);
    CHECK(a.id == s.id());
    s.seed = 12;
    const Dataset c = gen_synthetic_dataset(s);
    CHECK(c.train.images != a.train.images);
    CHECK(c.id != a.id);
    CHECK(a.train.size() == 480);
    CHECK(a.val.size() == 160);
    CHECK(a.test.size() == 480);
    CHECK(a.train.images.shape() == Shape{480, 3, 8, 8});
    for (const Split* sp : {&a.train, &a.val, &a.test}) {
        std::map<int, int> counts;
        for (int y : sp->labels) counts[y]++;
        REQUIRE(counts.size() == 4);
        const int expect = sp->size() / 4;
        for (auto [k, n] : counts) CHECK(std::abs(n - expect) <= 1);
    }
    CHECK(a.train.images.all_finite());
    s.train_count = 0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("normalization uses training statistics") {
    DatasetSpec s;
    s.seed = 2;
    Dataset d = gen_synthetic_dataset(s);
    normalize_dataset(d);
    const auto st = channel_stats(d.train);
    for (int c = 0; c < 3; ++c) {
        CHECK(std::fabs(st.mean[static_cast<std::size_t>(c)]) < 1e-4);
        CHECK(std::fabs(st.stddev[static_cast<std::size_t>(c)] - 1) < 1e-4);
    }
}

TEST_CASE("tensor file round trip") {
    const auto dir = scratch("tensorfile");
    DatasetSpec s;
    s.train_count = 40;
    s.val_count = 8;
    s.test_count = 12;
    s.seed = 4;
    const Dataset d = gen_synthetic_dataset(s);
    const auto path = (dir / "data.bin").string();
    save_tensor_file(d, path);
    const Dataset back = load_tensor_file(path);
    CHECK(back.train.images == d.train.images);
    CHECK(back.val.labels == d.val.labels);
    CHECK(back.test.images == d.test.images);
    CHECK(back.num_classes == 4);

    DatasetSpec fs_spec = s;
    fs_spec.kind = DatasetKind::tensor_file;
    fs_spec.path = path;
    CHECK(load_dataset(fs_spec).train.labels == d.train.labels);
    fs_spec.num_classes = 5;
    CHECK_THROWS(load_dataset(fs_spec));

    std::ofstream(dir / "junk.bin") << "not a dataset";
    CHECK_THROWS(load_tensor_file((dir / "junk.bin").string()));
    CHECK_THROWS(load_tensor_file((dir / "missing.bin").string()));
    fs::remove_all(dir);
}

TEST_CASE("numeric helpers") {
    CHECK(fsum(std::vector<double>{1e100, 1.0, -1e100}) == 1.0);
    CHECK(fsum(std::vector<double>{0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1}) == 1.0);
    CHECK(exact_mean(std::vector<double>{0.5, 0.25}) == 0.375);
    CHECK_THROWS_AS(exact_mean(std::vector<double>{}), std::invalid_argument);

    std::vector<std::atomic<int>> hits(100);
    parallel_for(100, 4, [&](std::size_t i, int) { hits[i]++; });
    for (auto& h : hits) CHECK(h == 1);
    CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i, int) {
                        if (i == 7) throw std::runtime_error("boom");
                    }),
                    std::runtime_error);
}

TEST_CASE("end-to-end run writes the artifact layout and is reproducible") {
    const auto dir = scratch("run");
    const auto cfg = tiny_experiment(dir / "a");
    const auto res = run_experiment(cfg);
    CHECK(res.runs.size() == 4);
    for (const auto& r : res.runs) {
        CHECK(r.ok);
        CHECK(r.records.size() == 27);
    }
    for (const char* f : {"config.json", "manifest.json", "bench.json", "summary.json", "correlations.csv",
                          "resources.csv", "notices.txt", "supernets/baseline_s0.json", "supernets/bias-1_s1.json",
                          "logs/baseline_s1.jsonl", "evals/bias-1_s0.csv", "curves/baseline.csv",
                          "curves/bias-1_s1.csv", "self_consistency_baseline.csv"}) {
        INFO(std::string(f));
        CHECK(fs::exists(dir / "a" / f));
    }
    const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
    CHECK(manifest["space_size"] == 27);
    CHECK(manifest["modes"] == nlohmann::json::array({"baseline", "bias:1"}));
    REQUIRE(res.modes.size() == 2);
    for (const auto& m : res.modes) {
        CHECK(m.final_norm_improvement.size() == 2);
        CHECK(m.has_self_consistency);
        CHECK(m.mean_curve.points.size() == 18);
        CHECK(m.mean_curve.points.front().norm_improvement == 0.0);
    }
    CHECK(res.modes[0].params == res.modes[0].baseline_params);
    CHECK(res.modes[1].params > res.modes[1].baseline_params);

    const std::string rep = report(dir / "a");
    CHECK(rep.find("bias:1") != std::string::npos);
    CHECK(rep.find("missing") == std::string::npos);

    // Second run reuses the bench table and reproduces every artifact bit for bit.
    auto again = tiny_experiment(dir / "b");
    again.bench_path = (dir / "a" / "bench.json").string();
    run_experiment(again);
    for (const char* f : {"evals/baseline_s0.csv", "evals/bias-1_s1.csv", "curves/baseline.csv", "curves/bias-1.csv",
                          "correlations.csv", "supernets/bias-1_s0.json"}) {
        INFO(std::string(f));
        CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    }

    fs::remove(dir / "a" / "evals" / "baseline_s1.csv");
    fs::remove(dir / "a" / "resources.csv");
    const std::string partial = report(dir / "a");
    CHECK(partial.find("missing") != std::string::npos);
    CHECK(partial.find("baseline_s1.csv") != std::string::npos);
    CHECK(partial.find("resources.csv") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("missing bench truths are reported, not fatal") {
    const auto dir = scratch("nobench");
    auto cfg = tiny_experiment(dir / "out");
    cfg.modes = {SupernetMode::baseline()};
    cfg.seeds = {0};
    cfg.eval_sample_n = 12;
    const auto full = run_experiment(cfg);
    // A bench over a different sample lacks some evaluated genotypes.
    BenchTable partial = load_bench((dir / "out" / "bench.json").string());
    partial.records.resize(6);
    partial.recompute_aggregates();
    std::vector<std::string> notices;
    const auto ms = compute_metrics(cfg, full.runs, &partial, dir / "out", notices);
    CHECK_FALSE(notices.empty());
    CHECK(ms.size() == 1);
    fs::remove_all(dir);
}
