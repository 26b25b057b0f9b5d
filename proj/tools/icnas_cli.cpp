// icnas command line: dataset generation, training, evaluation, metrics
// and end-to-end experiments driven by one config file.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "icnas/experiment.hpp"

namespace fs = std::filesystem;
using namespace icnas;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string mode;
    std::string out;
    std::string space;
    std::optional<int> epochs;
    std::optional<int> threads;
};

void add_common(CLI::App* app, Overrides& o) {
    app->add_option("--config", o.config, "YAML or JSON experiment config");
    app->add_option("--seed", o.seed, "single super-network / training seed");
    app->add_option("--mode", o.mode, "baseline, bias:D, shared_bias:D or split:EPOCH");
    app->add_option("--out", o.out, "output file or directory");
    app->add_option("--space", o.space, "search-space preset (toy_sequential, nb201_full, ...)");
    app->add_option("--epochs", o.epochs, "super-network training epochs");
    app->add_option("--threads", o.threads, "worker threads for independent runs");
}

ExperimentConfig load(const Overrides& o, bool out_is_dir) {
    nlohmann::json j = o.config.empty() ? nlohmann::json::object() : read_config_file(o.config);
    if (!o.space.empty()) {
        j["space"] = {{"preset", o.space}};
        const auto s = SearchSpaceSpec::preset(o.space);
        j["dataset"]["image_shape"] = s.input_shape;
        j["dataset"]["num_classes"] = s.num_classes;
    }
    if (o.epochs) j["supernet_training"]["epochs"] = *o.epochs;
    if (o.seed) j["seeds"] = {*o.seed};
    if (!o.mode.empty()) j["modes"] = {o.mode};
    if (!o.out.empty() && out_is_dir) j["output_dir"] = o.out;
    if (o.threads) j["threads"] = *o.threads;
    return j.get<ExperimentConfig>();
}

Dataset prepared_data(const ExperimentConfig& cfg) {
    Dataset d = load_dataset(cfg.dataset);
    if (cfg.supernet_training.augment.normalize) normalize_dataset(d);
    return d;
}

std::string require_out(const Overrides& o) {
    if (o.out.empty()) throw CLI::ValidationError("--out", "an output path is required");
    return o.out;
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"icnas: one-shot architecture search with inter-choice dependent weights"};
    app.require_subcommand(1);

    Overrides o;
    std::string genotype_str, checkpoint, bench_path;
    std::vector<std::string> eval_files;

    auto* gen = app.add_subcommand("gen-data", "write the configured dataset as a tensor file");
    add_common(gen, o);

    auto* tsn = app.add_subcommand("train-supernet", "train one super-network, save checkpoint and log");
    add_common(tsn, o);

    auto* tsa = app.add_subcommand("train-standalone", "train one architecture from scratch");
    add_common(tsa, o);
    tsa->add_option("--genotype", genotype_str, "architecture, e.g. [0,2,1]")->required();

    auto* bb = app.add_subcommand("build-bench", "train every evaluated architecture for each bench seed");
    add_common(bb, o);

    auto* ev = app.add_subcommand("evaluate", "predict accuracies with a trained super-network");
    add_common(ev, o);
    ev->add_option("--checkpoint", checkpoint, "super-network checkpoint")->required();

    auto* me = app.add_subcommand("metrics", "join evaluation CSVs with a bench table");
    add_common(me, o);
    me->add_option("--bench", bench_path, "bench table JSON")->required();
    me->add_option("--evals", eval_files, "evaluation CSVs")->required();

    auto* rep = app.add_subcommand("report", "summarize an artifact directory");
    std::string report_dir;
    rep->add_option("dir", report_dir, "artifact directory")->required();

    auto* run = app.add_subcommand("run", "end-to-end experiment");
    add_common(run, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*gen) {
            const auto cfg = load(o, false);
            const auto out = require_out(o);
            ensure_parent(out);
            save_tensor_file(load_dataset(cfg.dataset), out);
            std::cout << "wrote " << out << '\n';
        } else if (*tsn) {
            const auto cfg = load(o, false);
            const auto out = fs::path(require_out(o));
            if (cfg.modes.size() != 1 || cfg.seeds.size() != 1) {
                throw std::invalid_argument("train-supernet needs exactly one mode and seed (--mode, --seed)");
            }
            const Dataset data = prepared_data(cfg);
            Supernet net(cfg.space, cfg.modes[0], cfg.seeds[0]);
            TrainConfig tc = cfg.supernet_training;
            tc.mode = cfg.modes[0];
            tc.seed = cfg.seeds[0];
            const auto log = train_supernet(net, data, tc, [](const EpochLog& e) {
                std::cerr << "epoch " << e.epoch << " loss " << e.loss << " acc " << e.acc << " lr " << e.lr << '\n';
            });
            ensure_parent(out);
            save_checkpoint(net, out.string());
            log.write_jsonl(out.string() + ".log.jsonl");
            std::cout << "wrote " << out.string() << " (" << net.param_count() << " parameters)\n";
        } else if (*tsa) {
            const auto cfg = load(o, false);
            const Dataset data = prepared_data(cfg);
            TrainConfig tc = cfg.standalone_training;
            tc.seed = o.seed.value_or(cfg.bench_seeds.front());
            const auto r = train_standalone(cfg.space, parse_genotype(genotype_str), data, tc);
            nlohmann::json j = {{"genotype", r.genotype}, {"seed", r.seed},     {"train_acc", r.train_acc},
                                {"test_acc", r.test_acc}, {"params", r.params}, {"train_time_s", r.train_time_s}};
            if (!o.out.empty()) {
                ensure_parent(o.out);
                std::ofstream(o.out) << j.dump(2) << '\n';
            }
            std::cout << j.dump(2) << '\n';
        } else if (*bb) {
            const auto cfg = load(o, false);
            const auto out = require_out(o);
            const Dataset data = prepared_data(cfg);
            const auto t = build_bench_table(cfg.space, evaluation_genotypes(cfg), cfg.bench_seeds, data,
                                             cfg.standalone_training, cfg.threads);
            ensure_parent(out);
            save_bench(t, out);
            std::cout << "wrote " << out << " (" << t.records.size() << " records, " << t.failures()
                      << " failed)\n";
        } else if (*ev) {
            const auto cfg = load(o, false);
            const auto out = require_out(o);
            const Dataset data = prepared_data(cfg);
            const Supernet net = load_checkpoint(checkpoint);
            ExperimentConfig c = cfg;
            c.space = net.spec();
            const auto recs = evaluate_set(net, evaluation_genotypes(c), data, cfg.evaluation,
                                           o.seed.value_or(0), fs::path(checkpoint).stem().string());
            ensure_parent(out);
            write_eval_csv(recs, out);
            std::cout << "wrote " << out << " (" << recs.size() << " records)\n";
        } else if (*me) {
            const auto cfg = load(o, true);
            const auto bench = load_bench(bench_path);
            std::vector<RunResult> runs;
            for (std::size_t i = 0; i < eval_files.size(); ++i) {
                RunResult r;
                r.records = read_eval_csv(eval_files[i]);
                r.mode = cfg.modes.at(0);
                r.seed = r.records.empty() ? i : r.records.front().seed;
                runs.push_back(std::move(r));
            }
            ExperimentConfig c = cfg;
            c.modes = {cfg.modes.at(0)};
            const fs::path out = o.out.empty() ? fs::path(cfg.output_dir) : fs::path(o.out);
            fs::create_directories(out / "curves");
            std::vector<std::string> notices;
            const auto ms = compute_metrics(c, runs, &bench, out, notices);
            for (const auto& n : notices) std::cerr << "notice: " << n << '\n';
            for (const auto& m : ms) {
                std::cout << to_string(m.mode) << ": final normalized improvement per run";
                for (double v : m.final_norm_improvement) std::cout << ' ' << v;
                std::cout << '\n';
            }
        } else if (*rep) {
            std::cout << report(report_dir);
        } else if (*run) {
            const auto cfg = load(o, true);
            const auto res = run_experiment(cfg);
            std::cout << report(res.dir);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
