#include "icnas/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "icnas/numeric.hpp"

namespace fs = std::filesystem;

namespace icnas {

namespace {

std::string g17(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fixed(double v, int digits) {
    if (std::isnan(v)) return "n/a";
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

void write_json(const fs::path& p, const nlohmann::json& j) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
    out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot read '" + p.string() + "'");
    return nlohmann::json::parse(in);
}

constexpr double nan_v = std::numeric_limits<double>::quiet_NaN();

}  // namespace

std::string mode_tag(const SupernetMode& m) {
    std::string s = to_string(m);
    for (char& c : s) {
        if (c == ':') c = '-';
    }
    return s;
}

std::string run_tag(const SupernetMode& m, std::uint64_t seed) { return mode_tag(m) + "_s" + std::to_string(seed); }

std::vector<Genotype> evaluation_genotypes(const ExperimentConfig& cfg) {
    const auto size = space_size(cfg.space);
    if (cfg.eval_sample_n == 0 || static_cast<std::uint64_t>(cfg.eval_sample_n) >= size) return enumerate(cfg.space);
    Rng rng = Rng(cfg.eval_sample_seed).substream("eval_sample");
    auto g = sample_uniform(cfg.space, rng, static_cast<std::size_t>(cfg.eval_sample_n), true);
    std::sort(g.begin(), g.end());
    return g;
}

BenchTable obtain_bench(const ExperimentConfig& cfg, const Dataset& data) {
    if (!cfg.bench_path.empty() && fs::exists(cfg.bench_path)) {
        BenchTable t = load_bench(cfg.bench_path);
        if (t.space_id != cfg.space.id) {
            throw std::runtime_error("bench table '" + cfg.bench_path + "' belongs to space '" + t.space_id + "'");
        }
        return t;
    }
    BenchTable t = build_bench_table(cfg.space, evaluation_genotypes(cfg), cfg.bench_seeds, data,
                                     cfg.standalone_training, cfg.threads);
    if (!cfg.bench_path.empty()) {
        const fs::path p(cfg.bench_path);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        save_bench(t, cfg.bench_path);
    }
    return t;
}

RunResult run_one(const ExperimentConfig& cfg, const Dataset& data, const SupernetMode& mode, std::uint64_t seed,
                  const std::vector<Genotype>& genotypes, const fs::path& out) {
    RunResult r;
    r.mode = mode;
    r.seed = seed;
    const std::string tag = run_tag(mode, seed);
    try {
        Supernet net(cfg.space, mode, seed);
        TrainConfig tc = cfg.supernet_training;
        tc.seed = seed;
        tc.mode = mode;
        const TrainLog log = train_supernet(net, data, tc);
        log.write_jsonl((out / "logs" / (tag + ".jsonl")).string());
        save_checkpoint(net, (out / "supernets" / (tag + ".json")).string());
        r.train_time_s = log.wall_time_s;
        r.params = net.param_count();
        r.baseline_params = net.plan().total_params();
        EvalConfig ev = cfg.evaluation;
        ev.threads = 1;
        r.records = evaluate_set(net, genotypes, data, ev, seed, tag);
        write_eval_csv(r.records, (out / "evals" / (tag + ".csv")).string());
    } catch (const std::exception& e) {
        r.ok = false;
        r.error = e.what();
    }
    return r;
}

std::vector<ModeSummary> compute_metrics(const ExperimentConfig& cfg, const std::vector<RunResult>& runs,
                                         const BenchTable* bench, const fs::path& out,
                                         std::vector<std::string>& notices) {
    std::vector<ModeSummary> summaries;
    std::ofstream corr(out / "correlations.csv");
    corr << "mode,seed,KT,PCC,SCC,final_norm_improvement\n";

    for (const auto& mode : cfg.modes) {
        ModeSummary ms;
        ms.mode = mode;
        std::vector<MetricCurve> curves;
        std::vector<std::vector<double>> preds;
        std::vector<std::vector<Genotype>> ids;
        std::vector<std::string> names;
        std::vector<double> times;
        for (const auto& r : runs) {
            if (!(r.mode == mode)) continue;
            const std::string tag = run_tag(mode, r.seed);
            if (!r.ok) {
                notices.push_back("run " + tag + " failed: " + r.error);
                continue;
            }
            times.push_back(r.train_time_s);
            ms.params = r.params;
            ms.baseline_params = r.baseline_params;
            std::vector<double> p;
            std::vector<Genotype> g;
            for (const auto& e : r.records) {
                p.push_back(e.predicted_acc);
                g.push_back(e.genotype);
            }
            preds.push_back(p);
            ids.push_back(g);
            names.push_back(tag);
            if (!bench) continue;

            PairedSeries s;
            bool complete = true;
            for (const auto& e : r.records) {
                const auto t = bench->truth(e.genotype);
                if (!t) {
                    complete = false;
                    break;
                }
                s.predictions.push_back(e.predicted_acc);
                s.truths.push_back(*t);
                s.ids.push_back(e.genotype);
            }
            if (!complete) {
                notices.push_back("run " + tag + ": bench table lacks some evaluated genotypes; metrics skipped");
                continue;
            }
            auto coef = [&](Coefficient c) {
                try {
                    return coefficient(c, s.predictions, s.truths);
                } catch (const std::exception& e) {
                    notices.push_back("run " + tag + ": " + to_string(c) + " undefined (" + e.what() + ")");
                    return nan_v;
                }
            };
            const double kt = coef(Coefficient::kt), pcc = coef(Coefficient::pcc), scc = coef(Coefficient::scc);
            double final_norm = nan_v;
            try {
                auto curve = normalize_improvement(improvement_curve(s, cfg.stop_at_remaining), s.truths);
                write_curve_csv(curve, (out / "curves" / (tag + ".csv")).string());
                final_norm = curve.points.back().norm_improvement;
                curves.push_back(std::move(curve));
            } catch (const std::exception& e) {
                notices.push_back("run " + tag + ": improvement curve skipped (" + e.what() + ")");
            }
            ms.seeds.push_back(r.seed);
            ms.kt.push_back(kt);
            ms.pcc.push_back(pcc);
            ms.scc.push_back(scc);
            ms.final_norm_improvement.push_back(final_norm);
            corr << mode_tag(mode) << ',' << r.seed << ',' << g17(kt) << ',' << g17(pcc) << ',' << g17(scc) << ','
                 << g17(final_norm) << '\n';
        }
        if (!times.empty()) ms.mean_train_time_s = exact_mean(times);
        if (!curves.empty()) {
            ms.mean_curve = mean_across_runs(curves);
            write_curve_csv(ms.mean_curve, (out / "curves" / (mode_tag(mode) + ".csv")).string());
        }
        if (preds.size() >= 2) {
            try {
                ms.self = self_consistency(preds, ids, names);
                ms.has_self_consistency = true;
                write_self_consistency_csv(ms.self, (out / ("self_consistency_" + mode_tag(mode) + ".csv")).string());
            } catch (const std::exception& e) {
                notices.push_back("mode " + mode_tag(mode) + ": self-consistency skipped (" + e.what() + ")");
            }
        }
        summaries.push_back(std::move(ms));
    }

    const ModeSummary* base = nullptr;
    for (const auto& s : summaries) {
        if (s.mode.variant == Variant::baseline) base = &s;
    }
    std::ofstream res(out / "resources.csv");
    res << "mode,train_time_s,time_increase_pct,params,extra_params,param_increase_pct\n";
    for (const auto& s : summaries) {
        const double time_pct = base && base->mean_train_time_s > 0
                                    ? 100.0 * (s.mean_train_time_s - base->mean_train_time_s) / base->mean_train_time_s
                                    : nan_v;
        const auto extra = static_cast<long long>(s.params) - static_cast<long long>(s.baseline_params);
        const double param_pct = s.baseline_params ? 100.0 * static_cast<double>(extra) / s.baseline_params : nan_v;
        res << mode_tag(s.mode) << ',' << g17(s.mean_train_time_s) << ',' << g17(time_pct) << ',' << s.params << ','
            << extra << ',' << g17(param_pct) << '\n';
    }
    return summaries;
}

namespace {

nlohmann::json nan_safe(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

nlohmann::json nan_safe(const std::vector<double>& v) {
    auto a = nlohmann::json::array();
    for (double x : v) a.push_back(nan_safe(x));
    return a;
}

double finite_mean(const std::vector<double>& v) {
    std::vector<double> f;
    for (double x : v) {
        if (std::isfinite(x)) f.push_back(x);
    }
    return f.empty() ? nan_v : exact_mean(f);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.supernet_training.augment.normalize != cfg.standalone_training.augment.normalize) {
        throw std::invalid_argument("supernet and stand-alone training must agree on normalization");
    }
    ExperimentResult result;
    result.dir = cfg.output_dir;
    const fs::path& out = result.dir;
    for (const char* sub : {"supernets", "logs", "evals", "curves"}) fs::create_directories(out / sub);
    write_json(out / "config.json", cfg);

    nlohmann::json modes = nlohmann::json::array();
    for (const auto& m : cfg.modes) modes.push_back(to_string(m));
    write_json(out / "manifest.json", {{"format", "icnas.experiment"},
                                       {"version", 1},
                                       {"tool_version", "0.1.0"},
                                       {"compiler", __VERSION__},
                                       {"name", cfg.name},
                                       {"space_id", cfg.space.id},
                                       {"space_size", space_size(cfg.space)},
                                       {"dataset_id", cfg.dataset.id()},
                                       {"modes", modes},
                                       {"seeds", cfg.seeds},
                                       {"bench_seeds", cfg.bench_seeds}});

    Dataset data = load_dataset(cfg.dataset);
    if (cfg.supernet_training.augment.normalize) normalize_dataset(data);
    const auto genotypes = evaluation_genotypes(cfg);

    std::optional<BenchTable> bench;
    try {
        bench = obtain_bench(cfg, data);
        save_bench(*bench, (out / "bench.json").string());
        if (bench->failures()) {
            result.notices.push_back(std::to_string(bench->failures()) + " stand-alone runs failed; see bench.json");
        }
    } catch (const std::exception& e) {
        result.notices.push_back(std::string("no bench table, metrics skipped: ") + e.what());
    }

    struct Task {
        SupernetMode mode;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (const auto& m : cfg.modes) {
        for (auto s : cfg.seeds) tasks.push_back({m, s});
    }
    result.runs.resize(tasks.size());
    parallel_for(tasks.size(), cfg.threads, [&](std::size_t i, int) {
        result.runs[i] = run_one(cfg, data, tasks[i].mode, tasks[i].seed, genotypes, out);
    });

    result.modes = compute_metrics(cfg, result.runs, bench ? &*bench : nullptr, out, result.notices);

    nlohmann::json summary = {{"name", cfg.name}, {"space_id", cfg.space.id}, {"modes", nlohmann::json::array()}};
    for (const auto& ms : result.modes) {
        nlohmann::json m = {{"mode", to_string(ms.mode)},
                            {"seeds", ms.seeds},
                            {"final_norm_improvement", nan_safe(ms.final_norm_improvement)},
                            {"mean_final_norm_improvement", nan_safe(finite_mean(ms.final_norm_improvement))},
                            {"kt", nan_safe(ms.kt)},
                            {"pcc", nan_safe(ms.pcc)},
                            {"scc", nan_safe(ms.scc)},
                            {"mean_kt", nan_safe(finite_mean(ms.kt))},
                            {"mean_pcc", nan_safe(finite_mean(ms.pcc))},
                            {"mean_scc", nan_safe(finite_mean(ms.scc))},
                            {"mean_train_time_s", ms.mean_train_time_s},
                            {"params", ms.params},
                            {"baseline_params", ms.baseline_params}};
        if (ms.has_self_consistency) {
            m["self_consistency"] = {{"kt", ms.self.mean_kt}, {"pcc", ms.self.mean_pcc}, {"scc", ms.self.mean_scc}};
        }
        summary["modes"].push_back(std::move(m));
    }
    summary["notices"] = result.notices;
    write_json(out / "summary.json", summary);
    std::ofstream notes(out / "notices.txt");
    for (const auto& n : result.notices) notes << n << '\n';
    return result;
}

std::string report(const fs::path& dir) {
    std::ostringstream os;
    std::vector<std::string> missing;
    for (const char* f : {"config.json", "manifest.json", "bench.json", "correlations.csv", "resources.csv",
                          "summary.json"}) {
        if (!fs::exists(dir / f)) missing.push_back(f);
    }
    nlohmann::json manifest;
    if (fs::exists(dir / "manifest.json")) {
        manifest = read_json(dir / "manifest.json");
        for (const auto& m : manifest.at("modes")) {
            const auto mode = parse_mode(m.get<std::string>());
            for (const auto& s : manifest.at("seeds")) {
                const auto tag = run_tag(mode, s.get<std::uint64_t>());
                for (const auto& p : {fs::path("supernets") / (tag + ".json"), fs::path("logs") / (tag + ".jsonl"),
                                      fs::path("evals") / (tag + ".csv")}) {
                    if (!fs::exists(dir / p)) missing.push_back(p.string());
                }
            }
            const auto curve = fs::path("curves") / (mode_tag(mode) + ".csv");
            if (!fs::exists(dir / curve)) missing.push_back(curve.string());
        }
    }

    os << "experiment: " << dir.string() << '\n';
    if (!manifest.is_null()) {
        os << "space: " << manifest.value("space_id", std::string("?")) << " ("
           << manifest.value("space_size", std::uint64_t{0}) << " architectures)\n";
        os << "seeds: " << manifest.at("seeds").dump() << "  bench seeds: " << manifest.at("bench_seeds").dump()
           << '\n';
    }
    if (fs::exists(dir / "summary.json")) {
        const auto summary = read_json(dir / "summary.json");
        const nlohmann::json* base = nullptr;
        for (const auto& m : summary.at("modes")) {
            if (m.at("mode") == "baseline") base = &m;
        }
        auto num = [](const nlohmann::json& v) { return v.is_null() ? nan_v : v.get<double>(); };
        os << "\nmode             norm.impr      KT      PCC     SCC     self-KT  time+%   params+%\n";
        for (const auto& m : summary.at("modes")) {
            const double t = m.at("mean_train_time_s").get<double>();
            const double bt = base ? base->at("mean_train_time_s").get<double>() : nan_v;
            const double time_pct = (base && bt > 0) ? 100.0 * (t - bt) / bt : nan_v;
            const auto params = m.at("params").get<double>(), bparams = m.at("baseline_params").get<double>();
            const double param_pct = bparams > 0 ? 100.0 * (params - bparams) / bparams : nan_v;
            char line[256];
            std::snprintf(line, sizeof line, "%-16s %-14s %-7s %-7s %-7s %-8s %-8s %s\n",
                          m.at("mode").get<std::string>().c_str(),
                          fixed(num(m.at("mean_final_norm_improvement")), 4).c_str(),
                          fixed(num(m.at("mean_kt")), 3).c_str(), fixed(num(m.at("mean_pcc")), 3).c_str(),
                          fixed(num(m.at("mean_scc")), 3).c_str(),
                          m.contains("self_consistency") ? fixed(m["self_consistency"]["kt"].get<double>(), 3).c_str()
                                                         : "n/a",
                          fixed(time_pct, 1).c_str(), fixed(param_pct, 1).c_str());
            os << line;
            os << "  per-seed final normalized improvement: " << m.at("final_norm_improvement").dump() << '\n';
        }
        if (!summary.at("notices").empty()) {
            os << "\nnotices:\n";
            for (const auto& n : summary.at("notices")) os << "  " << n.get<std::string>() << '\n';
        }
    }
    if (!missing.empty()) {
        os << "\nincomplete, missing:\n";
        for (const auto& m : missing) os << "  " << m << '\n';
    }
    return os.str();
}

}  // namespace icnas
