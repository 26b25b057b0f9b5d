#include "icnas/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "icnas/numeric.hpp"

namespace icnas {

BnState capture_bn(const Supernet& net) {
    BnState s;
    for (const auto* l : net.batchnorms()) {
        s.mean.push_back(l->running_mean());
        s.var.push_back(l->running_var());
    }
    return s;
}

void apply_bn(Supernet& net, const BnState& state) {
    auto bns = net.batchnorms();
    if (bns.size() != state.mean.size() || bns.size() != state.var.size()) {
        throw std::invalid_argument("BN state has " + std::to_string(state.mean.size()) + " layers, network has " +
                                    std::to_string(bns.size()));
    }
    for (std::size_t i = 0; i < bns.size(); ++i) {
        bns[i]->running_mean() = state.mean[i];
        bns[i]->running_var() = state.var[i];
    }
}

std::vector<Tensor> recalibration_batches(const Split& train, int k, int batch_size, std::uint64_t seed) {
    if (k < 0) throw std::invalid_argument("recalibration passes must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("recalibration batch size must be >= 1");
    const int bs = std::min(batch_size, train.size());
    Rng rng = Rng(seed).substream("recalibration");
    std::vector<int> order = rng.permutation(train.size());
    std::vector<Tensor> out;
    std::size_t pos = 0;
    std::vector<int> idx(static_cast<std::size_t>(bs));
    for (int b = 0; b < k; ++b) {
        for (auto& i : idx) {
            if (pos == order.size()) {
                order = rng.permutation(train.size());
                pos = 0;
            }
            i = order[pos++];
        }
        out.push_back(gather(train, idx).images);
    }
    return out;
}

namespace {

void recalibrate_in_place(Supernet& net, const Genotype& g, const std::vector<Tensor>& batches, int k) {
    if (k < 0) throw std::invalid_argument("recalibration passes must be >= 0");
    if (k > 0 && batches.empty()) throw std::invalid_argument("recalibration needs at least one batch");
    for (int i = 0; i < k; ++i) net.forward(batches[static_cast<std::size_t>(i) % batches.size()], g, Mode::recalibrate);
}

}  // namespace

BnState recalibrate_bn(const Supernet& net, const Genotype& g, const std::vector<Tensor>& batches, int k) {
    if (k == 0) std::cerr << "warning: recalibration with k = 0 leaves the BN statistics unchanged\n";
    Supernet copy = net;
    recalibrate_in_place(copy, g, batches, k);
    return capture_bn(copy);
}

EvalRecord predict_accuracy(const Supernet& net, const Genotype& g, const BnState& bn, const Split& validation,
                            std::uint64_t seed, const std::string& supernet_id, int batch_size) {
    if (validation.size() == 0) throw std::invalid_argument("predict_accuracy: empty validation set");
    Supernet copy = net;
    apply_bn(copy, bn);
    return {g, accuracy(copy, g, validation, batch_size), seed, supernet_id};
}

std::vector<EvalRecord> evaluate_set(const Supernet& net, const std::vector<Genotype>& genotypes,
                                     const Dataset& data, const EvalConfig& cfg, std::uint64_t seed,
                                     const std::string& supernet_id) {
    if (data.val.size() == 0) throw std::invalid_argument("evaluate_set: empty validation set");
    for (const auto& g : genotypes) require_valid(net.spec(), g);
    if (cfg.recalibration_passes == 0) {
        std::cerr << "warning: recalibration with k = 0 leaves the BN statistics unchanged\n";
    }
    const auto batches = recalibration_batches(data.train, cfg.recalibration_passes, cfg.recalibration_batch_size,
                                               cfg.recalibration_seed);
    const BnState trained = capture_bn(net);
    const int workers = std::max(1, std::min<int>(cfg.threads, static_cast<int>(genotypes.size())));
    std::vector<Supernet> copies(static_cast<std::size_t>(workers), net);
    std::vector<EvalRecord> out(genotypes.size());
    parallel_for(genotypes.size(), workers, [&](std::size_t i, int w) {
        Supernet& local = copies[w];
        apply_bn(local, trained);
        recalibrate_in_place(local, genotypes[i], batches, cfg.recalibration_passes);
        out[i] = {genotypes[i], accuracy(local, genotypes[i], data.val, cfg.eval_batch_size), seed, supernet_id};
    });
    return out;
}

void write_eval_csv(const std::vector<EvalRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "genotype;predicted_acc;seed;supernet_id\n";
    char buf[64];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, "%.17g", r.predicted_acc);
        out << to_string(r.genotype) << ';' << buf << ';' << r.seed << ';' << r.supernet_id << '\n';
    }
}

std::vector<EvalRecord> read_eval_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "genotype;predicted_acc;seed;supernet_id") {
        throw std::runtime_error("'" + path + "' is not an evaluation CSV");
    }
    std::vector<EvalRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string g, acc, seed, id;
        if (!std::getline(ss, g, ';') || !std::getline(ss, acc, ';') || !std::getline(ss, seed, ';')) {
            throw std::runtime_error("malformed evaluation row '" + line + "'");
        }
        std::getline(ss, id);
        out.push_back({parse_genotype(g), std::stod(acc), std::stoull(seed), id});
    }
    return out;
}

// ---------------------------------------------------------------------------

void BenchTable::recompute_aggregates() {
    std::map<Genotype, std::vector<double>> by;
    for (const auto& r : records) {
        if (r.ok) by[r.genotype].push_back(r.test_acc);
    }
    aggregates.clear();
    for (const auto& [g, accs] : by) aggregates.push_back({g, exact_mean(accs), static_cast<int>(accs.size())});
}

std::optional<double> BenchTable::truth(const Genotype& g) const {
    auto it = std::lower_bound(aggregates.begin(), aggregates.end(), g,
                               [](const BenchAggregate& a, const Genotype& key) { return a.genotype < key; });
    if (it == aggregates.end() || it->genotype != g) return std::nullopt;
    return it->mean_test_acc;
}

std::size_t BenchTable::failures() const {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const auto& r) { return !r.ok; }));
}

void to_json(nlohmann::json& j, const BenchTable& t) {
    auto recs = nlohmann::json::array();
    for (const auto& r : t.records) {
        nlohmann::json e = {{"genotype", r.genotype},   {"seed", r.seed},     {"train_acc", r.train_acc},
                            {"test_acc", r.test_acc},   {"params", r.params}, {"train_time_s", r.train_time_s},
                            {"ok", r.ok}};
        if (!r.ok) e["error"] = r.error;
        recs.push_back(std::move(e));
    }
    auto aggs = nlohmann::json::array();
    for (const auto& a : t.aggregates) {
        aggs.push_back({{"genotype", a.genotype}, {"mean_test_acc", a.mean_test_acc}, {"runs", a.runs}});
    }
    j = {{"space_id", t.space_id}, {"dataset_id", t.dataset_id}, {"records", recs}, {"aggregates", aggs}};
}

void from_json(const nlohmann::json& j, BenchTable& t) {
    BenchTable b;
    b.space_id = j.at("space_id").get<std::string>();
    b.dataset_id = j.at("dataset_id").get<std::string>();
    for (const auto& e : j.at("records")) {
        BenchRecord r;
        r.genotype = e.at("genotype").get<Genotype>();
        r.seed = e.at("seed").get<std::uint64_t>();
        r.train_acc = e.at("train_acc").get<double>();
        r.test_acc = e.at("test_acc").get<double>();
        r.params = e.at("params").get<std::size_t>();
        r.train_time_s = e.at("train_time_s").get<double>();
        r.ok = e.value("ok", true);
        r.error = e.value("error", std::string());
        b.records.push_back(std::move(r));
    }
    for (const auto& e : j.at("aggregates")) {
        b.aggregates.push_back(
            {e.at("genotype").get<Genotype>(), e.at("mean_test_acc").get<double>(), e.at("runs").get<int>()});
    }
    t = std::move(b);
}

void save_bench(const BenchTable& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << nlohmann::json(t).dump(1) << '\n';
}

BenchTable load_bench(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read bench table '" + path + "'");
    return nlohmann::json::parse(in).get<BenchTable>();
}

BenchTable build_bench_table(const SearchSpaceSpec& spec, const std::vector<Genotype>& genotypes,
                             const std::vector<std::uint64_t>& seeds, const Dataset& data, const TrainConfig& cfg,
                             int threads) {
    for (const auto& g : genotypes) require_valid(spec, g);
    if (seeds.empty()) throw std::invalid_argument("build_bench_table: no seeds");
    BenchTable t;
    t.space_id = spec.id;
    t.dataset_id = data.id;
    t.records.resize(genotypes.size() * seeds.size());
    parallel_for(t.records.size(), threads, [&](std::size_t i, int) {
        const Genotype& g = genotypes[i / seeds.size()];
        const std::uint64_t seed = seeds[i % seeds.size()];
        BenchRecord& r = t.records[i];
        r.genotype = g;
        r.seed = seed;
        try {
            TrainConfig c = cfg;
            c.seed = seed;
            const auto res = train_standalone(spec, g, data, c);
            r.train_acc = res.train_acc;
            r.test_acc = res.test_acc;
            r.params = res.params;
            r.train_time_s = res.train_time_s;
        } catch (const std::exception& e) {
            r.ok = false;
            r.error = e.what();
        }
    });
    t.recompute_aggregates();
    return t;
}

}  // namespace icnas
