#include "icnas/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace icnas {

namespace {

nlohmann::json plain_scalar(const std::string& s) {
    if (s == "~" || s == "null" || s == "Null" || s == "NULL" || s.empty()) return nullptr;
    if (s == "true" || s == "True" || s == "TRUE") return true;
    if (s == "false" || s == "False" || s == "FALSE") return false;
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used, 10);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    return s;
}

nlohmann::json convert(const YAML::Node& n) {
    switch (n.Type()) {
        case YAML::NodeType::Null:
        case YAML::NodeType::Undefined: return nullptr;
        case YAML::NodeType::Scalar:
            // yaml-cpp tags quoted scalars with "!" and plain ones with "?".
            if (n.Tag() == "!") return n.Scalar();
            return plain_scalar(n.Scalar());
        case YAML::NodeType::Sequence: {
            auto a = nlohmann::json::array();
            for (const auto& e : n) a.push_back(convert(e));
            return a;
        }
        case YAML::NodeType::Map: {
            auto o = nlohmann::json::object();
            for (const auto& kv : n) {
                const auto key = kv.first.as<std::string>();
                if (o.contains(key)) throw std::invalid_argument("duplicate config key '" + key + "'");
                o[key] = convert(kv.second);
            }
            return o;
        }
    }
    return nullptr;
}

}  // namespace

nlohmann::json yaml_to_json(const std::string& text) {
    try {
        return convert(YAML::Load(text));
    } catch (const YAML::Exception& e) {
        throw std::invalid_argument(std::string("config parse error: ") + e.what());
    }
}

nlohmann::json read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") return nlohmann::json::parse(ss.str());
    return yaml_to_json(ss.str());
}

void ExperimentConfig::validate() const {
    space.validate();
    dataset.validate();
    supernet_training.validate();
    standalone_training.validate();
    if (seeds.empty()) throw std::invalid_argument("experiment needs at least one seed");
    if (bench_seeds.empty()) throw std::invalid_argument("experiment needs at least one bench seed");
    if (modes.empty()) throw std::invalid_argument("experiment needs at least one mode");
    for (const auto& m : modes) {
        m.validate();
        if (m.variant == Variant::split && supernet_training.epochs > 0 && m.split_epoch >= supernet_training.epochs) {
            throw std::invalid_argument("mode " + to_string(m) + " splits after the last epoch");
        }
    }
    if (dataset.num_classes != space.num_classes) {
        throw std::invalid_argument("dataset classes (" + std::to_string(dataset.num_classes) +
                                    ") differ from the space's classifier width (" +
                                    std::to_string(space.num_classes) + ")");
    }
    if (dataset.image_shape != space.input_shape) {
        throw std::invalid_argument("dataset image shape " + shape_str(dataset.image_shape) +
                                    " differs from the space input " + shape_str(space.input_shape));
    }
    if (eval_sample_n < 0) throw std::invalid_argument("eval_sample_n must be >= 0");
    if (stop_at_remaining < 2) throw std::invalid_argument("stop_at_remaining must be >= 2");
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
    if (evaluation.recalibration_passes < 0) throw std::invalid_argument("recalibration_passes must be >= 0");
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    nlohmann::json modes = nlohmann::json::array();
    for (const auto& m : c.modes) modes.push_back(to_string(m));
    nlohmann::json sn = c.supernet_training, sa = c.standalone_training;
    sn.erase("mode");
    sn.erase("seed");
    sa.erase("mode");
    sa.erase("seed");
    j = {{"name", c.name},
         {"space", c.space},
         {"dataset", c.dataset},
         {"supernet_training", sn},
         {"standalone_training", sa},
         {"evaluation",
          {{"recalibration_passes", c.evaluation.recalibration_passes},
           {"recalibration_batch_size", c.evaluation.recalibration_batch_size},
           {"eval_batch_size", c.evaluation.eval_batch_size},
           {"recalibration_seed", c.evaluation.recalibration_seed},
           {"sample_n", c.eval_sample_n},
           {"sample_seed", c.eval_sample_seed},
           {"stop_at_remaining", c.stop_at_remaining}}},
         {"modes", modes},
         {"seeds", c.seeds},
         {"bench_seeds", c.bench_seeds},
         {"bench_path", c.bench_path},
         {"output_dir", c.output_dir},
         {"threads", c.threads}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    static const char* known[] = {"name",  "space",       "dataset",    "supernet_training", "standalone_training",
                                  "evaluation", "modes",  "seeds",      "bench_seeds",       "bench_path",
                                  "output_dir", "threads"};
    for (const auto& [k, v] : j.items()) {
        if (std::find(std::begin(known), std::end(known), k) == std::end(known)) {
            throw std::invalid_argument("unknown config key '" + k + "'");
        }
    }
    ExperimentConfig e;
    e.name = j.value("name", e.name);
    if (j.contains("space")) e.space = j.at("space").get<SearchSpaceSpec>();
    if (j.contains("dataset")) e.dataset = j.at("dataset").get<DatasetSpec>();
    if (j.contains("supernet_training")) e.supernet_training = j.at("supernet_training").get<TrainConfig>();
    if (j.contains("standalone_training")) e.standalone_training = j.at("standalone_training").get<TrainConfig>();
    if (j.contains("evaluation")) {
        const auto& ev = j.at("evaluation");
        static const char* eval_keys[] = {"recalibration_passes", "recalibration_batch_size", "eval_batch_size",
                                          "recalibration_seed",   "sample_n",                 "sample_seed",
                                          "stop_at_remaining"};
        for (const auto& [k, v] : ev.items()) {
            if (std::find(std::begin(eval_keys), std::end(eval_keys), k) == std::end(eval_keys)) {
                throw std::invalid_argument("unknown evaluation key '" + k + "'");
            }
        }
        e.evaluation.recalibration_passes = ev.value("recalibration_passes", e.evaluation.recalibration_passes);
        e.evaluation.recalibration_batch_size =
            ev.value("recalibration_batch_size", e.evaluation.recalibration_batch_size);
        e.evaluation.eval_batch_size = ev.value("eval_batch_size", e.evaluation.eval_batch_size);
        e.evaluation.recalibration_seed = ev.value("recalibration_seed", e.evaluation.recalibration_seed);
        e.eval_sample_n = ev.value("sample_n", e.eval_sample_n);
        e.eval_sample_seed = ev.value("sample_seed", e.eval_sample_seed);
        e.stop_at_remaining = ev.value("stop_at_remaining", e.stop_at_remaining);
    }
    if (j.contains("modes")) {
        e.modes.clear();
        for (const auto& m : j.at("modes")) e.modes.push_back(parse_mode(m.get<std::string>()));
    }
    if (j.contains("seeds")) e.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("bench_seeds")) e.bench_seeds = j.at("bench_seeds").get<std::vector<std::uint64_t>>();
    e.bench_path = j.value("bench_path", e.bench_path);
    e.output_dir = j.value("output_dir", e.output_dir);
    e.threads = j.value("threads", e.threads);
    e.evaluation.threads = e.threads;
    e.validate();
    c = std::move(e);
}

ExperimentConfig load_experiment_config(const std::string& path) {
    try {
        return read_config_file(path).get<ExperimentConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config '" + path + "': " + e.what());
    }
}

}  // namespace icnas
