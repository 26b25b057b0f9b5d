#include "icnas/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace icnas {

void TrainConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (warmup_epochs < 0) throw std::invalid_argument("warmup_epochs must be >= 0");
    if (epochs > 0 && warmup_epochs >= epochs) throw std::invalid_argument("epochs must exceed warmup_epochs");
    if (lr_final > lr_initial) throw std::invalid_argument("final learning rate exceeds the initial one");
    if (label_smoothing < 0 || label_smoothing >= 1) throw std::invalid_argument("label smoothing must be in [0, 1)");
    if (augment.pixel_shift < 0) throw std::invalid_argument("pixel_shift must be >= 0");
    mode.validate();
    if (mode.variant == Variant::split && epochs > 0 && mode.split_epoch >= epochs) {
        throw std::invalid_argument("split epoch " + std::to_string(mode.split_epoch) + " is not below epochs " +
                                    std::to_string(epochs));
    }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"initial_learning_rate", c.lr_initial},
         {"final_learning_rate", c.lr_final},
         {"momentum", c.momentum},
         {"weight_decay", c.weight_decay},
         {"weight_decay_applies_to_batchnorm", c.weight_decay_applies_to_bn},
         {"warmup_epochs", c.warmup_epochs},
         {"cross_entropy_label_smoothing", c.label_smoothing},
         {"pixel_shift", c.augment.pixel_shift},
         {"random_horizontal_flipping", c.augment.horizontal_flip},
         {"normalization", c.augment.normalize},
         {"seed", c.seed},
         {"mode", to_string(c.mode)}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    static const char* known[] = {"epochs",
                                  "batch_size",
                                  "initial_learning_rate",
                                  "final_learning_rate",
                                  "momentum",
                                  "weight_decay",
                                  "weight_decay_applies_to_batchnorm",
                                  "warmup_epochs",
                                  "cross_entropy_label_smoothing",
                                  "pixel_shift",
                                  "random_horizontal_flipping",
                                  "normalization",
                                  "seed",
                                  "mode"};
    for (const auto& [k, v] : j.items()) {
        if (std::find(std::begin(known), std::end(known), k) == std::end(known)) {
            throw std::invalid_argument("unknown training key '" + k + "'");
        }
    }
    TrainConfig t;
    t.epochs = j.value("epochs", t.epochs);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.lr_initial = j.value("initial_learning_rate", t.lr_initial);
    t.lr_final = j.value("final_learning_rate", t.lr_final);
    t.momentum = j.value("momentum", t.momentum);
    t.weight_decay = j.value("weight_decay", t.weight_decay);
    t.weight_decay_applies_to_bn = j.value("weight_decay_applies_to_batchnorm", t.weight_decay_applies_to_bn);
    t.warmup_epochs = j.value("warmup_epochs", t.warmup_epochs);
    t.label_smoothing = j.value("cross_entropy_label_smoothing", t.label_smoothing);
    t.augment.pixel_shift = j.value("pixel_shift", t.augment.pixel_shift);
    t.augment.horizontal_flip = j.value("random_horizontal_flipping", t.augment.horizontal_flip);
    t.augment.normalize = j.value("normalization", t.augment.normalize);
    t.seed = j.value("seed", t.seed);
    if (j.contains("mode")) t.mode = parse_mode(j.at("mode").get<std::string>());
    t.validate();
    c = t;
}

std::vector<nlohmann::json> TrainLog::lines() const {
    std::vector<nlohmann::json> out{header};
    std::size_t s = 0;
    for (const auto& e : epochs) {
        while (s < split_events.size() && split_events[s] <= e.epoch) {
            out.push_back({{"type", "split"}, {"epoch", split_events[s++]}});
        }
        out.push_back({{"type", "epoch"},
                       {"epoch", e.epoch},
                       {"loss", e.loss},
                       {"acc", e.acc},
                       {"lr", e.lr},
                       {"wall_time_s", e.wall_time_s},
                       {"params", e.params}});
    }
    for (; s < split_events.size(); ++s) out.push_back({{"type", "split"}, {"epoch", split_events[s]}});
    return out;
}

void TrainLog::write_jsonl(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write training log '" + path + "'");
    for (const auto& l : lines()) out << l.dump() << '\n';
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Shared loop; `fixed` set means stand-alone training along one path.
TrainLog run_training(Supernet& net, const Dataset& data, const TrainConfig& cfg, const Genotype* fixed,
                      const EpochCallback& cb) {
    cfg.validate();
    const Rng root(cfg.seed);
    Rng shuffle_rng = root.substream("shuffle");
    Rng path_rng = root.substream("path");
    Rng augment_rng = root.substream("augment");

    const int n = data.train.size();
    const int per_epoch = n / cfg.batch_size;
    if (cfg.epochs > 0 && per_epoch == 0) {
        throw std::invalid_argument("training split (" + std::to_string(n) + ") smaller than batch size " +
                                    std::to_string(cfg.batch_size));
    }

    TrainLog log;
    log.header = {{"type", "header"},
                  {"mode", to_string(net.mode())},
                  {"space", net.spec().id},
                  {"dataset", data.id},
                  {"seed", cfg.seed},
                  {"batches_per_epoch", per_epoch},
                  {"params", net.param_count()},
                  {"config", cfg}};
    if (fixed) log.header["genotype"] = *fixed;

    OptimizerState opt;
    opt.momentum = cfg.momentum;
    opt.weight_decay = cfg.weight_decay;
    opt.decay_excludes_bn = !cfg.weight_decay_applies_to_bn;

    const auto t0 = Clock::now();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (!fixed && net.mode().variant == Variant::split && epoch == net.mode().split_epoch && !net.split_done()) {
            net.split_weights(epoch);
            log.split_events.push_back(epoch);
        }
        opt.lr = cosine_lr(epoch, cfg.epochs, cfg.lr_initial, cfg.lr_final, cfg.warmup_epochs);
        const auto order = shuffle_rng.permutation(n);
        double loss_sum = 0;
        long correct = 0;
        for (int b = 0; b < per_epoch; ++b) {
            const std::span<const int> idx(order.data() + static_cast<std::size_t>(b) * cfg.batch_size,
                                           static_cast<std::size_t>(cfg.batch_size));
            Split batch = gather(data.train, idx);
            const Tensor x = augment(batch.images, cfg.augment, augment_rng);
            Genotype g;
            if (fixed) {
                g = *fixed;
            } else {
                g = sample_path(net.spec(), path_rng);
                ++log.path_samples;
            }
            auto params = net.parameters();
            zero_grad<float>(params);
            const Tensor logits = net.forward(x, g, Mode::train);
            auto res = softmax_cross_entropy(logits, batch.labels, cfg.label_smoothing);
            if (!std::isfinite(res.loss)) {
                throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                         std::to_string(b));
            }
            net.backward(res.grad_logits);
            params = net.parameters();  // bias tables may have grown during forward
            sgd_step<float>(params, opt);
            loss_sum += res.loss;
            correct += res.correct;
            ++log.batches;
        }
        EpochLog e;
        e.epoch = epoch;
        e.loss = loss_sum / per_epoch;
        e.acc = static_cast<double>(correct) / (static_cast<double>(per_epoch) * cfg.batch_size);
        e.lr = opt.lr;
        e.wall_time_s = seconds_since(t0);
        e.params = net.param_count();
        log.epochs.push_back(e);
        if (cb) cb(e);
    }
    net.clear_context();
    log.wall_time_s = seconds_since(t0);
    return log;
}

}  // namespace

TrainLog train_supernet(Supernet& net, const Dataset& data, const TrainConfig& cfg, const EpochCallback& cb) {
    if (net.mode() != cfg.mode) {
        throw std::invalid_argument("training config mode " + to_string(cfg.mode) + " differs from the network mode " +
                                    to_string(net.mode()));
    }
    return run_training(net, data, cfg, nullptr, cb);
}

StandaloneResult train_standalone(const SearchSpaceSpec& spec, const Genotype& g, const Dataset& data,
                                  const TrainConfig& cfg) {
    require_valid(spec, g);
    TrainConfig c = cfg;
    c.mode = SupernetMode::baseline();
    Supernet net(spec, c.mode, c.seed, g);
    StandaloneResult r;
    r.genotype = g;
    r.seed = c.seed;
    r.log = run_training(net, data, c, &g, {});
    r.train_time_s = r.log.wall_time_s;
    r.params = net.param_count();
    r.train_acc = accuracy(net, g, data.train);
    r.test_acc = accuracy(net, g, data.test);
    return r;
}

double accuracy(Supernet& net, const Genotype& g, const Split& s, int batch_size) {
    if (s.size() == 0) throw std::invalid_argument("accuracy over an empty split");
    long correct = 0;
    std::vector<int> idx;
    for (int start = 0; start < s.size(); start += batch_size) {
        const int end = std::min(s.size(), start + batch_size);
        idx.resize(static_cast<std::size_t>(end - start));
        for (int i = start; i < end; ++i) idx[i - start] = i;
        const Split batch = gather(s, idx);
        const auto pred = argmax_rows(net.forward(batch.images, g, Mode::eval));
        for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i];
    }
    return static_cast<double>(correct) / s.size();
}

}  // namespace icnas
