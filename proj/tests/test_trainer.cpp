#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "icnas/trainer.hpp"
#include "support.hpp"

using namespace icnas;
using icnas::testing::random_tensor;

namespace {

Dataset small_data(std::uint64_t seed = 1, double difficulty = 0.5) {
    DatasetSpec s;
    s.train_count = 64;
    s.val_count = 16;
    s.test_count = 64;
    s.difficulty = difficulty;
    s.seed = seed;
    Dataset d = gen_synthetic_dataset(s);
    normalize_dataset(d);
    return d;
}

TrainConfig small_cfg(int epochs, SupernetMode mode = SupernetMode::baseline()) {
    TrainConfig c;
    c.epochs = epochs;
    c.batch_size = 16;
    c.lr_initial = 0.05;
    c.augment.pixel_shift = 1;
    c.seed = 3;
    c.mode = mode;
    return c;
}

}  // namespace

TEST_CASE("config JSON uses the hyper-parameter keys and rejects unknown ones") {
    TrainConfig c = small_cfg(7, SupernetMode::split(3));
    c.warmup_epochs = 2;
    c.label_smoothing = 0.1;
    c.augment.horizontal_flip = true;
    nlohmann::json j = c;
    for (const char* k : {"initial_learning_rate", "final_learning_rate", "warmup_epochs", "momentum", "weight_decay",
                          "weight_decay_applies_to_batchnorm", "epochs", "batch_size", "cross_entropy_label_smoothing",
                          "pixel_shift", "random_horizontal_flipping", "normalization", "seed", "mode"}) {
        CHECK(j.contains(k));
    }
    CHECK(j.get<TrainConfig>() == c);
    j["learning_rate"] = 0.1;
    CHECK_THROWS_AS(j.get<TrainConfig>(), std::invalid_argument);
}

TEST_CASE("config validation") {
    auto bad = [](auto mutate) {
        TrainConfig c = small_cfg(5);
        mutate(c);
        return c;
    };
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.batch_size = 0; }).validate(), std::invalid_argument);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.warmup_epochs = 5; }).validate(), std::invalid_argument);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.lr_final = 1.0; }).validate(), std::invalid_argument);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.label_smoothing = 1.0; }).validate(), std::invalid_argument);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.mode = SupernetMode::split(5); }).validate(), std::invalid_argument);
    CHECK_NOTHROW(bad([](TrainConfig& c) { c.epochs = 0; }).validate());
}

TEST_CASE("zero epochs writes only the header and leaves weights alone") {
    const auto data = small_data();
    Supernet net(SearchSpaceSpec::toy_sequential(), SupernetMode::baseline(), 0);
    const auto sum = parameter_checksum(net, true);
    const auto log = train_supernet(net, data, small_cfg(0));
    CHECK(log.lines().size() == 1);
    CHECK(log.lines()[0]["type"] == "header");
    CHECK(log.epochs.empty());
    CHECK(log.batches == 0);
    CHECK(parameter_checksum(net, true) == sum);
}

TEST_CASE("training is deterministic for a fixed seed") {
    const auto data = small_data();
    const auto spec = SearchSpaceSpec::toy_sequential();
    Supernet a(spec, SupernetMode::bias(1), 0), b(spec, SupernetMode::bias(1), 0);
    const auto la = train_supernet(a, data, small_cfg(3, SupernetMode::bias(1)));
    const auto lb = train_supernet(b, data, small_cfg(3, SupernetMode::bias(1)));
    CHECK(parameter_checksum(a, true) == parameter_checksum(b, true));
    REQUIRE(la.epochs.size() == lb.epochs.size());
    for (std::size_t i = 0; i < la.epochs.size(); ++i) {
        CHECK(la.epochs[i].loss == lb.epochs[i].loss);
        CHECK(la.epochs[i].acc == lb.epochs[i].acc);
    }
    Supernet c(spec, SupernetMode::bias(1), 0);
    auto cfg = small_cfg(3, SupernetMode::bias(1));
    cfg.seed = 4;
    train_supernet(c, data, cfg);
    CHECK(parameter_checksum(a, true) != parameter_checksum(c, true));
}

TEST_CASE("log contents: path samples, learning rates, split event") {
    const auto data = small_data();
    const auto spec = SearchSpaceSpec::toy_sequential();
    Supernet net(spec, SupernetMode::split(2), 0);
    auto cfg = small_cfg(5, SupernetMode::split(2));
    cfg.warmup_epochs = 1;
    int calls = 0;
    const auto log = train_supernet(net, data, cfg, [&](const EpochLog&) { ++calls; });
    CHECK(calls == 5);
    CHECK(log.batches == 5u * 4);
    CHECK(log.path_samples == 5u * 4);
    REQUIRE(log.split_events == std::vector<int>{2});
    REQUIRE(log.epochs.size() == 5);
    for (const auto& e : log.epochs) {
        CHECK(e.lr == cosine_lr(e.epoch, 5, cfg.lr_initial, cfg.lr_final, 1));
        CHECK((e.acc >= 0 && e.acc <= 1));
        CHECK(std::isfinite(e.loss));
    }
    CHECK(log.epochs[0].lr == 0.0);
    const auto o = net.param_overhead();
    CHECK(log.epochs[1].params == o.baseline);
    CHECK(log.epochs[2].params - log.epochs[1].params == o.split_params);
    CHECK(o.split_params > 0);

    int split_lines = 0;
    std::size_t split_at = 0;
    const auto lines = log.lines();
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i]["type"] == "split") {
            ++split_lines;
            split_at = i;
        }
    }
    CHECK(split_lines == 1);
    // header, epochs 0 and 1, then the split line before epoch 2
    CHECK(split_at == 3);
    CHECK(lines[4]["epoch"] == 2);

    const auto path = std::filesystem::temp_directory_path() / "icnas_trainer_log.jsonl";
    log.write_jsonl(path.string());
    std::ifstream in(path);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        CHECK(nlohmann::json::parse(line) == lines[static_cast<std::size_t>(n)]);
        ++n;
    }
    CHECK(n == static_cast<int>(lines.size()));
    std::filesystem::remove(path);
}

TEST_CASE("training errors") {
    const auto data = small_data();
    const auto spec = SearchSpaceSpec::toy_sequential();
    Supernet net(spec, SupernetMode::baseline(), 0);
    CHECK_THROWS_AS(train_supernet(net, data, small_cfg(2, SupernetMode::bias(1))), std::invalid_argument);
    auto big = small_cfg(2);
    big.batch_size = 65;
    CHECK_THROWS_AS(train_supernet(net, data, big), std::invalid_argument);
    auto wild = small_cfg(2);
    wild.lr_initial = 1e30;
    wild.lr_final = 0;
    CHECK_THROWS_AS(train_supernet(net, data, wild), std::runtime_error);
}

TEST_CASE("augmentation") {
    Rng r(5);
    const Tensor x = random_tensor({6, 3, 8, 8}, r);
    SUBCASE("no shift and no flip is the identity") {
        Rng a(1);
        CHECK(augment(x, AugmentSpec{0, false, true}, a) == x);
    }
    SUBCASE("flip is an involution and mirrors columns") {
        const Tensor f = flip_horizontal(x);
        CHECK(flip_horizontal(f) == x);
        CHECK(f.at(2, 1, 3, 0) == x.at(2, 1, 3, 7));
    }
    SUBCASE("centered crop is the identity and shifted crops pad with zeros") {
        std::vector<std::pair<int, int>> centered(6, {2, 2});
        CHECK(shift_crop(x, 2, centered) == x);
        std::vector<std::pair<int, int>> corner(6, {0, 0});
        const Tensor c = shift_crop(x, 2, corner);
        CHECK(c.at(0, 0, 0, 0) == 0.f);
        CHECK(c.at(0, 0, 1, 1) == 0.f);
        CHECK(c.at(0, 0, 2, 2) == x.at(0, 0, 0, 0));
        CHECK(c.at(3, 2, 7, 7) == x.at(3, 2, 5, 5));
        CHECK_THROWS_AS(shift_crop(x, 2, std::vector<std::pair<int, int>>(6, {5, 0})), std::invalid_argument);
        CHECK_THROWS_AS(shift_crop(x, 2, std::vector<std::pair<int, int>>(2, {0, 0})), std::invalid_argument);
    }
    SUBCASE("offsets cover the whole shift window on 32x32 images") {
        Rng a(2), img(3);
        const Tensor big = random_tensor({16, 3, 32, 32}, img);
        std::set<std::pair<int, int>> seen;
        for (int i = 0; i < 100; ++i) {
            std::vector<std::pair<int, int>> off;
            const Tensor out = augment(big, AugmentSpec{4, false, true}, a, &off);
            CHECK(out.shape() == big.shape());
            REQUIRE(off.size() == 16);
            for (auto o : off) {
                CHECK((o.first >= 0 && o.first <= 8 && o.second >= 0 && o.second <= 8));
                seen.insert(o);
            }
        }
        CHECK(seen.size() == 81);
    }
    SUBCASE("flip happens about half the time") {
        Rng a(4), img(5);
        const Tensor one = random_tensor({1, 1, 4, 4}, img);
        const Tensor mirrored = flip_horizontal(one);
        int flips = 0;
        const int n = 4000;
        for (int i = 0; i < n; ++i) flips += augment(one, AugmentSpec{0, true, true}, a) == mirrored;
        CHECK(std::fabs(flips - n / 2.0) < 3 * std::sqrt(n * 0.25));
    }
}

TEST_CASE("stand-alone training learns the synthetic task") {
    DatasetSpec ds;
    ds.difficulty = 1.5;
    ds.seed = 7;
    Dataset data = gen_synthetic_dataset(ds);
    normalize_dataset(data);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.batch_size = 32;
    cfg.lr_initial = 0.05;
    cfg.augment.pixel_shift = 1;
    cfg.seed = 1;
    const auto r = train_standalone(SearchSpaceSpec::toy_sequential(), Genotype{{1, 1, 1}}, data, cfg);
    CHECK(r.test_acc > 0.5);  // chance is 0.25
    CHECK(r.train_acc > 0.5);
    CHECK(r.params == instantiate(SearchSpaceSpec::toy_sequential(), r.genotype).total_params());
    CHECK(r.log.path_samples == 0);
    CHECK(r.log.header["genotype"] == nlohmann::json(Genotype{{1, 1, 1}}));
}

TEST_CASE("an all-zero cell is no better than chance and loses to convolutions") {
    DatasetSpec ds;
    ds.difficulty = 1.0;
    ds.seed = 2;
    Dataset data = gen_synthetic_dataset(ds);
    normalize_dataset(data);
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.batch_size = 32;
    cfg.lr_initial = 0.05;
    cfg.seed = 1;
    const auto spec = SearchSpaceSpec::preset("nb201_full");
    const auto zero = train_standalone(spec, Genotype{{0, 0, 0, 0, 0, 0}}, data, cfg);
    const auto conv = train_standalone(spec, Genotype{{3, 3, 3, 3, 3, 3}}, data, cfg);
    CHECK(zero.test_acc < 0.35);
    CHECK(conv.test_acc > zero.test_acc + 0.2);
}
