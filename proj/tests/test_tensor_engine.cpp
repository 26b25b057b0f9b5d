#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "icnas/layers.hpp"
#include "icnas/optim.hpp"
#include "icnas/rng.hpp"
#include "support.hpp"

using namespace icnas;
using icnas::testing::random_tensor;
using icnas::testing::random_tensor64;

TEST_CASE("tensor shape bookkeeping") {
    Tensor t({2, 3, 4, 5});
    CHECK(t.size() == 120);
    CHECK(t.rank() == 4);
    t.at(1, 2, 3, 4) = 7.f;
    CHECK(t[119] == 7.f);
    CHECK_THROWS_AS(Tensor({2, 0}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>(3)), std::invalid_argument);
    CHECK(t.reshaped({6, 20}).size() == 120);
    CHECK_THROWS(t.reshaped({7, 20}));
    CHECK(t.all_finite());
    t[0] = std::numeric_limits<float>::infinity();
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("1x1 conv with identity weights leaves the input unchanged") {
    Rng init(3);
    Layer<float> conv(LayerSpec::conv(4, 4, 1), "c", init);
    auto& w = conv.parameters()[0]->value;
    w.fill(0.f);
    for (int i = 0; i < 4; ++i) w[static_cast<std::size_t>(i) * 4 + i] = 1.f;
    Rng rng(1);
    const Tensor x = random_tensor({2, 4, 5, 5}, rng);
    CHECK(conv.forward(x, Mode::eval) == x);
}

TEST_CASE("zero layer forward and backward are exactly zero") {
    Rng init(0), rng(2);
    Layer<float> z(LayerSpec::zero(16, 16), "z", init);
    const Tensor x = random_tensor({2, 16, 8, 8}, rng);
    const Tensor y = z.forward(x, Mode::train);
    CHECK(y.shape() == Shape{2, 16, 8, 8});
    CHECK(std::all_of(y.values().begin(), y.values().end(), [](float v) { return v == 0.f; }));
    const Tensor g = z.backward(random_tensor({2, 16, 8, 8}, rng));
    CHECK(std::all_of(g.values().begin(), g.values().end(), [](float v) { return v == 0.f; }));
    CHECK(param_count(LayerSpec::zero(16, 16)) == 0);
    CHECK(param_count(LayerSpec::identity()) == 0);
}

TEST_CASE("3x3 average pool of a constant field stays constant, padding excluded from the count") {
    Rng init(0);
    Layer<float> pool(LayerSpec::avgpool(3, 1, 1), "p", init);
    const Tensor x({1, 2, 5, 5}, 2.5f);
    const Tensor y = pool.forward(x, Mode::eval);
    for (float v : y.values()) CHECK(v == doctest::Approx(2.5f).epsilon(1e-7));

    // Zero padding counted in the divisor: the corner averages 4 of 9 cells.
    LayerSpec incl = LayerSpec::avgpool(3, 1, 1);
    incl.count_include_pad = true;
    Layer<float> p2(incl, "p2", init);
    const Tensor y2 = p2.forward(x, Mode::eval);
    CHECK(y2.at(0, 0, 0, 0) == doctest::Approx(2.5 * 4 / 9.0));
    CHECK(y2.at(0, 0, 2, 2) == doctest::Approx(2.5));
}

TEST_CASE("shape mismatch names the layer and the shapes") {
    Rng init(0);
    Layer<float> conv(LayerSpec::conv(3, 8, 3), "stem.0", init);
    try {
        conv.forward(Tensor({1, 4, 8, 8}), Mode::eval);
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("stem.0") != std::string::npos);
        CHECK(msg.find("[1,4,8,8]") != std::string::npos);
    }
    CHECK_THROWS_AS(output_shape(LayerSpec::dense(5, 2), {3, 4}), std::invalid_argument);
}

TEST_CASE("conv output arithmetic") {
    CHECK(output_shape(LayerSpec::conv(3, 8, 3), {2, 3, 8, 8}) == Shape{2, 8, 8, 8});
    CHECK(output_shape(LayerSpec::conv(8, 16, 3, 2), {2, 8, 8, 8}) == Shape{2, 16, 4, 4});
    CHECK(output_shape(LayerSpec::avgpool(2, 2, 0), {1, 8, 8, 8}) == Shape{1, 8, 4, 4});
    CHECK(output_shape(LayerSpec::global_avgpool(), {2, 8, 4, 4}) == Shape{2, 8});
    CHECK(LayerSpec::conv(4, 4, 3).padding == 1);
    CHECK(LayerSpec::conv(4, 4, 1).padding == 0);
}

TEST_CASE("ReLU backward blocks negative pre-activations") {
    Rng init(0);
    Layer<float> r(LayerSpec::relu(), "r", init);
    Tensor x({1, 1, 1, 2}, std::vector<float>{-0.5f, 0.5f});
    r.forward(x, Mode::train);
    const Tensor g = r.backward(Tensor({1, 1, 1, 2}, 1.f));
    CHECK(g[0] == 0.f);
    CHECK(g[1] == 1.f);
}

TEST_CASE("dense backward gives the outer product grad_y x^T") {
    Rng init(5), rng(6);
    Layer<double> d(LayerSpec::dense(3, 2, false), "d", init);
    const Tensor64 x = random_tensor64({1, 3}, rng);
    const Tensor64 gy = random_tensor64({1, 2}, rng);
    d.forward(x, Mode::train);
    d.backward(gy);
    const auto& gw = d.parameters()[0]->grad;
    for (int o = 0; o < 2; ++o) {
        for (int i = 0; i < 3; ++i) CHECK(gw[static_cast<std::size_t>(o) * 3 + i] == doctest::Approx(gy[o] * x[i]));
    }
}

TEST_CASE("backward without a train-mode forward is an error") {
    Rng init(0);
    for (auto kind : icnas::testing::all_layer_kinds()) {
        Rng rng(1);
        const auto c = icnas::testing::random_case(kind, rng);
        Layer<float> l(c.spec, "l", init);
        CHECK_THROWS_AS(l.backward(Tensor(output_shape(c.spec, c.input))), std::runtime_error);
        l.forward(Tensor(c.input), Mode::eval);
        CHECK_THROWS_AS(l.backward(Tensor(output_shape(c.spec, c.input))), std::runtime_error);
    }
}

TEST_CASE("finite-difference gradients agree for every layer kind") {
    Rng rng(2024);
    for (auto kind : icnas::testing::all_layer_kinds()) {
        for (int trial = 0; trial < 20; ++trial) {
            const auto c = icnas::testing::random_case(kind, rng);
            Layer<double> layer(c.spec, "g", rng);
            const Tensor64 x = icnas::testing::case_input(c, rng);
            const auto r = icnas::testing::grad_check(layer, x, rng);
            INFO(c.label);
            CHECK(r.input_error < 1e-3);
            CHECK(r.param_error < 1e-3);
        }
    }
}

TEST_CASE("BN train mode normalizes per channel to beta and gamma^2") {
    Rng init(0), rng(9);
    Layer<double> bn(LayerSpec::batchnorm(3), "bn", init);
    auto ps = bn.parameters();
    ps[0]->value = Tensor64({3}, std::vector<double>{1.0, 2.0, 0.5});
    ps[1]->value = Tensor64({3}, std::vector<double>{0.0, -1.0, 3.0});
    const Tensor64 x = random_tensor64({4, 3, 5, 5}, rng, -3, 7);
    const Tensor64 y = bn.forward(x, Mode::train);
    for (int c = 0; c < 3; ++c) {
        double s = 0, sq = 0;
        const int cnt = 4 * 25;
        for (int b = 0; b < 4; ++b) {
            for (int i = 0; i < 25; ++i) s += y.at(b, c, i / 5, i % 5);
        }
        const double m = s / cnt;
        for (int b = 0; b < 4; ++b) {
            for (int i = 0; i < 25; ++i) sq += (y.at(b, c, i / 5, i % 5) - m) * (y.at(b, c, i / 5, i % 5) - m);
        }
        const double gamma = ps[0]->value[c], beta = ps[1]->value[c];
        CHECK(std::fabs(m - beta) < 1e-4);
        // eps = 1e-5 in the denominator shrinks the variance slightly.
        CHECK(std::fabs(sq / cnt - gamma * gamma) < 1e-4 * gamma * gamma + 2e-5 * gamma * gamma);
    }
}

TEST_CASE("BN recalibration: parameters fixed, stats follow the closed-form recurrence") {
    Rng init(0), rng(4);
    Layer<float> bn(LayerSpec::batchnorm(4), "bn", init);
    bn.running_mean() = Tensor({4}, std::vector<float>{0.5f, -1.f, 2.f, 0.f});
    const Tensor rm0 = bn.running_mean();
    const Tensor batch = random_tensor({8, 4, 3, 3}, rng, -2, 4);
    std::vector<double> mu(4, 0.0);
    for (int c = 0; c < 4; ++c) {
        for (int b = 0; b < 8; ++b) {
            for (int i = 0; i < 9; ++i) mu[c] += batch.at(b, c, i / 3, i % 3);
        }
        mu[c] /= 72.0;
    }
    std::vector<std::vector<float>> before;
    for (auto* p : bn.parameters()) before.push_back(p->value.storage());
    const int k = 20;
    for (int i = 0; i < k; ++i) bn.forward(batch, Mode::recalibrate);
    CHECK_FALSE(bn.has_context());
    std::size_t idx = 0;
    for (auto* p : bn.parameters()) CHECK(p->value.storage() == before[idx++]);
    const double m = bn.bn_momentum();
    for (int c = 0; c < 4; ++c) {
        const double decay = std::pow(1 - m, k);
        const double expect = decay * rm0[c] + (1 - decay) * mu[c];
        CHECK(std::fabs(bn.running_mean()[c] - expect) < 1e-5);
        CHECK(bn.running_var()[c] > 0);
    }
    CHECK(bn.running_mean() != rm0);
}

TEST_CASE("BN eval mode uses running statistics") {
    Rng init(0);
    Layer<double> bn(LayerSpec::batchnorm(1, false), "bn", init);
    bn.running_mean() = Tensor64({1}, 2.0);
    bn.running_var() = Tensor64({1}, 4.0);
    const Tensor64 y = bn.forward(Tensor64({1, 1, 1, 1}, 6.0), Mode::eval);
    CHECK(y[0] == doctest::Approx(4.0 / std::sqrt(4.0 + 1e-5)));
}

namespace {

Param<float> scalar_param(float p, float g, ParamKind kind = ParamKind::weight) {
    Param<float> x("p", kind, Tensor({1}, p));
    x.grad[0] = g;
    x.has_grad = true;
    return x;
}

}  // namespace

TEST_CASE("sgd step examples") {
    SUBCASE("plain step") {
        auto p = scalar_param(0.f, 2.f);
        Param<float>* ps[] = {&p};
        sgd_step<float>(ps, {1.0, 0.0, 0.0});
        CHECK(p.value[0] == -2.f);
    }
    SUBCASE("momentum recurrence over two steps") {
        auto p = scalar_param(0.f, 1.f);
        Param<float>* ps[] = {&p};
        sgd_step<float>(ps, {1.0, 0.9, 0.0});
        sgd_step<float>(ps, {1.0, 0.9, 0.0});
        CHECK(p.value[0] == doctest::Approx(-2.9f));
    }
    SUBCASE("BN parameters skip weight decay") {
        auto bn = scalar_param(1.5f, 0.25f, ParamKind::batchnorm);
        auto ref = scalar_param(1.5f, 0.25f, ParamKind::batchnorm);
        Param<float>* a[] = {&bn};
        Param<float>* b[] = {&ref};
        sgd_step<float>(a, {0.1, 0.9, 0.5, true});
        sgd_step<float>(b, {0.1, 0.9, 0.0, true});
        CHECK(bn.value[0] == ref.value[0]);
        auto w = scalar_param(1.5f, 0.25f);
        Param<float>* c[] = {&w};
        sgd_step<float>(c, {0.1, 0.9, 0.5, true});
        CHECK(w.value[0] == doctest::Approx(1.5f - 0.1f * (0.25f + 0.75f)));
    }
    SUBCASE("decay applies to BN when not excluded") {
        auto bn = scalar_param(2.f, 0.f, ParamKind::batchnorm);
        Param<float>* a[] = {&bn};
        sgd_step<float>(a, {1.0, 0.0, 0.5, false});
        CHECK(bn.value[0] == doctest::Approx(1.f));
    }
    SUBCASE("choice biases skip decay by default") {
        auto b = scalar_param(2.f, 0.f, ParamKind::choice_bias);
        Param<float>* a[] = {&b};
        sgd_step<float>(a, {1.0, 0.0, 0.5});
        CHECK(b.value[0] == 2.f);
    }
    SUBCASE("parameters without gradient are untouched") {
        auto p = scalar_param(1.f, 5.f);
        p.has_grad = false;
        p.velocity[0] = 3.f;
        Param<float>* a[] = {&p};
        sgd_step<float>(a, {1.0, 0.9, 0.1});
        CHECK(p.value[0] == 1.f);
        CHECK(p.velocity[0] == 3.f);
    }
    SUBCASE("non-finite gradient names the parameter") {
        auto ok = scalar_param(1.f, 1.f);
        auto bad = scalar_param(1.f, std::numeric_limits<float>::quiet_NaN());
        bad.name = "u3.e2.c1.0.weight";
        Param<float>* a[] = {&ok, &bad};
        try {
            sgd_step<float>(a, {});
            FAIL("expected an exception");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("u3.e2.c1.0.weight") != std::string::npos);
        }
        CHECK(ok.value[0] == 1.f);
    }
}

TEST_CASE("cosine learning rate") {
    CHECK(cosine_lr(0, 250, 0.025, 1e-5, 0) == doctest::Approx(0.025));
    CHECK(cosine_lr(5, 250, 0.025, 1e-5, 5) == doctest::Approx(0.025));
    CHECK(cosine_lr(249, 250, 0.025, 1e-5, 0) == doctest::Approx(1e-5));
    CHECK(cosine_lr(249, 250, 0.025, 1e-5, 5) == doctest::Approx(1e-5));
    // Cosine phase runs from epoch 0 to 248 here; 124 is its midpoint.
    CHECK(cosine_lr(124, 249, 0.025, 1e-5, 0) == doctest::Approx((0.025 + 1e-5) / 2));
    CHECK(cosine_lr(2, 10, 0.1, 0.0, 4) == doctest::Approx(0.05));
    CHECK(cosine_lr(0, 10, 0.1, 0.0, 4) == 0.0);
    CHECK_THROWS_AS(cosine_lr(0, 10, 0.01, 0.1, 0), std::invalid_argument);
    CHECK_THROWS_AS(cosine_lr(10, 10, 0.1, 0.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(cosine_lr(-1, 10, 0.1, 0.0, 0), std::invalid_argument);
    double prev = 1;
    for (int e = 0; e < 50; ++e) {
        const double lr = cosine_lr(e, 50, 0.5, 0.01, 0);
        CHECK(lr <= prev);
        prev = lr;
    }
}

TEST_CASE("softmax cross-entropy and label smoothing") {
    const Tensor logits({2, 3}, std::vector<float>{1.f, 2.f, 3.f, 0.f, 0.f, 0.f});
    const std::vector<int> labels{2, 1};
    const auto r = softmax_cross_entropy(logits, labels);
    const double l0 = -std::log(std::exp(3.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
    const double l1 = std::log(3.0);
    CHECK(r.loss == doctest::Approx((l0 + l1) / 2));
    CHECK(r.correct == 1);
    const auto s = softmax_cross_entropy(logits, labels, 0.3);
    // Uniform logits: the smoothed loss is still log(3).
    const double p2 = std::exp(3.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
    const double p0 = std::exp(1.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
    const double p1 = std::exp(2.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
    const double smooth0 = -(0.8 * std::log(p2) + 0.1 * std::log(p0) + 0.1 * std::log(p1));
    CHECK(s.loss == doctest::Approx((smooth0 + l1) / 2));
    double rowsum = 0;
    for (int j = 0; j < 3; ++j) rowsum += s.grad_logits[static_cast<std::size_t>(j)];
    CHECK(rowsum == doctest::Approx(0.0).epsilon(1e-7));
    CHECK(argmax_rows(Tensor({1, 3}, std::vector<float>{1.f, 1.f, 0.f})) == std::vector<int>{0});
}

TEST_CASE("rng determinism and independent streams") {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 1000; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        differs |= x != c.next_u64();
    }
    CHECK(differs);
    CHECK(a.draws() == 1000);

    Rng root(7);
    Rng path = root.substream("path"), shuffle = root.substream("shuffle");
    Rng path2 = Rng(7).substream("path");
    int equal = 0;
    for (int i = 0; i < 100; ++i) {
        const auto p = path.next_u64();
        CHECK(p == path2.next_u64());
        equal += p == shuffle.next_u64();
    }
    CHECK(equal == 0);
}

TEST_CASE("rng derivation scheme golden values") {
    // The engine is the standard 64-bit Mersenne twister.
    std::mt19937_64 reference;
    reference.discard(9999);
    CHECK(reference() == 9981545732273789042ULL);
    Rng def(5489);
    for (int i = 0; i < 9999; ++i) def.next_u64();
    CHECK(def.next_u64() == 9981545732273789042ULL);

    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);

    // Sub-stream seeds: splitmix64(seed ^ fnv1a64(name)), recomputed here.
    auto fnv = [](const std::string& s) {
        std::uint64_t h = 14695981039346656037ULL;
        for (unsigned char ch : s) h = (h ^ ch) * 1099511628211ULL;
        return h;
    };
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    for (std::uint64_t seed : {0ULL, 1ULL, 123456789ULL}) {
        for (const char* name : {"path", "shuffle", "init"}) {
            std::mt19937_64 e(mix(seed ^ fnv(name)));
            Rng r = Rng(seed).substream(name);
            for (int i = 0; i < 5; ++i) CHECK(r.next_u64() == e());
        }
    }
}

TEST_CASE("rng distributions") {
    Rng r(11);
    std::vector<int> counts(5, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) counts[r.uniform_int(5)]++;
    const double sigma = std::sqrt(n * 0.2 * 0.8);
    for (int c : counts) CHECK(std::fabs(c - n * 0.2) < 3 * sigma);
    double s = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        s += z;
        sq += z * z;
    }
    CHECK(std::fabs(s / n) < 0.02);
    CHECK(std::fabs(sq / n - 1) < 0.03);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        CHECK((u >= 0 && u < 1));
    }
    auto p = r.permutation(50);
    std::set<int> seen(p.begin(), p.end());
    CHECK(seen.size() == 50);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 49);
    CHECK_THROWS(r.uniform_int(0));
}
