#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "icnas/layers.hpp"
#include "icnas/rng.hpp"

namespace icnas::testing {

inline Tensor64 random_tensor64(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor64 t(s);
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

inline Tensor random_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(s);
    for (auto& v : t.values()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

// ||a - b|| / max(||a||, ||b||); 0 when both vanish.
inline double relative_l2(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::sqrt(std::max(na, nb));
    if (scale < 1e-12) return std::sqrt(d);
    return std::sqrt(d) / scale;
}

struct GradCheck {
    double input_error = 0;
    double param_error = 0;  // worst over parameter tensors
    double worst() const { return std::max(input_error, param_error); }
};

// Analytic input and parameter gradients of L = <proj, layer(x)> against
// central differences with step eps, all in float64 train mode.
inline GradCheck grad_check(Layer<double>& layer, const Tensor64& x, Rng& rng, double eps = 1e-3) {
    const Shape os = output_shape(layer.spec(), x.shape());
    const Tensor64 proj = random_tensor64(os, rng);
    auto loss = [&](const Tensor64& in) {
        const Tensor64 y = layer.forward(in, Mode::train);
        double s = 0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * proj[i];
        return s;
    };
    for (auto* p : layer.parameters()) p->zero_grad();
    layer.forward(x, Mode::train);
    const Tensor64 gin = layer.backward(proj);
    std::vector<std::vector<double>> pgrads;
    for (auto* p : layer.parameters()) pgrads.push_back(p->grad.storage());

    GradCheck r;
    std::vector<double> num(x.size());
    Tensor64 xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = xp[i];
        xp[i] = keep + eps;
        const double lp = loss(xp);
        xp[i] = keep - eps;
        const double lm = loss(xp);
        xp[i] = keep;
        num[i] = (lp - lm) / (2 * eps);
    }
    r.input_error = relative_l2(gin.storage(), num);

    auto params = layer.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& v = params[k]->value;
        std::vector<double> pn(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double keep = v[i];
            v[i] = keep + eps;
            const double lp = loss(x);
            v[i] = keep - eps;
            const double lm = loss(x);
            v[i] = keep;
            pn[i] = (lp - lm) / (2 * eps);
        }
        r.param_error = std::max(r.param_error, relative_l2(pgrads[k], pn));
    }
    return r;
}

// Random layer of the given kind with a compatible random input shape.
struct GradCase {
    LayerSpec spec;
    Shape input;
    std::string label;
};

inline GradCase random_case(LayerKind kind, Rng& rng) {
    auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(hi - lo + 1))); };
    const int n = pick(1, 3), c = pick(1, 4), h = pick(2, 6), w = pick(2, 6);
    GradCase g;
    g.input = {n, c, h, w};
    switch (kind) {
        case LayerKind::conv2d: {
            const int k = rng.bernoulli(0.5) ? 3 : 1;
            g.spec = LayerSpec::conv(c, pick(1, 4), k, pick(1, 2), rng.bernoulli(0.5));
            break;
        }
        case LayerKind::batchnorm2d:
            g.input[0] = std::max(n, 2);
            g.spec = LayerSpec::batchnorm(c, rng.bernoulli(0.7));
            break;
        case LayerKind::relu: g.spec = LayerSpec::relu(); break;
        case LayerKind::avgpool2d:
            g.spec = LayerSpec::avgpool(rng.bernoulli(0.5) ? 3 : 2, pick(1, 2), rng.bernoulli(0.5) ? 1 : 0);
            if (g.spec.padding == 0) {
                g.input[2] = std::max(h, g.spec.kernel);
                g.input[3] = std::max(w, g.spec.kernel);
            }
            g.spec.count_include_pad = rng.bernoulli(0.5);
            break;
        case LayerKind::globalavgpool: g.spec = LayerSpec::global_avgpool(); break;
        case LayerKind::dense:
            g.input = {n, pick(1, 8)};
            g.spec = LayerSpec::dense(g.input[1], pick(1, 6), rng.bernoulli(0.5));
            break;
        case LayerKind::zero: g.spec = LayerSpec::zero(c, c, pick(1, 2)); break;
        case LayerKind::identity: g.spec = LayerSpec::identity(); break;
    }
    g.label = std::string(to_string(kind)) + " in=" + shape_str(g.input);
    return g;
}

// Inputs for ReLU stay away from the kink so differences are smooth.
inline Tensor64 case_input(const GradCase& c, Rng& rng) {
    Tensor64 x = random_tensor64(c.input, rng);
    if (c.spec.kind == LayerKind::relu) {
        for (auto& v : x.values()) {
            if (std::fabs(v) < 0.05) v = v < 0 ? -0.05 - std::fabs(v) : 0.05 + v;
        }
    }
    return x;
}

inline const std::vector<LayerKind>& all_layer_kinds() {
    static const std::vector<LayerKind> k{LayerKind::conv2d,        LayerKind::batchnorm2d, LayerKind::relu,
                                          LayerKind::avgpool2d,     LayerKind::globalavgpool, LayerKind::dense,
                                          LayerKind::zero,          LayerKind::identity};
    return k;
}

}  // namespace icnas::testing
