#include "icnas/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace icnas {

template <typename T>
void sgd_step(std::span<Param<T>* const> params, const OptimizerState& state) {
    for (auto* p : params) {
        if (!p->has_grad) continue;
        if (!p->grad.all_finite()) {
            throw std::runtime_error("non-finite gradient in parameter '" + p->name + "'");
        }
    }
    for (auto* p : params) {
        if (!p->has_grad) continue;
        bool decay = state.weight_decay != 0.0;
        if (p->kind == ParamKind::batchnorm && state.decay_excludes_bn) decay = false;
        if (p->kind == ParamKind::choice_bias && state.decay_excludes_choice_bias) decay = false;
        const T mom = static_cast<T>(state.momentum);
        const T wd = decay ? static_cast<T>(state.weight_decay) : T(0);
        const T lr = static_cast<T>(state.lr);
        auto v = p->velocity.values();
        auto w = p->value.values();
        auto g = p->grad.values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = mom * v[i] + g[i] + wd * w[i];
            w[i] -= lr * v[i];
        }
    }
}

template void sgd_step<float>(std::span<Param<float>* const>, const OptimizerState&);
template void sgd_step<double>(std::span<Param<double>* const>, const OptimizerState&);

double cosine_lr(int epoch, int total_epochs, double lr_initial, double lr_final, int warmup_epochs) {
    if (lr_final > lr_initial) throw std::invalid_argument("cosine_lr: lr_final exceeds lr_initial");
    if (epoch < 0 || epoch >= total_epochs) {
        throw std::invalid_argument("cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                                    std::to_string(total_epochs) + ")");
    }
    if (warmup_epochs < 0 || warmup_epochs >= total_epochs) {
        throw std::invalid_argument("cosine_lr: warmup_epochs must be in [0, total_epochs)");
    }
    if (epoch < warmup_epochs) return lr_initial * static_cast<double>(epoch) / warmup_epochs;
    const int span = total_epochs - 1 - warmup_epochs;
    if (span == 0) return lr_initial;
    const double t = static_cast<double>(epoch - warmup_epochs) / span;
    return lr_final + (lr_initial - lr_final) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, double label_smoothing) {
    if (logits.rank() != 2 || static_cast<std::size_t>(logits.dim(0)) != labels.size()) {
        throw std::invalid_argument("softmax_cross_entropy: logits " + shape_str(logits.shape()) +
                                    " do not match " + std::to_string(labels.size()) + " labels");
    }
    const int n = logits.dim(0), k = logits.dim(1);
    LossResult r;
    r.grad_logits = Tensor(logits.shape());
    double total = 0;
    std::vector<double> prob(static_cast<std::size_t>(k));
    for (int b = 0; b < n; ++b) {
        const float* row = logits.data() + static_cast<std::size_t>(b) * k;
        const int label = labels[b];
        if (label < 0 || label >= k) throw std::invalid_argument("label out of range");
        double mx = row[0];
        int best = 0;
        for (int j = 1; j < k; ++j) {
            if (row[j] > mx) {
                mx = row[j];
                best = j;
            }
        }
        if (best == label) ++r.correct;
        double z = 0;
        for (int j = 0; j < k; ++j) {
            prob[j] = std::exp(row[j] - mx);
            z += prob[j];
        }
        const double logz = std::log(z) + mx;
        for (int j = 0; j < k; ++j) {
            const double target = (j == label ? 1.0 - label_smoothing : 0.0) + label_smoothing / k;
            total -= target * (row[j] - logz);
            r.grad_logits[static_cast<std::size_t>(b) * k + j] = static_cast<float>((prob[j] / z - target) / n);
        }
    }
    r.loss = total / n;
    return r;
}

std::vector<int> argmax_rows(const Tensor& logits) {
    const int n = logits.dim(0), k = logits.dim(1);
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int b = 0; b < n; ++b) {
        const float* row = logits.data() + static_cast<std::size_t>(b) * k;
        int best = 0;
        for (int j = 1; j < k; ++j) {
            if (row[j] > row[best]) best = j;
        }
        out[b] = best;
    }
    return out;
}

}  // namespace icnas
