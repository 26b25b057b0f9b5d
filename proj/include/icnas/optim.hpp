#pragma once

#include <span>
#include <vector>

#include "icnas/layers.hpp"
#include "icnas/tensor.hpp"

namespace icnas {

// SGD hyper-parameters. Momentum buffers live in each Param (Param::velocity)
// so they follow the parameter through copies and weight splitting.
struct OptimizerState {
    double lr = 0.025;
    double momentum = 0.9;
    double weight_decay = 3e-4;
    bool decay_excludes_bn = true;
    bool decay_excludes_choice_bias = true;
};

// v <- momentum * v + g + wd * p ; p <- p - lr * v
// Parameters without a gradient from the last backward are skipped.
// Throws std::runtime_error naming the parameter on a non-finite gradient.
template <typename T>
void sgd_step(std::span<Param<T>* const> params, const OptimizerState& state);

template <typename T>
void zero_grad(std::span<Param<T>* const> params) {
    for (auto* p : params) p->zero_grad();
}

// Linear warmup from 0 to lr_initial over warmup_epochs, then half-cosine
// from lr_initial down to lr_final at the last epoch.
double cosine_lr(int epoch, int total_epochs, double lr_initial, double lr_final, int warmup_epochs);

struct LossResult {
    double loss = 0.0;     // mean over batch
    int correct = 0;       // top-1 hits
    Tensor grad_logits;    // d(mean loss)/d(logits)
};

// Softmax cross-entropy. Targets are (1 - eps) * one_hot + eps / num_classes.
LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, double label_smoothing = 0.0);

// Index of the largest logit per row; ties resolve to the lowest index.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace icnas
