#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "icnas/rng.hpp"
#include "icnas/tensor.hpp"

namespace icnas {

enum class Mode { train, eval, recalibrate };

enum class LayerKind { conv2d, batchnorm2d, relu, avgpool2d, globalavgpool, dense, zero, identity };

const char* to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string& s);

// Static description of one layer. Parameters are allocated by Layer.
struct LayerSpec {
    LayerKind kind = LayerKind::identity;
    int kernel = 1;
    int in_channels = 0;
    int out_channels = 0;
    int stride = 1;
    int padding = 0;
    bool has_bias = false;       // conv2d / dense
    bool has_affine = true;      // batchnorm2d
    bool count_include_pad = false;  // avgpool2d

    static LayerSpec conv(int in, int out, int kernel, int stride = 1, bool bias = false);
    static LayerSpec batchnorm(int channels, bool affine = true);
    static LayerSpec relu();
    static LayerSpec avgpool(int kernel, int stride, int padding);
    static LayerSpec global_avgpool();
    static LayerSpec dense(int in, int out, bool bias = true);
    static LayerSpec zero(int in, int out, int stride = 1);
    static LayerSpec identity();

    bool operator==(const LayerSpec&) const = default;
};

// Number of trainable scalars the layer allocates.
std::size_t param_count(const LayerSpec& spec);
// Output shape for an input of the given shape; throws on mismatch.
Shape output_shape(const LayerSpec& spec, const Shape& input);

enum class ParamKind { weight, bias, batchnorm, choice_bias };

template <typename T>
struct Param {
    std::string name;
    ParamKind kind = ParamKind::weight;
    BasicTensor<T> value;
    BasicTensor<T> grad;
    BasicTensor<T> velocity;  // SGD momentum buffer, zero-initialized
    bool has_grad = false;    // set by backward; untouched params are skipped by SGD

    Param() = default;
    Param(std::string n, ParamKind k, BasicTensor<T> v)
        : name(std::move(n)), kind(k), value(std::move(v)), grad(value.shape()), velocity(value.shape()) {}

    void zero_grad() {
        grad.fill(T(0));
        has_grad = false;
    }
};

// A layer instance: spec, parameters, running statistics and the context
// saved by the last train-mode forward.
template <typename T>
class Layer {
public:
    Layer() = default;
    Layer(const LayerSpec& spec, std::string name, Rng& init);

    const LayerSpec& spec() const { return spec_; }
    const std::string& name() const { return name_; }
    // Replaces a leading `from` by `to` in the layer name and its parameter names.
    void rename_prefix(const std::string& from, const std::string& to);

    BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode);
    // Requires a preceding train-mode forward; accumulates parameter grads.
    BasicTensor<T> backward(const BasicTensor<T>& grad_out);

    std::vector<Param<T>*> parameters();
    std::vector<const Param<T>*> parameters() const;

    bool is_batchnorm() const { return spec_.kind == LayerKind::batchnorm2d; }
    BasicTensor<T>& running_mean() { return running_mean_; }
    BasicTensor<T>& running_var() { return running_var_; }
    const BasicTensor<T>& running_mean() const { return running_mean_; }
    const BasicTensor<T>& running_var() const { return running_var_; }
    double bn_momentum() const { return bn_momentum_; }
    void set_bn_momentum(double m) { bn_momentum_ = m; }
    static constexpr double bn_eps = 1e-5;

    bool has_context() const { return has_ctx_; }
    void clear_context();

private:
    BasicTensor<T> forward_conv(const BasicTensor<T>& x, bool save);
    BasicTensor<T> backward_conv(const BasicTensor<T>& g);
    BasicTensor<T> forward_bn(const BasicTensor<T>& x, Mode mode);
    BasicTensor<T> backward_bn(const BasicTensor<T>& g);
    BasicTensor<T> forward_avgpool(const BasicTensor<T>& x);
    BasicTensor<T> backward_avgpool(const BasicTensor<T>& g);
    BasicTensor<T> forward_dense(const BasicTensor<T>& x, bool save);
    BasicTensor<T> backward_dense(const BasicTensor<T>& g);
    void check_input(const BasicTensor<T>& x) const;

    LayerSpec spec_;
    std::string name_;
    std::vector<Param<T>> params_;
    BasicTensor<T> running_mean_;
    BasicTensor<T> running_var_;
    double bn_momentum_ = 0.1;

    bool has_ctx_ = false;
    Shape ctx_shape_;
    BasicTensor<T> ctx_input_;  // conv / dense / relu input
    BasicTensor<T> ctx_xhat_;   // batchnorm normalized input
    std::vector<T> ctx_inv_std_;
};

extern template class Layer<float>;
extern template class Layer<double>;

// Ordered chain of layers.
template <typename T>
class Sequential {
public:
    Sequential() = default;
    Sequential(const std::vector<LayerSpec>& specs, const std::string& prefix, Rng& init);

    BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode);
    BasicTensor<T> backward(const BasicTensor<T>& grad_out);

    std::vector<Param<T>*> parameters();
    std::vector<const Param<T>*> parameters() const;
    std::vector<Layer<T>*> batchnorms();
    std::vector<const Layer<T>*> batchnorms() const;
    std::vector<Layer<T>>& layers() { return layers_; }
    const std::vector<Layer<T>>& layers() const { return layers_; }
    // Renames every parameter by replacing the name prefix.
    void rename(const std::string& from, const std::string& to);
    void clear_context();

    // True when the chain always produces zeros (a zero op).
    bool is_zero() const;

private:
    std::vector<Layer<T>> layers_;
};

extern template class Sequential<float>;
extern template class Sequential<double>;

}  // namespace icnas
