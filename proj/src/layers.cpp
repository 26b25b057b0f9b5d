#include "icnas/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace icnas {

namespace {

std::string layer_error(const std::string& name, LayerKind kind, const std::string& msg) {
    return "layer '" + name + "' (" + to_string(kind) + "): " + msg;
}

int conv_out(int size, int kernel, int stride, int pad) { return (size + 2 * pad - kernel) / stride + 1; }

// Range of output rows [lo, hi) whose input row oh*stride + k - pad lies in [0, size).
void valid_range(int out_size, int in_size, int k, int stride, int pad, int& lo, int& hi) {
    lo = 0;
    while (lo < out_size && lo * stride + k - pad < 0) ++lo;
    hi = out_size;
    while (hi > lo && (hi - 1) * stride + k - pad >= in_size) --hi;
}

}  // namespace

const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::batchnorm2d: return "batchnorm2d";
        case LayerKind::relu: return "relu";
        case LayerKind::avgpool2d: return "avgpool2d";
        case LayerKind::globalavgpool: return "globalavgpool";
        case LayerKind::dense: return "dense";
        case LayerKind::zero: return "zero";
        case LayerKind::identity: return "identity";
    }
    return "unknown";
}

LayerKind parse_layer_kind(const std::string& s) {
    for (auto k : {LayerKind::conv2d, LayerKind::batchnorm2d, LayerKind::relu, LayerKind::avgpool2d,
                   LayerKind::globalavgpool, LayerKind::dense, LayerKind::zero, LayerKind::identity}) {
        if (s == to_string(k)) return k;
    }
    throw std::invalid_argument("unknown layer kind '" + s + "'");
}

LayerSpec LayerSpec::conv(int in, int out, int kernel, int stride, bool bias) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.in_channels = in;
    s.out_channels = out;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = kernel / 2;
    s.has_bias = bias;
    return s;
}

LayerSpec LayerSpec::batchnorm(int channels, bool affine) {
    LayerSpec s;
    s.kind = LayerKind::batchnorm2d;
    s.in_channels = s.out_channels = channels;
    s.has_affine = affine;
    return s;
}

LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::relu;
    return s;
}

LayerSpec LayerSpec::avgpool(int kernel, int stride, int padding) {
    LayerSpec s;
    s.kind = LayerKind::avgpool2d;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    return s;
}

LayerSpec LayerSpec::global_avgpool() {
    LayerSpec s;
    s.kind = LayerKind::globalavgpool;
    return s;
}

LayerSpec LayerSpec::dense(int in, int out, bool bias) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.in_channels = in;
    s.out_channels = out;
    s.has_bias = bias;
    return s;
}

LayerSpec LayerSpec::zero(int in, int out, int stride) {
    LayerSpec s;
    s.kind = LayerKind::zero;
    s.in_channels = in;
    s.out_channels = out;
    s.stride = stride;
    return s;
}

LayerSpec LayerSpec::identity() { return LayerSpec{}; }

std::size_t param_count(const LayerSpec& s) {
    switch (s.kind) {
        case LayerKind::conv2d:
            return static_cast<std::size_t>(s.out_channels) * s.in_channels * s.kernel * s.kernel +
                   (s.has_bias ? s.out_channels : 0);
        case LayerKind::batchnorm2d: return s.has_affine ? 2 * static_cast<std::size_t>(s.in_channels) : 0;
        case LayerKind::dense:
            return static_cast<std::size_t>(s.out_channels) * s.in_channels + (s.has_bias ? s.out_channels : 0);
        default: return 0;
    }
}

Shape output_shape(const LayerSpec& s, const Shape& in) {
    auto need4 = [&](int channels) {
        if (in.size() != 4) {
            throw std::invalid_argument(std::string(to_string(s.kind)) + ": expected NCHW input, got " +
                                        shape_str(in));
        }
        if (channels > 0 && in[1] != channels) {
            throw std::invalid_argument(std::string(to_string(s.kind)) + ": expected " +
                                        std::to_string(channels) + " input channels, got " + shape_str(in));
        }
    };
    switch (s.kind) {
        case LayerKind::conv2d:
            need4(s.in_channels);
            return {in[0], s.out_channels, conv_out(in[2], s.kernel, s.stride, s.padding),
                    conv_out(in[3], s.kernel, s.stride, s.padding)};
        case LayerKind::zero:
            need4(s.in_channels);
            return {in[0], s.out_channels, conv_out(in[2], 1, s.stride, 0), conv_out(in[3], 1, s.stride, 0)};
        case LayerKind::batchnorm2d: need4(s.in_channels); return in;
        case LayerKind::avgpool2d:
            need4(0);
            return {in[0], in[1], conv_out(in[2], s.kernel, s.stride, s.padding),
                    conv_out(in[3], s.kernel, s.stride, s.padding)};
        case LayerKind::globalavgpool: need4(0); return {in[0], in[1]};
        case LayerKind::dense: {
            if (in.size() < 2) throw std::invalid_argument("dense: input needs a batch dimension");
            const std::size_t features = shape_numel(in) / static_cast<std::size_t>(in[0]);
            if (features != static_cast<std::size_t>(s.in_channels)) {
                throw std::invalid_argument("dense: expected " + std::to_string(s.in_channels) +
                                            " input features, got " + shape_str(in));
            }
            return {in[0], s.out_channels};
        }
        case LayerKind::relu:
        case LayerKind::identity: return in;
    }
    return in;
}

// ---------------------------------------------------------------------------
// Layer

template <typename T>
Layer<T>::Layer(const LayerSpec& spec, std::string name, Rng& init) : spec_(spec), name_(std::move(name)) {
    switch (spec_.kind) {
        case LayerKind::conv2d: {
            if (spec_.kernel < 1 || spec_.stride < 1 || spec_.in_channels < 1 || spec_.out_channels < 1) {
                throw std::invalid_argument(layer_error(name_, spec_.kind, "invalid conv geometry"));
            }
            BasicTensor<T> w({spec_.out_channels, spec_.in_channels, spec_.kernel, spec_.kernel});
            const double std = std::sqrt(2.0 / (spec_.in_channels * spec_.kernel * spec_.kernel));
            for (auto& v : w.values()) v = static_cast<T>(init.normal(0.0, std));
            params_.emplace_back(name_ + ".weight", ParamKind::weight, std::move(w));
            if (spec_.has_bias) {
                params_.emplace_back(name_ + ".bias", ParamKind::bias, BasicTensor<T>({spec_.out_channels}));
            }
            break;
        }
        case LayerKind::dense: {
            BasicTensor<T> w({spec_.out_channels, spec_.in_channels});
            const double std = std::sqrt(2.0 / spec_.in_channels);
            for (auto& v : w.values()) v = static_cast<T>(init.normal(0.0, std));
            params_.emplace_back(name_ + ".weight", ParamKind::weight, std::move(w));
            if (spec_.has_bias) {
                params_.emplace_back(name_ + ".bias", ParamKind::bias, BasicTensor<T>({spec_.out_channels}));
            }
            break;
        }
        case LayerKind::batchnorm2d: {
            const int c = spec_.in_channels;
            running_mean_ = BasicTensor<T>({c}, T(0));
            running_var_ = BasicTensor<T>({c}, T(1));
            if (spec_.has_affine) {
                params_.emplace_back(name_ + ".gamma", ParamKind::batchnorm, BasicTensor<T>({c}, T(1)));
                params_.emplace_back(name_ + ".beta", ParamKind::batchnorm, BasicTensor<T>({c}, T(0)));
            }
            break;
        }
        case LayerKind::avgpool2d:
            if (spec_.kernel < 1 || spec_.stride < 1) {
                throw std::invalid_argument(layer_error(name_, spec_.kind, "invalid pooling geometry"));
            }
            break;
        default: break;
    }
}

template <typename T>
void Layer<T>::check_input(const BasicTensor<T>& x) const {
    try {
        (void)output_shape(spec_, x.shape());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("layer '" + name_ + "': " + e.what());
    }
}

template <typename T>
BasicTensor<T> Layer<T>::forward(const BasicTensor<T>& x, Mode mode) {
    check_input(x);
    const bool save = mode == Mode::train;
    has_ctx_ = false;
    BasicTensor<T> y;
    switch (spec_.kind) {
        case LayerKind::conv2d: y = forward_conv(x, save); break;
        case LayerKind::batchnorm2d: y = forward_bn(x, mode); break;
        case LayerKind::relu:
            y = x;
            for (auto& v : y.values()) v = v > T(0) ? v : T(0);
            if (save) ctx_input_ = x;
            break;
        case LayerKind::avgpool2d: y = forward_avgpool(x); break;
        case LayerKind::globalavgpool: {
            const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
            y = BasicTensor<T>({n, c});
            for (int i = 0; i < n * c; ++i) {
                T s = 0;
                const T* p = x.data() + static_cast<std::size_t>(i) * hw;
                for (int j = 0; j < hw; ++j) s += p[j];
                y[i] = s / static_cast<T>(hw);
            }
            break;
        }
        case LayerKind::dense: y = forward_dense(x, save); break;
        case LayerKind::zero: y = BasicTensor<T>(output_shape(spec_, x.shape())); break;
        case LayerKind::identity: y = x; break;
    }
    if (save) {
        ctx_shape_ = x.shape();
        has_ctx_ = true;
    }
    return y;
}

template <typename T>
BasicTensor<T> Layer<T>::backward(const BasicTensor<T>& g) {
    if (!has_ctx_) {
        throw std::runtime_error(layer_error(name_, spec_.kind, "backward called without a saved train-mode forward"));
    }
    BasicTensor<T> gin;
    switch (spec_.kind) {
        case LayerKind::conv2d: gin = backward_conv(g); break;
        case LayerKind::batchnorm2d: gin = backward_bn(g); break;
        case LayerKind::relu:
            g.require_same_shape(ctx_input_, "relu backward");
            gin = g;
            for (std::size_t i = 0; i < gin.size(); ++i) {
                if (!(ctx_input_[i] > T(0))) gin[i] = T(0);
            }
            break;
        case LayerKind::avgpool2d: gin = backward_avgpool(g); break;
        case LayerKind::globalavgpool: {
            gin = BasicTensor<T>(ctx_shape_);
            const int nc = ctx_shape_[0] * ctx_shape_[1], hw = ctx_shape_[2] * ctx_shape_[3];
            for (int i = 0; i < nc; ++i) {
                const T v = g[i] / static_cast<T>(hw);
                T* p = gin.data() + static_cast<std::size_t>(i) * hw;
                for (int j = 0; j < hw; ++j) p[j] = v;
            }
            break;
        }
        case LayerKind::dense: gin = backward_dense(g); break;
        case LayerKind::zero: gin = BasicTensor<T>(ctx_shape_); break;
        case LayerKind::identity: gin = g; break;
    }
    return gin;
}

template <typename T>
BasicTensor<T> Layer<T>::forward_conv(const BasicTensor<T>& x, bool save) {
    const Shape os = output_shape(spec_, x.shape());
    const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int cout = os[1], oh = os[2], ow = os[3];
    const int k = spec_.kernel, s = spec_.stride, p = spec_.padding;
    const BasicTensor<T>& wt = params_[0].value;
    BasicTensor<T> y(os);
    for (int b = 0; b < n; ++b) {
        for (int oc = 0; oc < cout; ++oc) {
            T* out = &y.at(b, oc, 0, 0);
            if (spec_.has_bias) {
                const T bias = params_[1].value[oc];
                for (int i = 0; i < oh * ow; ++i) out[i] = bias;
            }
            for (int ic = 0; ic < cin; ++ic) {
                const T* in = &x.at(b, ic, 0, 0);
                for (int kh = 0; kh < k; ++kh) {
                    int ylo, yhi;
                    valid_range(oh, h, kh, s, p, ylo, yhi);
                    for (int kw = 0; kw < k; ++kw) {
                        int xlo, xhi;
                        valid_range(ow, w, kw, s, p, xlo, xhi);
                        const T wv = wt[((static_cast<std::size_t>(oc) * cin + ic) * k + kh) * k + kw];
                        for (int oy = ylo; oy < yhi; ++oy) {
                            const T* row = in + static_cast<std::size_t>(oy * s + kh - p) * w + (kw - p);
                            T* orow = out + static_cast<std::size_t>(oy) * ow;
                            if (s == 1) {
                                for (int ox = xlo; ox < xhi; ++ox) orow[ox] += wv * row[ox];
                            } else {
                                for (int ox = xlo; ox < xhi; ++ox) orow[ox] += wv * row[ox * s];
                            }
                        }
                    }
                }
            }
        }
    }
    if (save) ctx_input_ = x;
    return y;
}

template <typename T>
BasicTensor<T> Layer<T>::backward_conv(const BasicTensor<T>& g) {
    const BasicTensor<T>& x = ctx_input_;
    const Shape os = output_shape(spec_, x.shape());
    if (g.shape() != os) {
        throw std::invalid_argument(layer_error(name_, spec_.kind, "grad shape " + shape_str(g.shape()) +
                                                                       " does not match output " + shape_str(os)));
    }
    const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int cout = os[1], oh = os[2], ow = os[3];
    const int k = spec_.kernel, s = spec_.stride, p = spec_.padding;
    Param<T>& wp = params_[0];
    BasicTensor<T> gin(x.shape());
    for (int b = 0; b < n; ++b) {
        for (int oc = 0; oc < cout; ++oc) {
            const T* go = &g.at(b, oc, 0, 0);
            if (spec_.has_bias) {
                T sum = 0;
                for (int i = 0; i < oh * ow; ++i) sum += go[i];
                params_[1].grad[oc] += sum;
            }
            for (int ic = 0; ic < cin; ++ic) {
                const T* in = &x.at(b, ic, 0, 0);
                T* gi = &gin.at(b, ic, 0, 0);
                for (int kh = 0; kh < k; ++kh) {
                    int ylo, yhi;
                    valid_range(oh, h, kh, s, p, ylo, yhi);
                    for (int kw = 0; kw < k; ++kw) {
                        int xlo, xhi;
                        valid_range(ow, w, kw, s, p, xlo, xhi);
                        const std::size_t widx = ((static_cast<std::size_t>(oc) * cin + ic) * k + kh) * k + kw;
                        const T wv = wp.value[widx];
                        T gw = 0;
                        for (int oy = ylo; oy < yhi; ++oy) {
                            const std::size_t off = static_cast<std::size_t>(oy * s + kh - p) * w + (kw - p);
                            const T* row = in + off;
                            T* grow = gi + off;
                            const T* gorow = go + static_cast<std::size_t>(oy) * ow;
                            for (int ox = xlo; ox < xhi; ++ox) {
                                gw += gorow[ox] * row[ox * s];
                                grow[ox * s] += wv * gorow[ox];
                            }
                        }
                        wp.grad[widx] += gw;
                    }
                }
            }
        }
    }
    for (auto& prm : params_) prm.has_grad = true;
    return gin;
}

template <typename T>
BasicTensor<T> Layer<T>::forward_bn(const BasicTensor<T>& x, Mode mode) {
    const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    const std::size_t count = static_cast<std::size_t>(n) * hw;
    BasicTensor<T> y(x.shape());
    const bool affine = spec_.has_affine;
    if (mode == Mode::eval) {
        for (int ch = 0; ch < c; ++ch) {
            const double inv = 1.0 / std::sqrt(static_cast<double>(running_var_[ch]) + bn_eps);
            const double mean = running_mean_[ch];
            const double gamma = affine ? params_[0].value[ch] : 1.0;
            const double beta = affine ? params_[1].value[ch] : 0.0;
            for (int b = 0; b < n; ++b) {
                const T* in = &x.at(b, ch, 0, 0);
                T* out = &y.at(b, ch, 0, 0);
                for (int i = 0; i < hw; ++i) out[i] = static_cast<T>(gamma * (in[i] - mean) * inv + beta);
            }
        }
        return y;
    }
    const bool save = mode == Mode::train;
    if (save) {
        ctx_xhat_ = BasicTensor<T>(x.shape());
        ctx_inv_std_.assign(static_cast<std::size_t>(c), T(0));
    }
    for (int ch = 0; ch < c; ++ch) {
        double sum = 0;
        for (int b = 0; b < n; ++b) {
            const T* in = &x.at(b, ch, 0, 0);
            for (int i = 0; i < hw; ++i) sum += in[i];
        }
        const double mean = sum / static_cast<double>(count);
        double sq = 0;
        for (int b = 0; b < n; ++b) {
            const T* in = &x.at(b, ch, 0, 0);
            for (int i = 0; i < hw; ++i) {
                const double d = in[i] - mean;
                sq += d * d;
            }
        }
        const double var = sq / static_cast<double>(count);
        const double inv = 1.0 / std::sqrt(var + bn_eps);
        const double gamma = affine ? params_[0].value[ch] : 1.0;
        const double beta = affine ? params_[1].value[ch] : 0.0;
        for (int b = 0; b < n; ++b) {
            const T* in = &x.at(b, ch, 0, 0);
            T* out = &y.at(b, ch, 0, 0);
            T* xh = save ? &ctx_xhat_.at(b, ch, 0, 0) : nullptr;
            for (int i = 0; i < hw; ++i) {
                const double xhat = (in[i] - mean) * inv;
                if (xh) xh[i] = static_cast<T>(xhat);
                out[i] = static_cast<T>(gamma * xhat + beta);
            }
        }
        if (save) ctx_inv_std_[ch] = static_cast<T>(inv);
        const double m = bn_momentum_;
        const double unbiased = count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
        running_mean_[ch] = static_cast<T>((1.0 - m) * running_mean_[ch] + m * mean);
        running_var_[ch] = static_cast<T>((1.0 - m) * running_var_[ch] + m * unbiased);
    }
    return y;
}

template <typename T>
BasicTensor<T> Layer<T>::backward_bn(const BasicTensor<T>& g) {
    g.require_same_shape(ctx_xhat_, "batchnorm backward");
    const int n = g.dim(0), c = g.dim(1), hw = g.dim(2) * g.dim(3);
    const double count = static_cast<double>(n) * hw;
    const bool affine = spec_.has_affine;
    BasicTensor<T> gin(g.shape());
    for (int ch = 0; ch < c; ++ch) {
        double sum_g = 0, sum_gx = 0;
        for (int b = 0; b < n; ++b) {
            const T* gp = &g.at(b, ch, 0, 0);
            const T* xh = &ctx_xhat_.at(b, ch, 0, 0);
            for (int i = 0; i < hw; ++i) {
                sum_g += gp[i];
                sum_gx += static_cast<double>(gp[i]) * xh[i];
            }
        }
        const double gamma = affine ? params_[0].value[ch] : 1.0;
        if (affine) {
            params_[0].grad[ch] += static_cast<T>(sum_gx);
            params_[1].grad[ch] += static_cast<T>(sum_g);
        }
        const double scale = gamma * ctx_inv_std_[ch] / count;
        for (int b = 0; b < n; ++b) {
            const T* gp = &g.at(b, ch, 0, 0);
            const T* xh = &ctx_xhat_.at(b, ch, 0, 0);
            T* gi = &gin.at(b, ch, 0, 0);
            for (int i = 0; i < hw; ++i) {
                gi[i] = static_cast<T>(scale * (count * gp[i] - sum_g - xh[i] * sum_gx));
            }
        }
    }
    for (auto& prm : params_) prm.has_grad = true;
    return gin;
}

template <typename T>
BasicTensor<T> Layer<T>::forward_avgpool(const BasicTensor<T>& x) {
    const Shape os = output_shape(spec_, x.shape());
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = os[2], ow = os[3];
    const int k = spec_.kernel, s = spec_.stride, p = spec_.padding;
    BasicTensor<T> y(os);
    for (int b = 0; b < n; ++b) {
        for (int ch = 0; ch < c; ++ch) {
            const T* in = &x.at(b, ch, 0, 0);
            T* out = &y.at(b, ch, 0, 0);
            for (int oy = 0; oy < oh; ++oy) {
                const int y0 = std::max(oy * s - p, 0), y1 = std::min(oy * s - p + k, h);
                for (int ox = 0; ox < ow; ++ox) {
                    const int x0 = std::max(ox * s - p, 0), x1 = std::min(ox * s - p + k, w);
                    T sum = 0;
                    for (int yy = y0; yy < y1; ++yy) {
                        for (int xx = x0; xx < x1; ++xx) sum += in[yy * w + xx];
                    }
                    const int denom = spec_.count_include_pad ? k * k : (y1 - y0) * (x1 - x0);
                    out[oy * ow + ox] = sum / static_cast<T>(denom);
                }
            }
        }
    }
    return y;
}

template <typename T>
BasicTensor<T> Layer<T>::backward_avgpool(const BasicTensor<T>& g) {
    const Shape os = output_shape(spec_, ctx_shape_);
    g.require_same_shape(BasicTensor<T>(os), "avgpool backward");
    const int n = ctx_shape_[0], c = ctx_shape_[1], h = ctx_shape_[2], w = ctx_shape_[3];
    const int oh = os[2], ow = os[3];
    const int k = spec_.kernel, s = spec_.stride, p = spec_.padding;
    BasicTensor<T> gin(ctx_shape_);
    for (int b = 0; b < n; ++b) {
        for (int ch = 0; ch < c; ++ch) {
            const T* go = &g.at(b, ch, 0, 0);
            T* gi = &gin.at(b, ch, 0, 0);
            for (int oy = 0; oy < oh; ++oy) {
                const int y0 = std::max(oy * s - p, 0), y1 = std::min(oy * s - p + k, h);
                for (int ox = 0; ox < ow; ++ox) {
                    const int x0 = std::max(ox * s - p, 0), x1 = std::min(ox * s - p + k, w);
                    const int denom = spec_.count_include_pad ? k * k : (y1 - y0) * (x1 - x0);
                    const T v = go[oy * ow + ox] / static_cast<T>(denom);
                    for (int yy = y0; yy < y1; ++yy) {
                        for (int xx = x0; xx < x1; ++xx) gi[yy * w + xx] += v;
                    }
                }
            }
        }
    }
    return gin;
}

template <typename T>
BasicTensor<T> Layer<T>::forward_dense(const BasicTensor<T>& x, bool save) {
    const int n = x.dim(0), in = spec_.in_channels, out = spec_.out_channels;
    const BasicTensor<T>& wt = params_[0].value;
    BasicTensor<T> y({n, out});
    for (int b = 0; b < n; ++b) {
        const T* xr = x.data() + static_cast<std::size_t>(b) * in;
        for (int o = 0; o < out; ++o) {
            const T* wr = wt.data() + static_cast<std::size_t>(o) * in;
            T s = spec_.has_bias ? params_[1].value[o] : T(0);
            for (int i = 0; i < in; ++i) s += wr[i] * xr[i];
            y[static_cast<std::size_t>(b) * out + o] = s;
        }
    }
    if (save) ctx_input_ = x;
    return y;
}

template <typename T>
BasicTensor<T> Layer<T>::backward_dense(const BasicTensor<T>& g) {
    const int n = ctx_shape_[0], in = spec_.in_channels, out = spec_.out_channels;
    if (g.shape() != Shape{n, out}) {
        throw std::invalid_argument(layer_error(name_, spec_.kind, "grad shape " + shape_str(g.shape())));
    }
    Param<T>& wp = params_[0];
    BasicTensor<T> gin(ctx_shape_);
    for (int b = 0; b < n; ++b) {
        const T* xr = ctx_input_.data() + static_cast<std::size_t>(b) * in;
        T* gr = gin.data() + static_cast<std::size_t>(b) * in;
        for (int o = 0; o < out; ++o) {
            const T go = g[static_cast<std::size_t>(b) * out + o];
            T* gw = wp.grad.data() + static_cast<std::size_t>(o) * in;
            const T* wr = wp.value.data() + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) {
                gw[i] += go * xr[i];
                gr[i] += go * wr[i];
            }
            if (spec_.has_bias) params_[1].grad[o] += go;
        }
    }
    for (auto& prm : params_) prm.has_grad = true;
    return gin;
}

template <typename T>
std::vector<Param<T>*> Layer<T>::parameters() {
    std::vector<Param<T>*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
}

template <typename T>
std::vector<const Param<T>*> Layer<T>::parameters() const {
    std::vector<const Param<T>*> out;
    for (const auto& p : params_) out.push_back(&p);
    return out;
}

template <typename T>
void Layer<T>::rename_prefix(const std::string& from, const std::string& to) {
    auto fix = [&](std::string& n) {
        if (n.rfind(from, 0) == 0) n = to + n.substr(from.size());
    };
    fix(name_);
    for (auto& p : params_) fix(p.name);
}

template <typename T>
void Layer<T>::clear_context() {
    has_ctx_ = false;
    ctx_input_ = {};
    ctx_xhat_ = {};
    ctx_inv_std_.clear();
}

template class Layer<float>;
template class Layer<double>;

// ---------------------------------------------------------------------------
// Sequential

template <typename T>
Sequential<T>::Sequential(const std::vector<LayerSpec>& specs, const std::string& prefix, Rng& init) {
    layers_.reserve(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
        layers_.emplace_back(specs[i], prefix + "." + std::to_string(i), init);
    }
}

template <typename T>
BasicTensor<T> Sequential<T>::forward(const BasicTensor<T>& x, Mode mode) {
    BasicTensor<T> h = x;
    for (auto& l : layers_) h = l.forward(h, mode);
    return h;
}

template <typename T>
BasicTensor<T> Sequential<T>::backward(const BasicTensor<T>& grad_out) {
    BasicTensor<T> g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->backward(g);
    return g;
}

template <typename T>
std::vector<Param<T>*> Sequential<T>::parameters() {
    std::vector<Param<T>*> out;
    for (auto& l : layers_) {
        for (auto* p : l.parameters()) out.push_back(p);
    }
    return out;
}

template <typename T>
std::vector<const Param<T>*> Sequential<T>::parameters() const {
    std::vector<const Param<T>*> out;
    for (const auto& l : layers_) {
        for (const auto* p : l.parameters()) out.push_back(p);
    }
    return out;
}

template <typename T>
std::vector<Layer<T>*> Sequential<T>::batchnorms() {
    std::vector<Layer<T>*> out;
    for (auto& l : layers_) {
        if (l.is_batchnorm()) out.push_back(&l);
    }
    return out;
}

template <typename T>
std::vector<const Layer<T>*> Sequential<T>::batchnorms() const {
    std::vector<const Layer<T>*> out;
    for (const auto& l : layers_) {
        if (l.is_batchnorm()) out.push_back(&l);
    }
    return out;
}

template <typename T>
void Sequential<T>::rename(const std::string& from, const std::string& to) {
    for (auto& l : layers_) l.rename_prefix(from, to);
}

template <typename T>
void Sequential<T>::clear_context() {
    for (auto& l : layers_) l.clear_context();
}

template <typename T>
bool Sequential<T>::is_zero() const {
    return std::any_of(layers_.begin(), layers_.end(),
                       [](const Layer<T>& l) { return l.spec().kind == LayerKind::zero; });
}

template class Sequential<float>;
template class Sequential<double>;

}  // namespace icnas
