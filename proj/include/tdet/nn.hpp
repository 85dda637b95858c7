#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "tdet/errors.hpp"
#include "tdet/rng.hpp"
#include "tdet/tensor.hpp"

namespace tdet {

enum class RunMode { kTrain, kEval };

// Per-layer state captured on a training forward pass, consumed by backward.
struct LayerTrace {
    Tensor input;
    std::vector<double> aux;
};

// Parameters live in one flat vector per layer: weights first, then biases.
class Layer {
public:
    virtual ~Layer() = default;
    virtual std::string kind() const = 0;
    virtual Tensor forward(const Tensor& in, RunMode mode, Rng* rng,
                           LayerTrace* trace) const = 0;
    // Returns dL/d(input); accumulates dL/d(params) into param_grad, which
    // must already be sized to param_count().
    virtual Tensor backward(const LayerTrace& trace, const Tensor& grad_out,
                            std::vector<double>& param_grad) const = 0;

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    std::size_t param_count() const { return params_.size(); }
    // Leading weight entries (the remainder are biases) and their fan-in;
    // zero for parameterless layers.
    virtual std::size_t weight_count() const { return 0; }
    virtual std::size_t fan_in() const { return 0; }

protected:
    std::vector<double> params_;
};

class Relu : public Layer {
public:
    std::string kind() const override { return "relu"; }

    Tensor forward(const Tensor& in, RunMode, Rng*, LayerTrace* trace) const override {
        if (trace) trace->input = in;
        Tensor out = in;
        for (double& v : out.data) v = v > 0.0 ? v : 0.0;
        return out;
    }

    Tensor backward(const LayerTrace& trace, const Tensor& grad_out,
                    std::vector<double>&) const override {
        Tensor grad_in = grad_out;
        for (std::size_t i = 0; i < grad_in.data.size(); ++i) {
            if (trace.input.data[i] <= 0.0) grad_in.data[i] = 0.0;
        }
        return grad_in;
    }
};

class LeakyRelu : public Layer {
public:
    explicit LeakyRelu(double slope) : slope_(slope) {}

    std::string kind() const override { return "leaky_relu"; }
    double slope() const { return slope_; }

    Tensor forward(const Tensor& in, RunMode, Rng*, LayerTrace* trace) const override {
        if (trace) trace->input = in;
        Tensor out = in;
        for (double& v : out.data) {
            if (v < 0.0) v *= slope_;
        }
        return out;
    }

    Tensor backward(const LayerTrace& trace, const Tensor& grad_out,
                    std::vector<double>&) const override {
        Tensor grad_in = grad_out;
        for (std::size_t i = 0; i < grad_in.data.size(); ++i) {
            if (trace.input.data[i] <= 0.0) grad_in.data[i] *= slope_;
        }
        return grad_in;
    }

private:
    double slope_;
};

class GlobalAvgPool : public Layer {
public:
    std::string kind() const override { return "global_avg_pool"; }

    Tensor forward(const Tensor& in, RunMode, Rng*, LayerTrace* trace) const override {
        if (trace) trace->input = in;
        Tensor out(1, 1, in.c);
        const double scale = 1.0 / (static_cast<double>(in.h) * in.w);
        for (int y = 0; y < in.h; ++y) {
            for (int x = 0; x < in.w; ++x) {
                for (int ch = 0; ch < in.c; ++ch) out.data[ch] += in.at(y, x, ch) * scale;
            }
        }
        return out;
    }

    Tensor backward(const LayerTrace& trace, const Tensor& grad_out,
                    std::vector<double>&) const override {
        const Tensor& in = trace.input;
        Tensor grad_in(in.h, in.w, in.c);
        const double scale = 1.0 / (static_cast<double>(in.h) * in.w);
        for (int y = 0; y < in.h; ++y) {
            for (int x = 0; x < in.w; ++x) {
                for (int ch = 0; ch < in.c; ++ch) {
                    grad_in.at(y, x, ch) = grad_out.data[ch] * scale;
                }
            }
        }
        return grad_in;
    }
};

// Inverted dropout: kept activations are scaled by 1/(1-rate) at train time
// so evaluation mode is the identity.
class Dropout : public Layer {
public:
    explicit Dropout(double rate) : rate_(rate) {}

    std::string kind() const override { return "dropout"; }
    double rate() const { return rate_; }

    Tensor forward(const Tensor& in, RunMode mode, Rng* rng, LayerTrace* trace) const override {
        if (mode == RunMode::kEval || rate_ == 0.0) {
            if (trace) {
                trace->input = in;
                trace->aux.assign(in.size(), 1.0);
            }
            return in;
        }
        if (!rng) throw SamplingError("dropout in training mode needs an rng stream");
        Tensor out = in;
        std::vector<double> mask(in.size());
        const double keep_scale = 1.0 / (1.0 - rate_);
        for (std::size_t i = 0; i < in.size(); ++i) {
            mask[i] = rng->uniform() < rate_ ? 0.0 : keep_scale;
            out.data[i] *= mask[i];
        }
        if (trace) {
            trace->input = in;
            trace->aux = std::move(mask);
        }
        return out;
    }

    Tensor backward(const LayerTrace& trace, const Tensor& grad_out,
                    std::vector<double>&) const override {
        Tensor grad_in = grad_out;
        for (std::size_t i = 0; i < grad_in.data.size(); ++i) grad_in.data[i] *= trace.aux[i];
        return grad_in;
    }

private:
    double rate_;
};

// Fully connected map over the flattened input; output is 1 x 1 x out_dim.
class Linear : public Layer {
public:
    Linear(int in_dim, int out_dim) : in_dim_(in_dim), out_dim_(out_dim) {
        params_.assign(static_cast<std::size_t>(in_dim) * out_dim + out_dim, 0.0);
    }

    std::string kind() const override { return "linear"; }
    int in_dim() const { return in_dim_; }
    int out_dim() const { return out_dim_; }
    std::size_t weight_count() const override {
        return static_cast<std::size_t>(in_dim_) * out_dim_;
    }
    std::size_t fan_in() const override { return static_cast<std::size_t>(in_dim_); }

    Tensor forward(const Tensor& in, RunMode, Rng*, LayerTrace* trace) const override {
        if (static_cast<int>(in.size()) != in_dim_) {
            throw ShapeError("linear: expected " + std::to_string(in_dim_) +
                             " inputs, got shape " + in.shape_string());
        }
        if (trace) trace->input = in;
        Tensor out(1, 1, out_dim_);
        const double* w = params_.data();
        const double* b = params_.data() + weight_count();
        for (int o = 0; o < out_dim_; ++o) {
            double acc = b[o];
            const double* row = w + static_cast<std::size_t>(o) * in_dim_;
            for (int i = 0; i < in_dim_; ++i) acc += row[i] * in.data[static_cast<std::size_t>(i)];
            out.data[static_cast<std::size_t>(o)] = acc;
        }
        return out;
    }

    Tensor backward(const LayerTrace& trace, const Tensor& grad_out,
                    std::vector<double>& param_grad) const override {
        const Tensor& in = trace.input;
        Tensor grad_in(in.h, in.w, in.c);
        const double* w = params_.data();
        double* dw = param_grad.data();
        double* db = param_grad.data() + weight_count();
        for (int o = 0; o < out_dim_; ++o) {
            const double g = grad_out.data[static_cast<std::size_t>(o)];
            const double* row = w + static_cast<std::size_t>(o) * in_dim_;
            double* drow = dw + static_cast<std::size_t>(o) * in_dim_;
            db[o] += g;
            for (int i = 0; i < in_dim_; ++i) {
                drow[i] += g * in.data[static_cast<std::size_t>(i)];
                grad_in.data[static_cast<std::size_t>(i)] += row[i] * g;
            }
        }
        return grad_in;
    }

private:
    int in_dim_;
    int out_dim_;
};

// Standard convolution, square kernel, zero padding.
class Conv2d : public Layer {
public:
    Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad)
        : in_ch_(in_ch), out_ch_(out_ch), ksize_(ksize), stride_(stride), pad_(pad) {
        params_.assign(weight_count() + static_cast<std::size_t>(out_ch), 0.0);
    }

    std::string kind() const override { return "conv2d"; }
    std::size_t weight_count() const override {
        return static_cast<std::size_t>(out_ch_) * in_ch_ * ksize_ * ksize_;
    }
    std::size_t fan_in() const override {
        return static_cast<std::size_t>(in_ch_) * ksize_ * ksize_;
    }

    Tensor forward(const Tensor& in, RunMode, Rng*, LayerTrace* trace) const override {
        if (in.c != in_ch_) {
            throw ShapeError("conv2d: expected " + std::to_string(in_ch_) +
                             " input channels, got shape " + in.shape_string());
        }
        if (trace) trace->input = in;
        const int oh = (in.h + 2 * pad_ - ksize_) / stride_ + 1;
        const int ow = (in.w + 2 * pad_ - ksize_) / stride_ + 1;
        Tensor out(oh, ow, out_ch_);
        const double* w = params_.data();
        const double* b = params_.data() + weight_count();
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                for (int o = 0; o < out_ch_; ++o) {
                    double acc = b[o];
                    for (int ky = 0; ky < ksize_; ++ky) {
                        const int y = oy * stride_ - pad_ + ky;
                        if (y < 0 || y >= in.h) continue;
                        for (int kx = 0; kx < ksize_; ++kx) {
                            const int x = ox * stride_ - pad_ + kx;
                            if (x < 0 || x >= in.w) continue;
                            for (int i = 0; i < in_ch_; ++i) {
                                acc += w[widx(o, i, ky, kx)] * in.at(y, x, i);
                            }
                        }
                    }
                    out.at(oy, ox, o) = acc;
                }
            }
        }
        return out;
    }

    Tensor backward(const LayerTrace& trace, const Tensor& grad_out,
                    std::vector<double>& param_grad) const override {
        const Tensor& in = trace.input;
        Tensor grad_in(in.h, in.w, in.c);
        const double* w = params_.data();
        double* dw = param_grad.data();
        double* db = param_grad.data() + weight_count();
        for (int oy = 0; oy < grad_out.h; ++oy) {
            for (int ox = 0; ox < grad_out.w; ++ox) {
                for (int o = 0; o < out_ch_; ++o) {
                    const double g = grad_out.at(oy, ox, o);
                    db[o] += g;
                    for (int ky = 0; ky < ksize_; ++ky) {
                        const int y = oy * stride_ - pad_ + ky;
                        if (y < 0 || y >= in.h) continue;
                        for (int kx = 0; kx < ksize_; ++kx) {
                            const int x = ox * stride_ - pad_ + kx;
                            if (x < 0 || x >= in.w) continue;
                            for (int i = 0; i < in_ch_; ++i) {
                                dw[widx(o, i, ky, kx)] += g * in.at(y, x, i);
                                grad_in.at(y, x, i) += w[widx(o, i, ky, kx)] * g;
                            }
                        }
                    }
                }
            }
        }
        return grad_in;
    }

private:
    std::size_t widx(int o, int i, int ky, int kx) const {
        return ((static_cast<std::size_t>(o) * in_ch_ + i) * ksize_ + ky) * ksize_ + kx;
    }

    int in_ch_;
    int out_ch_;
    int ksize_;
    int stride_;
    int pad_;
};

// Depthwise convolution: one kernel per channel, channel count preserved.
class DepthwiseConv2d : public Layer {
public:
    DepthwiseConv2d(int channels, int ksize, int stride, int pad)
        : channels_(channels), ksize_(ksize), stride_(stride), pad_(pad) {
        params_.assign(weight_count() + static_cast<std::size_t>(channels), 0.0);
    }

    std::string kind() const override { return "depthwise_conv2d"; }
    std::size_t weight_count() const override {
        return static_cast<std::size_t>(channels_) * ksize_ * ksize_;
    }
    std::size_t fan_in() const override { return static_cast<std::size_t>(ksize_) * ksize_; }

    Tensor forward(const Tensor& in, RunMode, Rng*, LayerTrace* trace) const override {
        if (in.c != channels_) {
            throw ShapeError("depthwise_conv2d: expected " + std::to_string(channels_) +
                             " channels, got shape " + in.shape_string());
        }
        if (trace) trace->input = in;
        const int oh = (in.h + 2 * pad_ - ksize_) / stride_ + 1;
        const int ow = (in.w + 2 * pad_ - ksize_) / stride_ + 1;
        Tensor out(oh, ow, channels_);
        const double* w = params_.data();
        const double* b = params_.data() + weight_count();
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                for (int ch = 0; ch < channels_; ++ch) {
                    double acc = b[ch];
                    for (int ky = 0; ky < ksize_; ++ky) {
                        const int y = oy * stride_ - pad_ + ky;
                        if (y < 0 || y >= in.h) continue;
                        for (int kx = 0; kx < ksize_; ++kx) {
                            const int x = ox * stride_ - pad_ + kx;
                            if (x < 0 || x >= in.w) continue;
                            acc += w[widx(ch, ky, kx)] * in.at(y, x, ch);
                        }
                    }
                    out.at(oy, ox, ch) = acc;
                }
            }
        }
        return out;
    }

    Tensor backward(const LayerTrace& trace, const Tensor& grad_out,
                    std::vector<double>& param_grad) const override {
        const Tensor& in = trace.input;
        Tensor grad_in(in.h, in.w, in.c);
        const double* w = params_.data();
        double* dw = param_grad.data();
        double* db = param_grad.data() + weight_count();
        for (int oy = 0; oy < grad_out.h; ++oy) {
            for (int ox = 0; ox < grad_out.w; ++ox) {
                for (int ch = 0; ch < channels_; ++ch) {
                    const double g = grad_out.at(oy, ox, ch);
                    db[ch] += g;
                    for (int ky = 0; ky < ksize_; ++ky) {
                        const int y = oy * stride_ - pad_ + ky;
                        if (y < 0 || y >= in.h) continue;
                        for (int kx = 0; kx < ksize_; ++kx) {
                            const int x = ox * stride_ - pad_ + kx;
                            if (x < 0 || x >= in.w) continue;
                            dw[widx(ch, ky, kx)] += g * in.at(y, x, ch);
                            grad_in.at(y, x, ch) += w[widx(ch, ky, kx)] * g;
                        }
                    }
                }
            }
        }
        return grad_in;
    }

private:
    std::size_t widx(int ch, int ky, int kx) const {
        return (static_cast<std::size_t>(ch) * ksize_ + ky) * ksize_ + kx;
    }

    int channels_;
    int ksize_;
    int stride_;
    int pad_;
};

// Plain layer stack with explicit traces, so one forward/backward pair can be
// replayed per training example.
struct Network {
    std::vector<std::unique_ptr<Layer>> layers;

    Tensor forward(Tensor x, RunMode mode, Rng* rng = nullptr,
                   std::vector<LayerTrace>* traces = nullptr) const {
        if (traces) traces->assign(layers.size(), {});
        for (std::size_t i = 0; i < layers.size(); ++i) {
            x = layers[i]->forward(x, mode, rng, traces ? &(*traces)[i] : nullptr);
        }
        return x;
    }

    // param_grads must hold one vector per layer, each sized to the layer's
    // param_count(); gradients accumulate.
    Tensor backward(const std::vector<LayerTrace>& traces, Tensor grad,
                    std::vector<std::vector<double>>& param_grads) const {
        for (std::size_t i = layers.size(); i-- > 0;) {
            grad = layers[i]->backward(traces[i], grad, param_grads[i]);
        }
        return grad;
    }

    std::vector<std::vector<double>> zero_grads() const {
        std::vector<std::vector<double>> grads;
        grads.reserve(layers.size());
        for (const auto& layer : layers) {
            grads.emplace_back(layer->param_count(), 0.0);
        }
        return grads;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& layer : layers) n += layer->param_count();
        return n;
    }
};

// SGD with classic momentum: v = mu * v + g; p -= lr * v.
class Sgd {
public:
    Sgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

    void step(Network& net, const std::vector<std::vector<double>>& grads) {
        if (velocity_.empty()) {
            for (const auto& layer : net.layers) {
                velocity_.emplace_back(layer->param_count(), 0.0);
            }
        }
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            std::vector<double>& p = net.layers[i]->params();
            std::vector<double>& v = velocity_[i];
            const std::vector<double>& g = grads[i];
            for (std::size_t k = 0; k < p.size(); ++k) {
                v[k] = momentum_ * v[k] + g[k];
                p[k] -= lr_ * v[k];
            }
        }
    }

private:
    double lr_;
    double momentum_;
    std::vector<std::vector<double>> velocity_;
};

// Weights U(+-sqrt(6/fan_in)), biases zero. Draw order is layer order,
// weights within a layer in storage order.
inline void init_kaiming_uniform(Network& net, Rng& rng) {
    for (const auto& layer : net.layers) {
        const std::size_t nw = layer->weight_count();
        if (nw == 0) continue;
        const double bound = std::sqrt(6.0 / static_cast<double>(layer->fan_in()));
        std::vector<double>& p = layer->params();
        for (std::size_t i = 0; i < nw; ++i) p[i] = rng.uniform(-bound, bound);
        for (std::size_t i = nw; i < p.size(); ++i) p[i] = 0.0;
    }
}

// Weights and biases U(+-1/sqrt(fan_in)), the default of common frameworks.
inline void init_uniform_fan_in(Network& net, Rng& rng) {
    for (const auto& layer : net.layers) {
        const std::size_t nw = layer->weight_count();
        if (nw == 0) continue;
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer->fan_in()));
        std::vector<double>& p = layer->params();
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = rng.uniform(-bound, bound);
    }
}

}  // namespace tdet
