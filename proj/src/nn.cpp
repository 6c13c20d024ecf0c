#include "dhag/nn.hpp"

#include <cmath>

namespace dhag {

Tensor apply_activation(Activation act, const Tensor& x) {
    switch (act) {
        case Activation::none: return x;
        case Activation::relu: return relu(x);
        case Activation::sigmoid: return sigmoid(x);
        case Activation::tanh: return tanh(x);
    }
    throw ConfigError("unknown activation");
}

Tensor linear_forward(const LinearLayer& layer, const Tensor& x) {
    if (x.rank() != 2 || x.cols() != layer.weight.cols()) {
        throw DimensionError("linear_forward: input width " +
                             std::to_string(x.rank() == 2 ? x.cols() : x.size()) +
                             " does not match layer input " + std::to_string(layer.weight.cols()));
    }
    const std::size_t m = x.rows(), in = x.cols(), out = layer.weight.rows();
    std::vector<double> y(m * out);
    const double* px = x.data().data();
    const double* pw = layer.weight.data().data();
    const double* pb = layer.bias.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t o = 0; o < out; ++o) {
            double acc = pb[o];
            const double* wrow = pw + o * in;
            const double* xrow = px + i * in;
            for (std::size_t k = 0; k < in; ++k) acc += xrow[k] * wrow[k];
            y[i * out + o] = acc;
        }
    }
    auto xn = x.node(), wn = layer.weight.node(), bn = layer.bias.node();
    return Tensor::make_op(
        {m, out}, std::move(y), {x, layer.weight, layer.bias},
        [xn, wn, bn, m, in, out](const Tensor::Node& self) {
            const double* g = self.grad.data();
            if (xn->requires_grad) {
                xn->ensure_grad();
                double* gx = xn->grad.data();
                const double* pw = wn->data.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t o = 0; o < out; ++o) {
                        const double gv = g[i * out + o];
                        const double* wrow = pw + o * in;
                        for (std::size_t k = 0; k < in; ++k) gx[i * in + k] += gv * wrow[k];
                    }
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                double* gw = wn->grad.data();
                const double* px = xn->data.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t o = 0; o < out; ++o) {
                        const double gv = g[i * out + o];
                        const double* xrow = px + i * in;
                        for (std::size_t k = 0; k < in; ++k) gw[o * in + k] += gv * xrow[k];
                    }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                double* gb = bn->grad.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t o = 0; o < out; ++o) gb[o] += g[i * out + o];
            }
        });
}

Tensor conv1d_forward(const Conv1dLayer& layer, const Tensor& x) {
    if (x.rank() != 3) throw DimensionError("conv1d_forward: input must be [m x in_ch x len]");
    const std::size_t m = x.dim(0), in_ch = x.dim(1), len = x.dim(2);
    const std::size_t out_ch = layer.kernels.dim(0), width = layer.kernels.dim(2);
    const std::size_t stride = layer.stride, padding = layer.padding;
    if (layer.kernels.dim(1) != in_ch) throw DimensionError("conv1d_forward: channel mismatch");
    if (len + 2 * padding < width) {
        throw DimensionError("conv1d_forward: kernel wider than padded input");
    }
    const std::size_t out_len = (len + 2 * padding - width) / stride + 1;

    std::vector<double> y(m * out_ch * out_len);
    const double* px = x.data().data();
    const double* pk = layer.kernels.data().data();
    const double* pb = layer.bias.data().data();
    for (std::size_t b = 0; b < m; ++b) {
        for (std::size_t oc = 0; oc < out_ch; ++oc) {
            for (std::size_t op = 0; op < out_len; ++op) {
                double acc = pb[oc];
                for (std::size_t ic = 0; ic < in_ch; ++ic) {
                    for (std::size_t w = 0; w < width; ++w) {
                        const std::ptrdiff_t pos =
                            static_cast<std::ptrdiff_t>(op * stride + w) -
                            static_cast<std::ptrdiff_t>(padding);
                        if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
                        acc += pk[(oc * in_ch + ic) * width + w] *
                               px[(b * in_ch + ic) * len + static_cast<std::size_t>(pos)];
                    }
                }
                y[(b * out_ch + oc) * out_len + op] = acc;
            }
        }
    }
    auto xn = x.node(), kn = layer.kernels.node(), bn = layer.bias.node();
    return Tensor::make_op(
        {m, out_ch, out_len}, std::move(y), {x, layer.kernels, layer.bias},
        [xn, kn, bn, m, in_ch, len, out_ch, width, stride, padding,
         out_len](const Tensor::Node& self) {
            const double* g = self.grad.data();
            const double* px = xn->data.data();
            const double* pk = kn->data.data();
            const bool need_x = xn->requires_grad;
            const bool need_k = kn->requires_grad;
            const bool need_b = bn->requires_grad;
            if (need_x) xn->ensure_grad();
            if (need_k) kn->ensure_grad();
            if (need_b) bn->ensure_grad();
            for (std::size_t b = 0; b < m; ++b) {
                for (std::size_t oc = 0; oc < out_ch; ++oc) {
                    for (std::size_t op = 0; op < out_len; ++op) {
                        const double gv = g[(b * out_ch + oc) * out_len + op];
                        if (gv == 0.0) continue;
                        if (need_b) bn->grad[oc] += gv;
                        for (std::size_t ic = 0; ic < in_ch; ++ic) {
                            for (std::size_t w = 0; w < width; ++w) {
                                const std::ptrdiff_t pos =
                                    static_cast<std::ptrdiff_t>(op * stride + w) -
                                    static_cast<std::ptrdiff_t>(padding);
                                if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
                                const std::size_t xi =
                                    (b * in_ch + ic) * len + static_cast<std::size_t>(pos);
                                const std::size_t ki = (oc * in_ch + ic) * width + w;
                                if (need_k) kn->grad[ki] += gv * px[xi];
                                if (need_x) xn->grad[xi] += gv * pk[ki];
                            }
                        }
                    }
                }
            }
        });
}

namespace {

double init_bound(std::size_t fan_in, std::size_t fan_out, InitScheme scheme) {
    switch (scheme) {
        case InitScheme::kaiming_uniform:
            return std::sqrt(6.0 / static_cast<double>(fan_in));
        case InitScheme::xavier_uniform:
            return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    }
    throw ConfigError("unknown init scheme");
}

}  // namespace

Tensor init_linear_weight(std::size_t out, std::size_t in, InitScheme scheme, Rng& rng) {
    const double bound = init_bound(in, out, scheme);
    std::vector<double> data(out * in);
    for (double& v : data) v = rng.uniform(-bound, bound);
    return Tensor::from_data({out, in}, std::move(data), true);
}

Tensor init_conv_kernels(std::size_t out_ch, std::size_t in_ch, std::size_t width,
                         InitScheme scheme, Rng& rng) {
    const double bound = init_bound(in_ch * width, out_ch * width, scheme);
    std::vector<double> data(out_ch * in_ch * width);
    for (double& v : data) v = rng.uniform(-bound, bound);
    return Tensor::from_data({out_ch, in_ch, width}, std::move(data), true);
}

LinearLayer make_linear(std::size_t in, std::size_t out, InitScheme scheme, Rng& rng) {
    LinearLayer layer;
    layer.weight = init_linear_weight(out, in, scheme, rng);
    layer.bias = Tensor::zeros({out}, true);
    return layer;
}

Conv1dLayer make_conv1d(std::size_t in_ch, std::size_t out_ch, std::size_t width,
                        InitScheme scheme, Rng& rng) {
    Conv1dLayer layer;
    layer.kernels = init_conv_kernels(out_ch, in_ch, width, scheme, rng);
    layer.bias = Tensor::zeros({out_ch}, true);
    return layer;
}

Tensor Mlp::forward(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = linear_forward(layers[i], h);
        h = apply_activation(acts[i], h);
    }
    return h;
}

std::vector<Tensor> Mlp::params() const {
    std::vector<Tensor> out;
    out.reserve(layers.size() * 2);
    for (const auto& layer : layers) {
        out.push_back(layer.weight);
        out.push_back(layer.bias);
    }
    return out;
}

Mlp make_mlp(const std::vector<std::size_t>& dims, Activation hidden, Activation final_act,
             Rng& rng) {
    if (dims.size() < 2) throw ConfigError("make_mlp: need at least input and output dims");
    Mlp mlp;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const bool last = (i + 2 == dims.size());
        const Activation act = last ? final_act : hidden;
        // Kaiming when the layer feeds a relu, Xavier otherwise.
        const InitScheme scheme =
            (act == Activation::relu) ? InitScheme::kaiming_uniform : InitScheme::xavier_uniform;
        mlp.layers.push_back(make_linear(dims[i], dims[i + 1], scheme, rng));
        mlp.acts.push_back(act);
    }
    return mlp;
}

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double epsilon)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void Adam::step() {
    for (const Tensor& p : params_) {
        if (!p.has_grad()) {
            throw StateError("Adam::step: parameter gradient never populated (missing backward?)");
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& p = params_[pi];
        auto data = p.mutable_data();
        auto grad = p.grad();
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double g = grad[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            data[i] -= lr_ * mhat / (std::sqrt(vhat) + epsilon_);
        }
        p.zero_grad();
    }
}

}  // namespace dhag
