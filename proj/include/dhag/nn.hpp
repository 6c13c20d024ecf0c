#pragma once

#include <string>
#include <vector>

#include "dhag/rng.hpp"
#include "dhag/tensor.hpp"

namespace dhag {

enum class Activation { none, relu, sigmoid, tanh };

Tensor apply_activation(Activation act, const Tensor& x);

struct LinearLayer {
    Tensor weight;  // [out x in]
    Tensor bias;    // [out]
};

// y = x . W^T + b, rows of x are samples.
Tensor linear_forward(const LinearLayer& layer, const Tensor& x);

struct Conv1dLayer {
    Tensor kernels;  // [out_ch x in_ch x width]
    Tensor bias;     // [out_ch]
    std::size_t stride = 1;
    std::size_t padding = 0;
};

// Cross-correlation (no kernel flip) with zero padding over [m x in_ch x len].
Tensor conv1d_forward(const Conv1dLayer& layer, const Tensor& x);

enum class InitScheme { kaiming_uniform, xavier_uniform };

// Weight init for a [out x in] linear layer; biases are always zero.
Tensor init_linear_weight(std::size_t out, std::size_t in, InitScheme scheme, Rng& rng);
Tensor init_conv_kernels(std::size_t out_ch, std::size_t in_ch, std::size_t width,
                         InitScheme scheme, Rng& rng);

LinearLayer make_linear(std::size_t in, std::size_t out, InitScheme scheme, Rng& rng);
Conv1dLayer make_conv1d(std::size_t in_ch, std::size_t out_ch, std::size_t width,
                        InitScheme scheme, Rng& rng);

// Plain fully-connected stack; acts[i] follows layers[i].
struct Mlp {
    std::vector<LinearLayer> layers;
    std::vector<Activation> acts;

    Tensor forward(const Tensor& x) const;
    std::vector<Tensor> params() const;
    std::size_t input_dim() const { return layers.front().weight.cols(); }
    std::size_t output_dim() const { return layers.back().weight.rows(); }
};

// dims = {in, h1, ..., out}; hidden activation after every layer but the last,
// final_act after the last.
Mlp make_mlp(const std::vector<std::size_t>& dims, Activation hidden, Activation final_act,
             Rng& rng);

// Adam with bias correction over a fixed parameter group. step() consumes the
// accumulated grads and zeroes them. Deterministic given call order.
class Adam {
public:
    explicit Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double epsilon = 1e-8);

    void step();
    std::size_t step_count() const { return t_; }
    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }
    const std::vector<Tensor>& params() const { return params_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t t_ = 0;
    double lr_;
    double beta1_;
    double beta2_;
    double epsilon_;
};

}  // namespace dhag
