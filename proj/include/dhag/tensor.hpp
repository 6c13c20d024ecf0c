#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "dhag/common.hpp"

namespace dhag {

// Dense f64 tensor with reverse-mode autodiff. A Tensor is a cheap handle to a
// shared node; ops record a backward closure that accumulates into the parents'
// grad buffers. Values are immutable once created except for grad accumulation
// and explicit parameter updates through mutable_data() (the optimizer path).
// A recorded graph is confined to one thread; graph-free tensors move freely.
class Tensor {
public:
    struct Node;
    using BackwardFn = std::function<void(const Node& self)>;

    struct Node {
        std::vector<std::size_t> shape;
        std::vector<double> data;
        std::vector<double> grad;  // empty until first touched
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        BackwardFn backward;

        std::size_t size() const { return data.size(); }
        void ensure_grad() {
            if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
        }
    };

    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
    static Tensor scalar(double value);
    // Validates finiteness: this is the graph's input boundary.
    static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data,
                            bool requires_grad = false);
    // Records a new op node. Parents' requires_grad decides whether the
    // backward closure is kept; recording is suppressed under NoGradGuard.
    static Tensor make_op(std::vector<std::size_t> shape, std::vector<double> data,
                          std::vector<Tensor> parents, BackwardFn backward);

    bool defined() const { return node_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return node_->shape; }
    std::size_t size() const { return node_->data.size(); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape[i]; }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const { return node_->data; }
    std::span<double> mutable_data() { return node_->data; }
    double value() const;  // scalar extraction; validates finiteness

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }
    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const double> grad() const;
    void zero_grad();  // allocates if needed, then zero-fills

    std::shared_ptr<Node> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
    std::shared_ptr<Node> node_;
};

// RAII switch that disables graph recording (inference / scoring path).
// Thread-local, so frozen models can score concurrently.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_recording_enabled();

// --- primitive ops ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Binary elementwise: equal shapes, or [m x n] (op) [n] broadcasting the
// trailing vector over rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);

Tensor scale(const Tensor& a, double c);
Tensor reshape(const Tensor& a, std::vector<std::size_t> shape);

// Identity forward, negated gradient backward. Used by the adversarial
// perturbator option to flip the CE gradient reaching the perturbators.
Tensor grad_reverse(const Tensor& a);

// Column-wise concat of a noise column: [m x d] (+) [m x 1] -> [m x (d+1)].
// Gradient flows only to `a`.
Tensor concat_channel(const Tensor& a, const Tensor& noise);

// Per-row Euclidean norm of a [m x z] tensor -> [m]. Zero rows get
// subgradient 0.
Tensor row_l2_norm(const Tensor& a);

// Per-row cosine similarity of two [m x z] tensors -> [m]. Denominator is
// stabilized with +1e-12; a numerically zero row yields similarity 0 with a
// zero subgradient (and a warning, since it usually means a collapsed
// perturbator).
Tensor row_cosine(const Tensor& a, const Tensor& b);

// Vector cosine similarity -> scalar tensor, in [-1, 1].
Tensor cosine_sim(const Tensor& a, const Tensor& b);

// Binary cross-entropy, probabilities clamped to [1e-7, 1 - 1e-7].
Tensor bce(const Tensor& p, int y);
// Mean BCE over a batch: p is [m] or [m x 1], y holds {0,1} labels.
Tensor bce_mean(const Tensor& p, const std::vector<int>& y);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Reverse-mode sweep from a scalar root. Grads accumulate across calls until
// zeroed. Non-scalar root -> DimensionError.
void backward(const Tensor& root);

// Central-difference gradient oracle: returns the max relative error between
// x.grad after backward(f(x)) and (f(x+h*e_i) - f(x-h*e_i)) / 2h over all
// entries of x. Purely forward-evaluation based on the difference side.
double grad_check(const std::function<Tensor(Tensor&)>& f, Tensor& x, double h);

}  // namespace dhag
