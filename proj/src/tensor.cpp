#include "dhag/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <unordered_set>

namespace dhag {

namespace {

thread_local bool g_grad_enabled = true;

std::atomic<std::size_t> g_warning_count{0};

std::size_t numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

void check_shape(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
    for (std::size_t d : shape) {
        if (d == 0) throw DimensionError("tensor dimensions must be positive");
    }
}

void check_finite(std::span<const double> data, const char* where) {
    for (double v : data) {
        if (!std::isfinite(v)) throw NumericError(std::string(where) + ": non-finite value");
    }
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

constexpr double kCosineEps = 1e-12;
constexpr double kProbClamp = 1e-7;

double clamp_prob(double p) { return std::min(std::max(p, kProbClamp), 1.0 - kProbClamp); }

}  // namespace

void log_warn(const std::string& msg) {
    g_warning_count.fetch_add(1, std::memory_order_relaxed);
    std::cerr << "[dhag] warning: " << msg << "\n";
}

std::size_t warning_count() { return g_warning_count.load(std::memory_order_relaxed); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_recording_enabled() { return g_grad_enabled; }

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    check_shape(shape);
    auto n = std::make_shared<Node>();
    n->data.assign(numel(shape), 0.0);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.node_->data.begin(), t.node_->data.end(), value);
    return t;
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<double> data,
                         bool requires_grad) {
    check_shape(shape);
    if (numel(shape) != data.size()) {
        throw DimensionError("from_data: shape " + shape_str(shape) + " does not match " +
                             std::to_string(data.size()) + " values");
    }
    check_finite(data, "from_data");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::make_op(std::vector<std::size_t> shape, std::vector<double> data,
                       std::vector<Tensor> parents, BackwardFn backward) {
    check_shape(shape);
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    bool needs_grad = false;
    if (g_grad_enabled) {
        for (const Tensor& p : parents) {
            if (p.defined() && p.requires_grad()) {
                needs_grad = true;
                break;
            }
        }
    }
    if (needs_grad) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (const Tensor& p : parents) n->parents.push_back(p.node());
        n->backward = std::move(backward);
    }
    return Tensor(std::move(n));
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw DimensionError("rows(): tensor is not rank 2");
    return node_->shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw DimensionError("cols(): tensor is not rank 2");
    return node_->shape[1];
}

double Tensor::value() const {
    if (size() != 1) throw DimensionError("value(): tensor is not scalar, shape " + shape_str(node_->shape));
    double v = node_->data[0];
    if (!std::isfinite(v)) throw NumericError("value(): non-finite scalar");
    return v;
}

std::span<const double> Tensor::grad() const {
    if (node_->grad.empty()) throw StateError("grad(): gradient never populated");
    return node_->grad;
}

void Tensor::zero_grad() {
    node_->ensure_grad();
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

// --- ops --------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw DimensionError("matmul: incompatible shapes");
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n, 0.0);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t t = 0; t < k; ++t) {
            const double av = pa[i * k + t];
            const double* brow = pb + t * n;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    auto an = a.node(), bn = b.node();
    return Tensor::make_op(
        {m, n}, std::move(out), {a, b}, [an, bn, m, k, n](const Tensor::Node& self) {
            const double* g = self.grad.data();
            if (an->requires_grad) {
                an->ensure_grad();
                double* ga = an->grad.data();
                const double* pb = bn->data.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const double gv = g[i * n + j];
                        for (std::size_t t = 0; t < k; ++t) ga[i * k + t] += gv * pb[t * n + j];
                    }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                double* gb = bn->grad.data();
                const double* pa = an->data.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const double gv = g[i * n + j];
                        for (std::size_t t = 0; t < k; ++t) gb[t * n + j] += pa[i * k + t] * gv;
                    }
            }
        });
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw DimensionError("transpose: tensor is not rank 2");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m * n);
    const double* pa = a.data().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = pa[i * n + j];
    auto an = a.node();
    return Tensor::make_op({n, m}, std::move(out), {a}, [an, m, n](const Tensor::Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const double* g = self.grad.data();
        double* ga = an->grad.data();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
}

namespace {

enum class BinKind { kAdd, kSub, kMul };

// Equal shapes, or b is a trailing vector broadcast over the rows of a.
Tensor binary_op(const Tensor& a, const Tensor& b, BinKind kind) {
    const bool same = a.shape() == b.shape();
    const bool row_bcast = !same && a.rank() == 2 && b.rank() == 1 && a.cols() == b.size();
    if (!same && !row_bcast) {
        throw DimensionError("elementwise: incompatible shapes " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    const std::size_t n = a.size();
    const std::size_t cols = row_bcast ? b.size() : 0;
    std::vector<double> out(n);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        const double bv = row_bcast ? pb[i % cols] : pb[i];
        switch (kind) {
            case BinKind::kAdd: out[i] = pa[i] + bv; break;
            case BinKind::kSub: out[i] = pa[i] - bv; break;
            case BinKind::kMul: out[i] = pa[i] * bv; break;
        }
    }
    auto an = a.node(), bn = b.node();
    return Tensor::make_op(
        a.shape(), std::move(out), {a, b},
        [an, bn, kind, row_bcast, cols, n](const Tensor::Node& self) {
            const double* g = self.grad.data();
            if (an->requires_grad) {
                an->ensure_grad();
                double* ga = an->grad.data();
                if (kind == BinKind::kMul) {
                    const double* pb = bn->data.data();
                    for (std::size_t i = 0; i < n; ++i)
                        ga[i] += g[i] * (row_bcast ? pb[i % cols] : pb[i]);
                } else {
                    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
                }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                double* gb = bn->grad.data();
                const double* pa = an->data.data();
                const double sign = (kind == BinKind::kSub) ? -1.0 : 1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t bi = row_bcast ? (i % cols) : i;
                    if (kind == BinKind::kMul) {
                        gb[bi] += g[i] * pa[i];
                    } else {
                        gb[bi] += sign * g[i];
                    }
                }
            }
        });
}

Tensor unary_op(const Tensor& a, double (*fwd)(double), double (*dfdx)(double, double)) {
    const std::size_t n = a.size();
    std::vector<double> out(n);
    const double* pa = a.data().data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(pa[i]);
    auto an = a.node();
    return Tensor::make_op(a.shape(), std::move(out), {a}, [an, dfdx, n](const Tensor::Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const double* g = self.grad.data();
        const double* x = an->data.data();
        const double* y = self.data.data();
        double* ga = an->grad.data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * dfdx(x[i], y[i]);
    });
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::kAdd); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::kSub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::kMul); }

Tensor relu(const Tensor& a) {
    return unary_op(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(
        a, [](double x) { return stable_sigmoid(x); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor scale(const Tensor& a, double c) {
    const std::size_t n = a.size();
    std::vector<double> out(n);
    const double* pa = a.data().data();
    for (std::size_t i = 0; i < n; ++i) out[i] = c * pa[i];
    auto an = a.node();
    return Tensor::make_op(a.shape(), std::move(out), {a}, [an, c, n](const Tensor::Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const double* g = self.grad.data();
        double* ga = an->grad.data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += c * g[i];
    });
}

Tensor reshape(const Tensor& a, std::vector<std::size_t> shape) {
    check_shape(shape);
    if (numel(shape) != a.size()) throw DimensionError("reshape: element count mismatch");
    std::vector<double> out(a.data().begin(), a.data().end());
    auto an = a.node();
    const std::size_t n = a.size();
    return Tensor::make_op(std::move(shape), std::move(out), {a}, [an, n](const Tensor::Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += self.grad[i];
    });
}

Tensor grad_reverse(const Tensor& a) {
    std::vector<double> out(a.data().begin(), a.data().end());
    auto an = a.node();
    const std::size_t n = a.size();
    return Tensor::make_op(a.shape(), std::move(out), {a}, [an, n](const Tensor::Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) an->grad[i] -= self.grad[i];
    });
}

Tensor concat_channel(const Tensor& a, const Tensor& noise) {
    if (a.rank() != 2 || noise.rank() != 2 || noise.cols() != 1) {
        throw DimensionError("concat_channel: expected [m x d] and [m x 1]");
    }
    if (a.rows() != noise.rows()) throw DimensionError("concat_channel: row count mismatch");
    const std::size_t m = a.rows(), d = a.cols();
    std::vector<double> out(m * (d + 1));
    const double* pa = a.data().data();
    const double* pn = noise.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        std::copy(pa + i * d, pa + (i + 1) * d, out.begin() + static_cast<std::ptrdiff_t>(i * (d + 1)));
        out[i * (d + 1) + d] = pn[i];
    }
    auto an = a.node();
    return Tensor::make_op({m, d + 1}, std::move(out), {a, noise},
                           [an, m, d](const Tensor::Node& self) {
                               if (!an->requires_grad) return;
                               an->ensure_grad();
                               const double* g = self.grad.data();
                               double* ga = an->grad.data();
                               for (std::size_t i = 0; i < m; ++i)
                                   for (std::size_t j = 0; j < d; ++j)
                                       ga[i * d + j] += g[i * (d + 1) + j];
                           });
}

Tensor row_l2_norm(const Tensor& a) {
    if (a.rank() != 2) throw DimensionError("row_l2_norm: tensor is not rank 2");
    const std::size_t m = a.rows(), z = a.cols();
    std::vector<double> out(m);
    const double* pa = a.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < z; ++j) {
            const double v = pa[i * z + j];
            s += v * v;
        }
        out[i] = std::sqrt(s);
    }
    auto an = a.node();
    return Tensor::make_op({m}, std::move(out), {a}, [an, m, z](const Tensor::Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const double* g = self.grad.data();
        const double* x = an->data.data();
        const double* nrm = self.data.data();
        double* ga = an->grad.data();
        for (std::size_t i = 0; i < m; ++i) {
            if (nrm[i] <= 0.0) continue;  // subgradient 0 at the zero row
            const double gi = g[i] / nrm[i];
            for (std::size_t j = 0; j < z; ++j) ga[i * z + j] += gi * x[i * z + j];
        }
    });
}

Tensor row_cosine(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape() != b.shape()) {
        throw DimensionError("row_cosine: shapes must match and be rank 2");
    }
    const std::size_t m = a.rows(), z = a.cols();
    std::vector<double> out(m);
    std::vector<double> na(m), nb(m), dot(m);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double c = 0.0, sa = 0.0, sb = 0.0;
        for (std::size_t j = 0; j < z; ++j) {
            const double av = pa[i * z + j], bv = pb[i * z + j];
            c += av * bv;
            sa += av * av;
            sb += bv * bv;
        }
        na[i] = std::sqrt(sa);
        nb[i] = std::sqrt(sb);
        dot[i] = c;
        if (na[i] < kCosineEps && nb[i] < kCosineEps) {
            static thread_local bool warned = false;
            if (!warned) {
                log_warn("row_cosine: both vectors numerically zero, similarity defined as 0");
                warned = true;
            }
            out[i] = 0.0;
        } else {
            out[i] = c / (na[i] * nb[i] + kCosineEps);
        }
    }
    auto an = a.node(), bn = b.node();
    return Tensor::make_op(
        {m}, std::move(out), {a, b},
        [an, bn, m, z, na = std::move(na), nb = std::move(nb),
         dot = std::move(dot)](const Tensor::Node& self) {
            const double* g = self.grad.data();
            const double* pa = an->data.data();
            const double* pb = bn->data.data();
            for (std::size_t i = 0; i < m; ++i) {
                if (na[i] < kCosineEps || nb[i] < kCosineEps) continue;  // subgradient 0
                const double denom = na[i] * nb[i] + kCosineEps;
                const double gi = g[i];
                if (an->requires_grad) {
                    an->ensure_grad();
                    double* ga = an->grad.data();
                    const double k = dot[i] * nb[i] / (na[i] * denom * denom);
                    for (std::size_t j = 0; j < z; ++j)
                        ga[i * z + j] += gi * (pb[i * z + j] / denom - k * pa[i * z + j]);
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    double* gb = bn->grad.data();
                    const double k = dot[i] * na[i] / (nb[i] * denom * denom);
                    for (std::size_t j = 0; j < z; ++j)
                        gb[i * z + j] += gi * (pa[i * z + j] / denom - k * pb[i * z + j]);
                }
            }
        });
}

Tensor cosine_sim(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1 || a.size() != b.size()) {
        throw DimensionError("cosine_sim: expected two vectors of equal length");
    }
    Tensor ra = reshape(a, {1, a.size()});
    Tensor rb = reshape(b, {1, b.size()});
    return reshape(row_cosine(ra, rb), {1});
}

Tensor bce(const Tensor& p, int y) {
    if (y != 0 && y != 1) throw ConfigError("bce: label must be 0 or 1");
    if (p.size() != 1) throw DimensionError("bce: probability must be scalar");
    return bce_mean(p, {y});
}

Tensor bce_mean(const Tensor& p, const std::vector<int>& y) {
    const bool vec = p.rank() == 1;
    const bool col = p.rank() == 2 && p.cols() == 1;
    if (!vec && !col) throw DimensionError("bce_mean: expected [m] or [m x 1] probabilities");
    const std::size_t m = vec ? p.size() : p.rows();
    if (y.size() != m) throw DimensionError("bce_mean: label count mismatch");
    for (int v : y) {
        if (v != 0 && v != 1) throw ConfigError("bce_mean: labels must be 0 or 1");
    }
    const double* pp = p.data().data();
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double q = clamp_prob(pp[i]);
        total += y[i] ? -std::log(q) : -std::log(1.0 - q);
    }
    auto pn = p.node();
    return Tensor::make_op(
        {1}, {total / static_cast<double>(m)}, {p}, [pn, y, m](const Tensor::Node& self) {
            if (!pn->requires_grad) return;
            pn->ensure_grad();
            const double g = self.grad[0] / static_cast<double>(m);
            const double* pp = pn->data.data();
            double* gp = pn->grad.data();
            for (std::size_t i = 0; i < m; ++i) {
                if (pp[i] < kProbClamp || pp[i] > 1.0 - kProbClamp) continue;  // clamped: flat
                const double q = pp[i];
                gp[i] += g * (q - static_cast<double>(y[i])) / (q * (1.0 - q));
            }
        });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    auto an = a.node();
    const std::size_t n = a.size();
    return Tensor::make_op({1}, {s}, {a}, [an, n](const Tensor::Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const double g = self.grad[0];
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += g;
    });
}

Tensor mean(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    const std::size_t n = a.size();
    auto an = a.node();
    return Tensor::make_op({1}, {s / static_cast<double>(n)}, {a}, [an, n](const Tensor::Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const double g = self.grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += g;
    });
}

void backward(const Tensor& root) {
    if (!root.defined() || root.size() != 1) {
        throw DimensionError("backward: root must be a scalar tensor");
    }
    if (!std::isfinite(root.data()[0])) throw NumericError("backward: non-finite root value");

    auto root_node = root.node();
    if (!root_node->requires_grad) return;  // nothing recorded to this root

    // Post-order (topological) collection; every node visited exactly once.
    std::vector<Tensor::Node*> order;
    std::unordered_set<Tensor::Node*> seen;
    std::vector<std::pair<Tensor::Node*, std::size_t>> stack;
    stack.emplace_back(root_node.get(), 0);
    seen.insert(root_node.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Tensor::Node* parent = node->parents[next++].get();
            if (parent->requires_grad && !seen.count(parent)) {
                seen.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Interior grads are per-sweep scratch; leaves accumulate across sweeps.
    for (Tensor::Node* node : order) {
        if (node->backward) {
            node->ensure_grad();
            std::fill(node->grad.begin(), node->grad.end(), 0.0);
        }
    }
    root_node->ensure_grad();
    root_node->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor::Node* node = *it;
        if (node->backward) node->backward(*node);
    }
}

double grad_check(const std::function<Tensor(Tensor&)>& f, Tensor& x, double h) {
    if (h < 1e-6 || h > 1e-4) throw ConfigError("grad_check: h must lie in [1e-6, 1e-4]");
    const bool had_grad_flag = x.requires_grad();
    x.set_requires_grad(true);
    x.zero_grad();

    Tensor y = f(x);
    if (y.size() != 1) throw DimensionError("grad_check: f must return a scalar");
    if (!std::isfinite(y.data()[0])) throw NumericError("grad_check: non-finite f(x)");
    backward(y);

    std::vector<double> analytic(x.grad().begin(), x.grad().end());

    std::vector<double> central(x.size());
    {
        NoGradGuard guard;
        auto data = x.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double orig = data[i];
            data[i] = orig + h;
            const double fp = f(x).value();
            data[i] = orig - h;
            const double fm = f(x).value();
            data[i] = orig;
            central[i] = (fp - fm) / (2.0 * h);
        }
    }

    double max_rel = 0.0;
    for (std::size_t i = 0; i < central.size(); ++i) {
        const double denom = std::abs(analytic[i]) + std::abs(central[i]) + 1e-12;
        max_rel = std::max(max_rel, std::abs(analytic[i] - central[i]) / denom);
    }
    x.set_requires_grad(had_grad_flag);
    return max_rel;
}

}  // namespace dhag
