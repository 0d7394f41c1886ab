#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "svib/common.hpp"

namespace svib {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

// One node of the dynamic tape. The tape is rebuilt on every forward pass;
// backprop closures capture parent nodes and whatever forward values the
// local derivative needs.
struct TapeNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized on first backward touch
    bool requires_grad = false;
    std::vector<std::shared_ptr<TapeNode>> parents;
    std::function<void(TapeNode&)> backprop;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

class Tensor {
public:
    Tensor() = default;

    static Tensor constant(Shape shape, std::vector<double> data) {
        return make(std::move(shape), std::move(data), false);
    }

    static Tensor param(Shape shape, std::vector<double> data) {
        return make(std::move(shape), std::move(data), true);
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::size_t n = shape_numel(shape);
        return make(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static Tensor scalar(double v) { return constant({1}, {v}); }

    bool defined() const { return static_cast<bool>(n_); }
    const Shape& shape() const { return n_->shape; }
    std::size_t numel() const { return n_->value.size(); }
    std::size_t rank() const { return n_->shape.size(); }
    bool requires_grad() const { return n_->requires_grad; }

    const std::vector<double>& data() const { return n_->value; }
    std::vector<double>& data_mut() { return n_->value; }
    const std::vector<double>& grad() const { return n_->grad; }
    bool has_grad() const { return !n_->grad.empty(); }

    double item() const {
        if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
        return n_->value[0];
    }

    void zero_grad() { n_->grad.assign(n_->value.size(), 0.0); }

    // True when this tensor is an interior tape node (has recorded parents).
    bool on_tape() const { return !n_->parents.empty(); }

    // Value copy with no tape history.
    Tensor detach() const { return constant(n_->shape, n_->value); }

    std::shared_ptr<TapeNode> node() const { return n_; }

    static Tensor from_node(std::shared_ptr<TapeNode> n) {
        Tensor t;
        t.n_ = std::move(n);
        return t;
    }

private:
    static Tensor make(Shape shape, std::vector<double> data, bool requires_grad) {
        if (shape_numel(shape) != data.size())
            throw DimensionError("tensor data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
        auto n = std::make_shared<TapeNode>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        Tensor t;
        t.n_ = std::move(n);
        return t;
    }

    std::shared_ptr<TapeNode> n_;
};

namespace detail {

inline std::shared_ptr<TapeNode> new_node(Shape shape, std::vector<double> value,
                                          std::vector<std::shared_ptr<TapeNode>> parents) {
    auto n = std::make_shared<TapeNode>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool rg = false;
    for (auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) n->parents = std::move(parents);
    return n;
}

template <typename Fwd, typename Dfwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Dfwd dfwd, const char* name) {
    const auto& xv = x.data();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
    auto n = new_node(x.shape(), std::move(out), {x.node()});
    if (n->requires_grad) {
        auto xp = x.node();
        n->backprop = [xp, dfwd](TapeNode& self) {
            if (!xp->requires_grad) return;
            xp->ensure_grad();
            for (std::size_t i = 0; i < self.value.size(); ++i)
                xp->grad[i] += self.grad[i] * dfwd(xp->value[i], self.value[i]);
        };
    }
    (void)name;
    return Tensor::from_node(n);
}

// Trailing-dimension broadcast: small's shape must be a suffix of big's
// shape, or small must be a single element.
inline void check_broadcast(const Shape& big, const Shape& small) {
    if (shape_numel(small) == 1) return;
    if (small.size() > big.size())
        throw DimensionError("shapes not broadcastable: " + shape_str(big) + " vs " + shape_str(small));
    for (std::size_t i = 0; i < small.size(); ++i) {
        if (small[small.size() - 1 - i] != big[big.size() - 1 - i])
            throw DimensionError("shapes not broadcastable: " + shape_str(big) + " vs " +
                                 shape_str(small));
    }
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    const bool a_big = a.numel() >= b.numel();
    const Tensor& big = a_big ? a : b;
    const Tensor& small = a_big ? b : a;
    detail::check_broadcast(big.shape(), small.shape());
    const auto& bv = big.data();
    const auto& sv = small.data();
    const std::size_t ss = sv.size();
    std::vector<double> out(bv.size());
    for (std::size_t i = 0; i < bv.size(); ++i) out[i] = bv[i] + sv[i % ss];
    auto n = detail::new_node(big.shape(), std::move(out), {big.node(), small.node()});
    if (n->requires_grad) {
        auto bp = big.node();
        auto sp = small.node();
        n->backprop = [bp, sp, ss](TapeNode& self) {
            if (bp->requires_grad) {
                bp->ensure_grad();
                for (std::size_t i = 0; i < self.value.size(); ++i) bp->grad[i] += self.grad[i];
            }
            if (sp->requires_grad) {
                sp->ensure_grad();
                for (std::size_t i = 0; i < self.value.size(); ++i) sp->grad[i % ss] += self.grad[i];
            }
        };
    }
    return Tensor::from_node(n);
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    const bool a_big = a.numel() >= b.numel();
    const Tensor& big = a_big ? a : b;
    const Tensor& small = a_big ? b : a;
    detail::check_broadcast(big.shape(), small.shape());
    const auto& bv = big.data();
    const auto& sv = small.data();
    const std::size_t ss = sv.size();
    std::vector<double> out(bv.size());
    for (std::size_t i = 0; i < bv.size(); ++i) out[i] = bv[i] * sv[i % ss];
    auto n = detail::new_node(big.shape(), std::move(out), {big.node(), small.node()});
    if (n->requires_grad) {
        auto bp = big.node();
        auto sp = small.node();
        n->backprop = [bp, sp, ss](TapeNode& self) {
            if (bp->requires_grad) {
                bp->ensure_grad();
                for (std::size_t i = 0; i < self.value.size(); ++i)
                    bp->grad[i] += self.grad[i] * sp->value[i % ss];
            }
            if (sp->requires_grad) {
                sp->ensure_grad();
                for (std::size_t i = 0; i < self.value.size(); ++i)
                    sp->grad[i % ss] += self.grad[i] * bp->value[i];
            }
        };
    }
    return Tensor::from_node(n);
}

inline Tensor neg(const Tensor& x) {
    return detail::unary_op(x, [](double v) { return -v; },
                            [](double, double) { return -1.0; }, "neg");
}

inline Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }

inline Tensor tanh(const Tensor& x) {
    return detail::unary_op(x, [](double v) { return std::tanh(v); },
                            [](double, double y) { return 1.0 - y * y; }, "tanh");
}

inline Tensor relu(const Tensor& x) {
    return detail::unary_op(x, [](double v) { return v > 0.0 ? v : 0.0; },
                            [](double v, double) { return v > 0.0 ? 1.0 : 0.0; }, "relu");
}

inline Tensor exp(const Tensor& x) {
    for (double v : x.data())
        if (v > 709.0) throw NumericDomainError("exp overflow at input " + std::to_string(v));
    return detail::unary_op(x, [](double v) { return std::exp(v); },
                            [](double, double y) { return y; }, "exp");
}

inline Tensor log(const Tensor& x) {
    for (double v : x.data())
        if (!(v > 0.0)) throw NumericDomainError("log of non-positive value " + std::to_string(v));
    return detail::unary_op(x, [](double v) { return std::log(v); },
                            [](double v, double) { return 1.0 / v; }, "log");
}

inline Tensor square(const Tensor& x) {
    return detail::unary_op(x, [](double v) { return v * v; },
                            [](double v, double) { return 2.0 * v; }, "square");
}

inline Tensor scale(const Tensor& x, double c) {
    return detail::unary_op(x, [c](double v) { return c * v; },
                            [c](double, double) { return c; }, "scale");
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
        throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    const std::size_t m = a.shape()[0], k = a.shape()[1], p = b.shape()[1];
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<double> out(m * p, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = av[i * k + kk];
            const double* brow = &bv[kk * p];
            double* orow = &out[i * p];
            for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
        }
    auto n = detail::new_node({m, p}, std::move(out), {a.node(), b.node()});
    if (n->requires_grad) {
        auto ap = a.node();
        auto bp = b.node();
        n->backprop = [ap, bp, m, k, p](TapeNode& self) {
            if (ap->requires_grad) {
                ap->ensure_grad();
                // dA = G * B^T
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < p; ++j) {
                        const double g = self.grad[i * p + j];
                        for (std::size_t kk = 0; kk < k; ++kk)
                            ap->grad[i * k + kk] += g * bp->value[kk * p + j];
                    }
            }
            if (bp->requires_grad) {
                bp->ensure_grad();
                // dB = A^T * G
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const double av_ik = ap->value[i * k + kk];
                        const double* grow = &self.grad[i * p];
                        double* brow = &bp->grad[kk * p];
                        for (std::size_t j = 0; j < p; ++j) brow[j] += av_ik * grow[j];
                    }
            }
        };
    }
    return Tensor::from_node(n);
}

inline Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    auto n = detail::new_node({1}, {s}, {x.node()});
    if (n->requires_grad) {
        auto xp = x.node();
        n->backprop = [xp](TapeNode& self) {
            if (!xp->requires_grad) return;
            xp->ensure_grad();
            for (double& g : xp->grad) g += self.grad[0];
        };
    }
    return Tensor::from_node(n);
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

// Row-wise log-softmax of a [m x n] matrix.
inline Tensor log_softmax(const Tensor& x) {
    if (x.rank() != 2) throw DimensionError("log_softmax expects rank-2 input, got " + shape_str(x.shape()));
    const std::size_t m = x.shape()[0], nn = x.shape()[1];
    const auto& xv = x.data();
    for (double v : xv)
        if (!std::isfinite(v)) throw NumericDomainError("non-finite logit in log_softmax");
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = &xv[i * nn];
        double mx = row[0];
        for (std::size_t j = 1; j < nn; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < nn; ++j) s += std::exp(row[j] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < nn; ++j) out[i * nn + j] = row[j] - lse;
    }
    auto n = detail::new_node(x.shape(), std::move(out), {x.node()});
    if (n->requires_grad) {
        auto xp = x.node();
        n->backprop = [xp, m, nn](TapeNode& self) {
            if (!xp->requires_grad) return;
            xp->ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                double gsum = 0.0;
                for (std::size_t j = 0; j < nn; ++j) gsum += self.grad[i * nn + j];
                for (std::size_t j = 0; j < nn; ++j) {
                    const double p = std::exp(self.value[i * nn + j]);
                    xp->grad[i * nn + j] += self.grad[i * nn + j] - p * gsum;
                }
            }
        };
    }
    return Tensor::from_node(n);
}

// Column-wise concatenation of [m x p] and [m x q] into [m x (p+q)].
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[0] != b.shape()[0])
        throw DimensionError("concat_cols shape mismatch: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    const std::size_t m = a.shape()[0], p = a.shape()[1], q = b.shape()[1];
    std::vector<double> out(m * (p + q));
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(&a.data()[i * p], p, &out[i * (p + q)]);
        std::copy_n(&b.data()[i * q], q, &out[i * (p + q) + p]);
    }
    auto n = detail::new_node({m, p + q}, std::move(out), {a.node(), b.node()});
    if (n->requires_grad) {
        auto ap = a.node();
        auto bp = b.node();
        n->backprop = [ap, bp, m, p, q](TapeNode& self) {
            if (ap->requires_grad) {
                ap->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < p; ++j)
                        ap->grad[i * p + j] += self.grad[i * (p + q) + j];
            }
            if (bp->requires_grad) {
                bp->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < q; ++j)
                        bp->grad[i * q + j] += self.grad[i * (p + q) + p + j];
            }
        };
    }
    return Tensor::from_node(n);
}

// Reverse-mode sweep from a scalar loss. Grads accumulate across calls
// until the caller zeroes them.
inline void backward(const Tensor& loss) {
    if (loss.numel() != 1) throw ContractError("backward requires a scalar loss, got " + shape_str(loss.shape()));
    std::vector<TapeNode*> order;
    std::unordered_set<TapeNode*> seen;
    std::vector<std::pair<TapeNode*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TapeNode* p = node->parents[idx++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    // Interior grads are scratch space for this sweep; only leaves accumulate.
    for (TapeNode* n : order)
        if (!n->parents.empty()) n->grad.assign(n->value.size(), 0.0);
    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TapeNode* n = *it;
        if (n->backprop) {
            n->ensure_grad();
            n->backprop(*n);
        }
    }
}

}  // namespace svib
