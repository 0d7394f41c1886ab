#pragma once

#include <cmath>
#include <vector>

#include "svib/tensor.hpp"

namespace svib {

struct OptimConfig {
    double lr = 7e-4;
    double rmsprop_decay = 0.99;
    double rmsprop_eps = 1e-5;
    bool plain_sgd = false;  // oracle-style tests want an un-adapted step
};

// Gradient-ascent optimizer over a fixed parameter list (RMSProp by default).
class Optimizer {
public:
    Optimizer() = default;

    Optimizer(std::vector<Tensor> params, OptimConfig cfg) : params_(std::move(params)), cfg_(cfg) {
        for (const auto& p : params_) cache_.emplace_back(p.numel(), 0.0);
    }

    // Ascend along the accumulated grads, then clear them.
    void ascend() {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i];
            if (!p.has_grad()) continue;
            auto& v = p.data_mut();
            const auto& g = p.grad();
            if (cfg_.plain_sgd) {
                for (std::size_t j = 0; j < v.size(); ++j) v[j] += cfg_.lr * g[j];
            } else {
                auto& c = cache_[i];
                for (std::size_t j = 0; j < v.size(); ++j) {
                    c[j] = cfg_.rmsprop_decay * c[j] + (1.0 - cfg_.rmsprop_decay) * g[j] * g[j];
                    v[j] += cfg_.lr * g[j] / (std::sqrt(c[j]) + cfg_.rmsprop_eps);
                }
            }
        }
        zero_grad();
    }

    void descend() {
        negate_grads();
        ascend();
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    const std::vector<Tensor>& params() const { return params_; }

private:
    void negate_grads() {
        for (auto& p : params_)
            if (p.has_grad())
                for (auto& g : p.node()->grad) g = -g;
    }

    std::vector<Tensor> params_;
    OptimConfig cfg_;
    std::vector<std::vector<double>> cache_;
};

}  // namespace svib
