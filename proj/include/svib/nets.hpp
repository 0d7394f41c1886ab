#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "svib/common.hpp"
#include "svib/tensor.hpp"

namespace svib {

enum class Activation { Identity, Tanh, Relu };

struct Linear {
    Tensor w;  // [in x out]
    Tensor b;  // [out]
};

inline Linear init_linear(std::size_t in, std::size_t out, Rng& rng) {
    // scaled uniform fan-in init, zero bias
    const double limit = std::sqrt(3.0 / static_cast<double>(in));
    std::vector<double> wd(in * out);
    for (auto& v : wd) v = rng.uniform(-limit, limit);
    return Linear{Tensor::param({in, out}, std::move(wd)),
                  Tensor::param({out}, std::vector<double>(out, 0.0))};
}

class Mlp {
public:
    Mlp() = default;

    // dims = {in, h1, ..., out}; `hidden` activation on all but the last layer.
    Mlp(const std::vector<std::size_t>& dims, Activation hidden, Rng& rng) : hidden_(hidden) {
        if (dims.size() < 2) throw ContractError("Mlp needs at least input and output dims");
        for (std::size_t i = 0; i + 1 < dims.size(); ++i)
            layers_.push_back(init_linear(dims[i], dims[i + 1], rng));
    }

    Tensor forward(const Tensor& x) const {
        Tensor h = x;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            h = add(matmul(h, layers_[i].w), layers_[i].b);
            if (i + 1 < layers_.size()) {
                if (hidden_ == Activation::Tanh) h = tanh(h);
                else if (hidden_ == Activation::Relu) h = relu(h);
            }
        }
        return h;
    }

    std::vector<Tensor> params() const {
        std::vector<Tensor> out;
        for (const auto& l : layers_) {
            out.push_back(l.w);
            out.push_back(l.b);
        }
        return out;
    }

    std::vector<Linear>& layers() { return layers_; }
    const std::vector<Linear>& layers() const { return layers_; }

private:
    std::vector<Linear> layers_;
    Activation hidden_ = Activation::Tanh;
};

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

inline void append_mlp_params(NamedParams& out, const std::string& prefix, const Mlp& mlp) {
    const auto& ls = mlp.layers();
    for (std::size_t i = 0; i < ls.size(); ++i) {
        out.emplace_back(prefix + ".l" + std::to_string(i) + ".w", ls[i].w);
        out.emplace_back(prefix + ".l" + std::to_string(i) + ".b", ls[i].b);
    }
}

struct EncoderConfig {
    std::size_t obs_dim = 0;
    std::size_t noise_dim = 4;
    std::size_t latent_dim = 8;
    double noise_var = 0.1;
    std::vector<std::size_t> hidden = {64, 64};
};

// Stochastic encoder: Z = f([x ; eps]) with eps drawn from a zero-mean
// Gaussian. Noise enters by input concatenation, so the conditional law of Z
// is not restricted to a Gaussian family.
class Encoder {
public:
    Encoder() = default;

    Encoder(EncoderConfig cfg, Rng& rng) : cfg_(cfg) {
        if (cfg.latent_dim >= cfg.obs_dim)
            throw ContractError("latent_dim must be strictly less than obs_dim (compression)");
        if (!(cfg.noise_var > 0.0)) throw ContractError("noise_var must be positive");
        std::vector<std::size_t> dims;
        dims.push_back(cfg.obs_dim + cfg.noise_dim);
        for (auto h : cfg.hidden) dims.push_back(h);
        dims.push_back(cfg.latent_dim);
        mlp_ = Mlp(dims, Activation::Tanh, rng);
    }

    const EncoderConfig& config() const { return cfg_; }

    // m particles for each of the n_states rows of xs (flat n_states*obs_dim).
    // Result is [n_states*m x latent_dim], differentiable w.r.t. the encoder
    // weights via the reparameterized noise input. zero_noise forces eps = 0.
    Tensor encode_batch(const std::vector<double>& xs, std::size_t n_states, std::size_t m,
                        Rng& rng, bool zero_noise = false) const {
        if (m == 0) throw ContractError("particle count m must be >= 1");
        if (xs.size() != n_states * cfg_.obs_dim)
            throw DimensionError("observation buffer size mismatch in encode_batch");
        const std::size_t in = cfg_.obs_dim + cfg_.noise_dim;
        const double sd = std::sqrt(cfg_.noise_var);
        std::vector<double> rows(n_states * m * in);
        for (std::size_t t = 0; t < n_states; ++t)
            for (std::size_t i = 0; i < m; ++i) {
                double* row = &rows[(t * m + i) * in];
                std::copy_n(&xs[t * cfg_.obs_dim], cfg_.obs_dim, row);
                for (std::size_t j = 0; j < cfg_.noise_dim; ++j)
                    row[cfg_.obs_dim + j] = zero_noise ? 0.0 : rng.normal(0.0, sd);
            }
        Tensor input = Tensor::constant({n_states * m, in}, std::move(rows));
        return mlp_.forward(input);
    }

    Tensor encode_particles(const std::vector<double>& x, std::size_t m, Rng& rng,
                            bool zero_noise = false) const {
        return encode_batch(x, 1, m, rng, zero_noise);
    }

    std::vector<Tensor> params() const { return mlp_.params(); }
    NamedParams named_params() const {
        NamedParams out;
        append_mlp_params(out, "encoder", mlp_);
        return out;
    }
    Mlp& mlp() { return mlp_; }

private:
    EncoderConfig cfg_;
    Mlp mlp_;
};

struct PolicyValueConfig {
    std::size_t latent_dim = 8;
    std::size_t n_actions = 0;
    std::vector<std::size_t> hidden = {64, 64};
};

// Shared trunk with an action-logit head and a scalar value head.
class PolicyValue {
public:
    PolicyValue() = default;

    PolicyValue(PolicyValueConfig cfg, Rng& rng) : cfg_(cfg) {
        if (cfg.n_actions == 0) throw ContractError("n_actions must be >= 1");
        std::vector<std::size_t> dims;
        dims.push_back(cfg.latent_dim);
        for (auto h : cfg.hidden) dims.push_back(h);
        trunk_dims_ = dims;
        trunk_ = Mlp(dims, Activation::Tanh, rng);
        const std::size_t trunk_out = dims.back();
        policy_head_ = init_linear(trunk_out, cfg.n_actions, rng);
        value_head_ = init_linear(trunk_out, 1, rng);
    }

    const PolicyValueConfig& config() const { return cfg_; }

    struct Heads {
        Tensor logits;  // [k x A]
        Tensor value;   // [k x 1]
    };

    // Note: the trunk output still gets a tanh before the heads.
    Heads forward(const Tensor& z) const {
        if (z.rank() != 2 || z.shape()[1] != cfg_.latent_dim)
            throw DimensionError("policy input must be [k x " + std::to_string(cfg_.latent_dim) +
                                 "], got " + shape_str(z.shape()));
        Tensor h = tanh(trunk_.forward(z));
        Tensor logits = add(matmul(h, policy_head_.w), policy_head_.b);
        Tensor value = add(matmul(h, value_head_.w), value_head_.b);
        return {logits, value};
    }

    // Normalized action distribution and scalar value for one latent vector.
    std::pair<std::vector<double>, double> policy_value(const std::vector<double>& z) const {
        Tensor zt = Tensor::constant({1, cfg_.latent_dim}, z);
        Heads h = forward(zt);
        Tensor lp = log_softmax(h.logits);
        std::vector<double> probs(cfg_.n_actions);
        for (std::size_t a = 0; a < cfg_.n_actions; ++a) probs[a] = std::exp(lp.data()[a]);
        return {probs, h.value.data()[0]};
    }

    std::vector<Tensor> params() const {
        auto out = trunk_.params();
        out.push_back(policy_head_.w);
        out.push_back(policy_head_.b);
        out.push_back(value_head_.w);
        out.push_back(value_head_.b);
        return out;
    }

    NamedParams named_params() const {
        NamedParams out;
        append_mlp_params(out, "pv.trunk", trunk_);
        out.emplace_back("pv.policy.w", policy_head_.w);
        out.emplace_back("pv.policy.b", policy_head_.b);
        out.emplace_back("pv.value.w", value_head_.w);
        out.emplace_back("pv.value.b", value_head_.b);
        return out;
    }

private:
    PolicyValueConfig cfg_;
    std::vector<std::size_t> trunk_dims_;
    Mlp trunk_;
    Linear policy_head_;
    Linear value_head_;
};

struct StatNetConfig {
    std::size_t obs_dim = 0;
    std::size_t latent_dim = 8;
    std::vector<std::size_t> hidden = {128};
};

// MINE statistics network T(X, Z; eta): concatenated (x, z) to a scalar.
class StatisticsNet {
public:
    StatisticsNet() = default;

    StatisticsNet(StatNetConfig cfg, Rng& rng) : cfg_(cfg) { reinit(rng); }

    const StatNetConfig& config() const { return cfg_; }

    void reinit(Rng& rng) {
        std::vector<std::size_t> dims;
        dims.push_back(cfg_.obs_dim + cfg_.latent_dim);
        for (auto h : cfg_.hidden) dims.push_back(h);
        dims.push_back(1);
        mlp_ = Mlp(dims, Activation::Relu, rng);
    }

    // [n x 1] statistics for row-aligned (x, z) batches.
    Tensor forward(const Tensor& x, const Tensor& z) const {
        if (x.rank() != 2 || x.shape()[1] != cfg_.obs_dim)
            throw DimensionError("statistics net x input " + shape_str(x.shape()));
        if (z.rank() != 2 || z.shape()[1] != cfg_.latent_dim)
            throw DimensionError("statistics net z input " + shape_str(z.shape()));
        return mlp_.forward(concat_cols(x, z));
    }

    double statistic(const std::vector<double>& x, const std::vector<double>& z) const {
        Tensor xt = Tensor::constant({1, cfg_.obs_dim}, x);
        Tensor zt = Tensor::constant({1, cfg_.latent_dim}, z);
        return forward(xt, zt).data()[0];
    }

    std::vector<Tensor> params() const { return mlp_.params(); }
    NamedParams named_params() const {
        NamedParams out;
        append_mlp_params(out, "statnet", mlp_);
        return out;
    }

private:
    StatNetConfig cfg_;
    Mlp mlp_;
};

}  // namespace svib
