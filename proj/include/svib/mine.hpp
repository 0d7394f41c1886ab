#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "svib/common.hpp"
#include "svib/nets.hpp"
#include "svib/optim.hpp"
#include "svib/tensor.hpp"

namespace svib {

// Row-aligned (X_i, Z_i) samples from the joint distribution.
struct PairBatch {
    std::size_t n = 0, dx = 0, dz = 0;
    std::vector<double> x;  // n x dx
    std::vector<double> z;  // n x dz
};

struct ProbeConfig {
    std::size_t interval = 2000;  // trainer updates between probes
    std::size_t batch = 64;
    std::size_t steps = 256;
    double lr = 0.0007;
    bool reinitialize = true;
};

struct MIRecord {
    std::size_t update_step = 0;
    double estimate = 0.0;  // nats
    std::size_t probe_steps = 0;
    std::size_t batch = 0;
};

// log((1/n) sum_i exp t_i) over an [n x 1] column, max-subtracted so exp
// never overflows; the max is treated as a constant (its gradient term
// cancels, as in the usual log-sum-exp trick).
inline Tensor log_mean_exp(const Tensor& t) {
    if (t.rank() != 2 || t.shape()[1] != 1)
        throw DimensionError("log_mean_exp expects an [n x 1] column");
    const std::size_t n = t.shape()[0];
    double mx = t.data()[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, t.data()[i]);
    Tensor c = Tensor::constant({1}, {mx});
    return add(log(scale(sum(exp(sub(t, c))), 1.0 / static_cast<double>(n))), c);
}

inline std::vector<std::size_t> shuffle_permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    return perm;
}

// Eq. 21 objective as a tape scalar: (1/n) sum T(x_i, z_i) -
// log((1/n) sum exp T(x_i, z_perm(i))).
inline Tensor mine_objective(const StatisticsNet& net, const PairBatch& pairs,
                             const std::vector<std::size_t>& perm) {
    if (pairs.n < 2) throw ContractError("mine estimator needs at least 2 pairs");
    if (perm.size() != pairs.n) throw DimensionError("shuffle permutation length mismatch");
    Tensor xt = Tensor::constant({pairs.n, pairs.dx}, pairs.x);
    Tensor zt = Tensor::constant({pairs.n, pairs.dz}, pairs.z);
    std::vector<double> zs(pairs.n * pairs.dz);
    for (std::size_t i = 0; i < pairs.n; ++i)
        std::copy_n(&pairs.z[perm[i] * pairs.dz], pairs.dz, &zs[i * pairs.dz]);
    Tensor zst = Tensor::constant({pairs.n, pairs.dz}, std::move(zs));
    return sub(mean(net.forward(xt, zt)), log_mean_exp(net.forward(xt, zst)));
}

inline double mine_estimate(const StatisticsNet& net, const PairBatch& pairs,
                            const std::vector<std::size_t>& perm) {
    return mine_objective(net, pairs, perm).item();
}

inline double mine_estimate(const StatisticsNet& net, const PairBatch& pairs, Rng& rng) {
    if (pairs.n < 2) throw ContractError("mine estimator needs at least 2 pairs");
    return mine_estimate(net, pairs, shuffle_permutation(pairs.n, rng));
}

// Gradient-ascent probe on Eq. 21. Each step draws a mini-batch (with
// replacement when the pool is larger than the batch size) and a fresh
// shuffle. The reported estimate averages the last quarter of the step
// objectives to damp shuffle noise.
inline MIRecord train_probe(StatisticsNet& net, const ProbeConfig& cfg, const PairBatch& pool,
                            Rng& rng, std::size_t update_step = 0) {
    if (pool.n < 2) throw ContractError("train_probe needs at least 2 pairs");
    if (cfg.batch < 2 || cfg.steps == 0 || !(cfg.lr > 0.0) || cfg.interval == 0)
        throw ContractError("ProbeConfig fields must be positive");
    if (cfg.reinitialize) net.reinit(rng);
    Optimizer opt(net.params(), OptimConfig{.lr = cfg.lr});
    const std::size_t nb = std::min(cfg.batch, pool.n);
    PairBatch batch;
    batch.n = nb;
    batch.dx = pool.dx;
    batch.dz = pool.dz;
    batch.x.resize(nb * pool.dx);
    batch.z.resize(nb * pool.dz);
    const std::size_t tail_from = cfg.steps - std::min(cfg.steps, std::max<std::size_t>(1, cfg.steps / 4));
    double tail_sum = 0.0;
    std::size_t tail_count = 0;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        for (std::size_t i = 0; i < nb; ++i) {
            const std::size_t src = pool.n == nb ? i : rng.uniform_index(pool.n);
            std::copy_n(&pool.x[src * pool.dx], pool.dx, &batch.x[i * pool.dx]);
            std::copy_n(&pool.z[src * pool.dz], pool.dz, &batch.z[i * pool.dz]);
        }
        Tensor obj = mine_objective(net, batch, shuffle_permutation(nb, rng));
        if (step >= tail_from) {
            tail_sum += obj.item();
            ++tail_count;
        }
        opt.zero_grad();
        backward(obj);
        opt.ascend();
    }
    MIRecord rec;
    rec.update_step = update_step;
    rec.estimate = tail_sum / static_cast<double>(tail_count);
    rec.probe_steps = cfg.steps;
    rec.batch = nb;
    return rec;
}

struct EcTrace {
    std::size_t peak_index = 0;
    std::size_t peak_step = 0;
    double peak_value = 0.0;
    double final_value = 0.0;
    bool compression_observed = false;  // false also when the trace never turns over
};

// Locates the extraction peak and whether the trace falls afterwards.
inline EcTrace ec_trace(const std::vector<MIRecord>& records) {
    if (records.size() < 3) throw ContractError("ec_trace needs at least 3 probe records");
    EcTrace t;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].estimate > records[t.peak_index].estimate) t.peak_index = i;
    }
    t.peak_step = records[t.peak_index].update_step;
    t.peak_value = records[t.peak_index].estimate;
    t.final_value = records.back().estimate;
    t.compression_observed =
        t.peak_index + 1 < records.size() && t.final_value < t.peak_value;
    return t;
}

// Experimental direct IB objective (max over theta/phi, min over eta):
//   -beta E_joint[That] + beta log E_marginal[exp(That + J/beta)]
// with the marginal expectation formed by the Eq. 21 shuffle.
inline Tensor mine_direct_objective(const Tensor& that_joint, const Tensor& that_marg,
                                    const Tensor& j_marg, double beta) {
    if (!(beta > 0.0)) throw ContractError("mine_direct_objective: beta must be positive");
    Tensor inner = add(that_marg, scale(j_marg, 1.0 / beta));
    return add(scale(mean(that_joint), -beta), scale(log_mean_exp(inner), beta));
}

// One A.5 max-min step. The encoder/J-model parameters climb the objective
// while the statistics parameters descend it; plain SGD, shared step size.
// Returns the objective value before the update.
inline double mine_direct_update(const Encoder& encoder, const Mlp& j_model,
                                 const StatisticsNet& statnet, const std::vector<double>& obs,
                                 std::size_t n, double beta, double lr, Rng& rng) {
    if (n < 2) throw ContractError("mine_direct_update needs at least 2 observations");
    Tensor z = encoder.encode_batch(obs, n, 1, rng, false);
    Tensor xt = Tensor::constant({n, encoder.config().obs_dim}, obs);
    // permutation as a constant matrix so the shuffled rows stay on the tape
    const auto perm = shuffle_permutation(n, rng);
    std::vector<double> pm(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) pm[i * n + perm[i]] = 1.0;
    Tensor z_shuf = matmul(Tensor::constant({n, n}, std::move(pm)), z);
    Tensor obj = mine_direct_objective(statnet.forward(xt, z), statnet.forward(xt, z_shuf),
                                       j_model.forward(z_shuf), beta);
    const double value = obj.item();
    for (auto p : encoder.params()) p.zero_grad();
    for (auto p : j_model.params()) p.zero_grad();
    for (auto p : statnet.params()) p.zero_grad();
    backward(obj);
    auto apply = [&](std::vector<Tensor> params, double sign) {
        for (auto& p : params) {
            if (!p.has_grad()) continue;
            auto& v = p.data_mut();
            const auto& g = p.grad();
            for (std::size_t i = 0; i < v.size(); ++i) v[i] += sign * lr * g[i];
        }
    };
    apply(encoder.params(), +1.0);
    apply(j_model.params(), +1.0);
    apply(statnet.params(), -1.0);
    return value;
}

}  // namespace svib
