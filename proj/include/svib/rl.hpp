#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "svib/common.hpp"
#include "svib/nets.hpp"
#include "svib/tensor.hpp"

namespace svib {

struct RLCoefficients {
    double gamma = 0.99;
    std::size_t n_step = 5;
    double value_coef = 0.5;    // alpha_1, also weights the value-fit term of the IB label model
    double entropy_coef = 0.01; // alpha_2
};

// n-step bootstrapped returns:
//   R_t = sum_{i=0}^{n-2} gamma^i r_{t+i} + gamma^{n-1} V(Z_{t+n-1})
// A true terminal inside the window drops the bootstrap; a truncation (or the
// end of the rollout slice) bootstraps with the value of the cut state.
//   values:       length T+1, value at each decision state plus final next state
//   trunc_values: length T, value of the post-step observation (used at index
//                 k only when truncated[k])
inline std::vector<double> nstep_returns(const std::vector<double>& rewards,
                                         const std::vector<unsigned char>& terminal,
                                         const std::vector<unsigned char>& truncated,
                                         const std::vector<double>& values,
                                         const std::vector<double>& trunc_values,
                                         double gamma, std::size_t n) {
    const std::size_t T = rewards.size();
    if (terminal.size() != T || truncated.size() != T || values.size() != T + 1 ||
        trunc_values.size() != T)
        throw DimensionError("nstep_returns: misaligned trajectory arrays");
    if (n < 1) throw ContractError("nstep_returns: n must be >= 1");
    std::vector<double> out(T);
    for (std::size_t t = 0; t < T; ++t) {
        double acc = 0.0, g = 1.0;
        bool closed = false;
        const std::size_t last = std::min(t + n - 1, T);  // exclusive reward end
        for (std::size_t i = t; i < last; ++i) {
            acc += g * rewards[i];
            if (terminal[i]) {
                closed = true;
                break;
            }
            if (truncated[i]) {
                acc += g * gamma * trunc_values[i];
                closed = true;
                break;
            }
            g *= gamma;
        }
        // g is now gamma^(last - t); bootstrap at state `last` (t+n-1 or rollout end)
        if (!closed) acc += g * values[last];
        out[t] = acc;
    }
    return out;
}

struct RolloutBatch {
    std::size_t n_states = 0;
    std::size_t obs_dim = 0;
    std::vector<double> obs;  // n_states x obs_dim
    std::vector<std::size_t> actions;
    std::vector<double> rewards;
    std::vector<unsigned char> terminal, truncated;
    std::vector<double> returns;  // R_t
    Tensor particles;             // [n_states * m x d_z]
    std::size_t m_particles = 1;
};

struct A2CDiagnostics {
    double policy_term = 0, value_term = 0, entropy = 0, mean_value = 0, mean_advantage = 0;
};

// J = mean over states and particles of
//   log pi(a_t|Z)*(R_t - Vbar_t) - alpha1 (R_t - V(Z))^2 + alpha2 H(pi(.|Z))
// The advantage baseline Vbar_t is the mean value across the state's M
// particles and is treated as a constant.
inline Tensor a2c_loss(const RolloutBatch& batch, const PolicyValue& pv, const RLCoefficients& co,
                       A2CDiagnostics* diag = nullptr, bool detach_particles = true) {
    if (batch.n_states == 0) throw ContractError("a2c_loss: empty batch");
    const std::size_t N = batch.n_states, M = batch.m_particles;
    if (batch.actions.size() != N || batch.returns.size() != N)
        throw DimensionError("a2c_loss: batch arrays misaligned");
    Tensor z = detach_particles ? batch.particles.detach() : batch.particles;
    auto heads = pv.forward(z);
    const std::size_t A = pv.config().n_actions;
    Tensor logp = log_softmax(heads.logits);

    // per-state mean value over particles, for the baseline
    std::vector<double> vbar(N, 0.0);
    for (std::size_t t = 0; t < N; ++t) {
        for (std::size_t i = 0; i < M; ++i) vbar[t] += heads.value.data()[t * M + i];
        vbar[t] /= static_cast<double>(M);
    }

    std::vector<double> sel(N * M * A, 0.0);  // one-hot action weighted by advantage
    std::vector<double> ret(N * M);
    for (std::size_t t = 0; t < N; ++t) {
        const double adv = batch.returns[t] - vbar[t];
        for (std::size_t i = 0; i < M; ++i) {
            sel[(t * M + i) * A + batch.actions[t]] = adv;
            ret[t * M + i] = batch.returns[t];
        }
    }
    const double inv = 1.0 / static_cast<double>(N * M);
    Tensor policy_term = sum(mul(logp, Tensor::constant({N * M, A}, std::move(sel))));
    Tensor err = sub(heads.value, Tensor::constant({N * M, 1}, std::move(ret)));
    Tensor value_term = sum(square(err));
    Tensor entropy = neg(sum(mul(exp(logp), logp)));
    Tensor j = scale(add(sub(policy_term, scale(value_term, co.value_coef)),
                         scale(entropy, co.entropy_coef)),
                     inv);
    if (diag) {
        diag->policy_term = policy_term.item() * inv;
        diag->value_term = value_term.item() * inv;
        diag->entropy = entropy.item() * inv;
        double mv = 0, ma = 0;
        for (std::size_t t = 0; t < N; ++t) {
            mv += vbar[t];
            ma += batch.returns[t] - vbar[t];
        }
        diag->mean_value = mv / N;
        diag->mean_advantage = ma / N;
    }
    return j;
}

// Backward pass from the scalar objective; parameter grads accumulate for the
// caller's optimizer. Particle stop-gradients are the caller's choice via
// a2c_loss's detach flag.
inline void theta_gradient(const Tensor& j) { backward(j); }

}  // namespace svib
