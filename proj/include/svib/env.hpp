#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "svib/common.hpp"

namespace svib {

struct StepResult {
    std::vector<double> obs;
    double reward = 0.0;
    bool done = false;
    // True when the episode ended by horizon only; bootstrapping may still
    // use the value of the final state.
    bool truncated = false;
};

class Env {
public:
    virtual ~Env() = default;
    virtual std::vector<double> reset(std::uint64_t seed) = 0;
    virtual StepResult step(std::size_t action) = 0;
    virtual std::size_t obs_dim() const = 0;
    virtual std::size_t action_count() const = 0;
    virtual std::unique_ptr<Env> clone_fresh() const = 0;
};

// Deterministic gridworld: start at (0,0), goal at the opposite corner,
// reward 1 on reaching the goal, 0 otherwise. Moves into the border are
// blocked. Episode returns are bounded by 1.
class Gridworld final : public Env {
public:
    explicit Gridworld(std::size_t size = 5, std::size_t horizon = 50)
        : size_(size), horizon_(horizon) {}

    std::vector<double> reset(std::uint64_t seed) override {
        (void)seed;  // fixed start state
        row_ = 0;
        col_ = 0;
        steps_ = 0;
        done_ = false;
        return observe();
    }

    StepResult step(std::size_t action) override {
        if (done_) throw ContractError("step after episode end; call reset");
        if (action >= 4) throw ContractError("gridworld action out of range: " + std::to_string(action));
        long r = static_cast<long>(row_), c = static_cast<long>(col_);
        switch (action) {
            case 0: r -= 1; break;  // up
            case 1: r += 1; break;  // down
            case 2: c -= 1; break;  // left
            case 3: c += 1; break;  // right
        }
        if (r >= 0 && r < static_cast<long>(size_) && c >= 0 && c < static_cast<long>(size_)) {
            row_ = static_cast<std::size_t>(r);
            col_ = static_cast<std::size_t>(c);
        }
        ++steps_;
        StepResult res;
        if (row_ == size_ - 1 && col_ == size_ - 1) {
            res.reward = 1.0;
            res.done = true;
        } else if (steps_ >= horizon_) {
            res.done = true;
            res.truncated = true;
        }
        done_ = res.done;
        res.obs = observe();
        return res;
    }

    std::size_t obs_dim() const override { return size_ * size_; }
    std::size_t action_count() const override { return 4; }
    std::unique_ptr<Env> clone_fresh() const override {
        return std::make_unique<Gridworld>(size_, horizon_);
    }

    std::size_t size() const { return size_; }
    std::size_t horizon() const { return horizon_; }

private:
    std::vector<double> observe() const {
        std::vector<double> obs(size_ * size_, 0.0);
        obs[row_ * size_ + col_] = 1.0;
        return obs;
    }

    std::size_t size_, horizon_;
    std::size_t row_ = 0, col_ = 0, steps_ = 0;
    bool done_ = false;
};

// 1-D pole balance, discretized to push-left / push-right. Reward is
// 1/horizon per surviving step, so episode returns are bounded by 1.
class PoleBalance final : public Env {
public:
    explicit PoleBalance(std::size_t horizon = 200) : horizon_(horizon) {}

    std::vector<double> reset(std::uint64_t seed) override {
        Rng rng(seed ^ 0x706f6c65ULL);
        angle_ = rng.uniform(-0.05, 0.05);
        vel_ = rng.uniform(-0.02, 0.02);
        steps_ = 0;
        done_ = false;
        return observe();
    }

    StepResult step(std::size_t action) override {
        if (done_) throw ContractError("step after episode end; call reset");
        if (action >= 2) throw ContractError("pole action out of range: " + std::to_string(action));
        const double force = action == 0 ? -1.0 : 1.0;
        const double dt = 0.02, gravity = 9.8, gain = 10.0;
        vel_ += (gravity * std::sin(angle_) + gain * force) * dt;
        angle_ += vel_ * dt;
        ++steps_;
        StepResult res;
        if (std::abs(angle_) > 0.5) {
            res.done = true;
        } else {
            res.reward = 1.0 / static_cast<double>(horizon_);
            if (steps_ >= horizon_) {
                res.done = true;
                res.truncated = true;
            }
        }
        done_ = res.done;
        res.obs = observe();
        return res;
    }

    std::size_t obs_dim() const override { return 2; }
    std::size_t action_count() const override { return 2; }
    std::unique_ptr<Env> clone_fresh() const override { return std::make_unique<PoleBalance>(horizon_); }

private:
    std::vector<double> observe() const { return {angle_, vel_}; }

    std::size_t horizon_;
    double angle_ = 0.0, vel_ = 0.0;
    std::size_t steps_ = 0;
    bool done_ = false;
};

struct NoisyObsConfig {
    std::size_t pad_dim = 0;
    double noise_scale = 1.0;
    bool mix = false;           // fixed random orthogonal mixing of all coordinates
    std::uint64_t mix_seed = 0; // mixing matrix is part of the task definition
};

// Pads the base observation with i.i.d. Gaussian noise features, resampled
// every step, optionally mixed by a fixed orthogonal matrix. The informative
// subspace stays recoverable: the mixing is orthogonal, so its transpose
// inverts it.
class NoisyObsWrapper final : public Env {
public:
    NoisyObsWrapper(std::unique_ptr<Env> inner, NoisyObsConfig cfg)
        : inner_(std::move(inner)), cfg_(cfg), noise_rng_(0) {
        dim_ = inner_->obs_dim() + cfg_.pad_dim;
        if (cfg_.mix) build_mixing();
    }

    std::vector<double> reset(std::uint64_t seed) override {
        noise_rng_ = Rng(splitmix64(seed ^ 0x6e6f697379ULL));
        return wrap(inner_->reset(seed));
    }

    StepResult step(std::size_t action) override {
        StepResult res = inner_->step(action);
        res.obs = wrap(res.obs);
        return res;
    }

    std::size_t obs_dim() const override { return dim_; }
    std::size_t action_count() const override { return inner_->action_count(); }
    std::unique_ptr<Env> clone_fresh() const override {
        return std::make_unique<NoisyObsWrapper>(inner_->clone_fresh(), cfg_);
    }

    // Recovers the base observation from a wrapped one (oracle decoder).
    std::vector<double> decode(const std::vector<double>& obs) const {
        std::vector<double> full = cfg_.mix ? apply(mix_t_, obs) : obs;
        full.resize(inner_->obs_dim());
        return full;
    }

    const Env& inner() const { return *inner_; }

private:
    std::vector<double> wrap(const std::vector<double>& base) {
        std::vector<double> obs(dim_);
        std::copy(base.begin(), base.end(), obs.begin());
        for (std::size_t i = base.size(); i < dim_; ++i)
            obs[i] = noise_rng_.normal(0.0, cfg_.noise_scale);
        return cfg_.mix ? apply(mix_, obs) : obs;
    }

    std::vector<double> apply(const std::vector<double>& mat, const std::vector<double>& v) const {
        std::vector<double> out(dim_, 0.0);
        for (std::size_t i = 0; i < dim_; ++i)
            for (std::size_t j = 0; j < dim_; ++j) out[i] += mat[i * dim_ + j] * v[j];
        return out;
    }

    // Random orthogonal matrix by Gram-Schmidt on a seeded Gaussian matrix.
    void build_mixing() {
        Rng rng(splitmix64(cfg_.mix_seed ^ 0x6d6978ULL));
        mix_.assign(dim_ * dim_, 0.0);
        for (auto& v : mix_) v = rng.normal();
        for (std::size_t i = 0; i < dim_; ++i) {
            double* row = &mix_[i * dim_];
            for (std::size_t k = 0; k < i; ++k) {
                const double* prev = &mix_[k * dim_];
                double dot = 0;
                for (std::size_t j = 0; j < dim_; ++j) dot += row[j] * prev[j];
                for (std::size_t j = 0; j < dim_; ++j) row[j] -= dot * prev[j];
            }
            double norm = 0;
            for (std::size_t j = 0; j < dim_; ++j) norm += row[j] * row[j];
            norm = std::sqrt(norm);
            for (std::size_t j = 0; j < dim_; ++j) row[j] /= norm;
        }
        mix_t_.assign(dim_ * dim_, 0.0);
        for (std::size_t i = 0; i < dim_; ++i)
            for (std::size_t j = 0; j < dim_; ++j) mix_t_[j * dim_ + i] = mix_[i * dim_ + j];
    }

    std::unique_ptr<Env> inner_;
    NoisyObsConfig cfg_;
    Rng noise_rng_;
    std::size_t dim_ = 0;
    std::vector<double> mix_, mix_t_;
};

}  // namespace svib
