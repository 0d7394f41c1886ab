#pragma once

#include <algorithm>
#include <cmath>
#include <ctime>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "svib/checkpoint.hpp"
#include "svib/config.hpp"
#include "svib/env.hpp"
#include "svib/metrics.hpp"
#include "svib/mine.hpp"
#include "svib/nets.hpp"
#include "svib/optim.hpp"
#include "svib/rl.hpp"
#include "svib/svgd.hpp"

namespace svib {

inline std::unique_ptr<Env> build_env(const EnvSpec& spec) {
    std::unique_ptr<Env> base;
    if (spec.name == "gridworld") base = std::make_unique<Gridworld>(spec.size, spec.horizon);
    else if (spec.name == "pole") base = std::make_unique<PoleBalance>(spec.horizon);
    else throw ContractError("unknown environment '" + spec.name + "'");
    if (spec.pad_dim == 0) return base;
    NoisyObsConfig nc;
    nc.pad_dim = spec.pad_dim;
    nc.noise_scale = spec.noise_scale;
    nc.mix = spec.mix;
    nc.mix_seed = spec.mix_seed;
    return std::make_unique<NoisyObsWrapper>(std::move(base), nc);
}

struct TrainStepDiagnostics {
    A2CDiagnostics a2c;
    double objective = 0.0;
    double phi_grad_norm = 0.0;
    double theta_grad_norm = 0.0;
    double zeta_value = 0.0;
};

class Trainer {
public:
    explicit Trainer(const RunConfig& cfg) : cfg_(cfg) {
        auto probe_env = build_env(cfg.env);
        obs_dim_ = probe_env->obs_dim();
        n_actions_ = probe_env->action_count();

        Rng base(cfg.seed);
        init_rng_ = base.split(1);
        act_rng_ = base.split(2);
        noise_rng_ = base.split(3);

        EncoderConfig ec = cfg.encoder;
        ec.obs_dim = obs_dim_;
        encoder_ = Encoder(ec, init_rng_);
        PolicyValueConfig pc = cfg.policy_value;
        pc.latent_dim = ec.latent_dim;
        pc.n_actions = n_actions_;
        pv_ = PolicyValue(pc, init_rng_);

        opt_phi_ = Optimizer(encoder_.params(), cfg.optim);
        opt_theta_ = Optimizer(pv_.params(), cfg.optim);

        envs_.resize(cfg.run.k_envs);
        cur_obs_.resize(cfg.run.k_envs);
        episode_return_.assign(cfg.run.k_envs, 0.0);
        episode_seed_.assign(cfg.run.k_envs, 0);
        for (std::size_t e = 0; e < cfg.run.k_envs; ++e) {
            envs_[e] = build_env(cfg.env);
            cur_obs_[e] = envs_[e]->reset(episode_seed(e));
        }
    }

    const Encoder& encoder() const { return encoder_; }
    Encoder& encoder() { return encoder_; }
    const PolicyValue& policy_value() const { return pv_; }
    std::size_t update_count() const { return update_; }
    std::size_t obs_dim() const { return obs_dim_; }

    double mean_recent_return() const {
        if (recent_returns_.empty()) return 0.0;
        double s = 0.0;
        for (double r : recent_returns_) s += r;
        return s / static_cast<double>(recent_returns_.size());
    }
    std::size_t episodes_completed() const { return episodes_completed_; }

    // k_envs x horizon transitions; one fresh particle per decision.
    RolloutBatch rollout() {
        const std::size_t K = cfg_.run.k_envs, H = cfg_.run.rollout_horizon;
        const bool zero_noise = cfg_.variant == Variant::VanillaA2C;
        const std::size_t N = K * H;
        RolloutBatch batch;
        batch.n_states = N;
        batch.obs_dim = obs_dim_;
        batch.obs.resize(N * obs_dim_);
        batch.actions.resize(N);
        batch.rewards.resize(N);
        batch.terminal.resize(N);
        batch.truncated.resize(N);
        batch.returns.resize(N);
        batch.m_particles = 1;
        std::vector<double> acting_z(N * encoder_.config().latent_dim);

        for (std::size_t e = 0; e < K; ++e) {
            std::vector<double> values(H + 1), trunc_values(H, 0.0);
            std::vector<double> rewards(H);
            std::vector<unsigned char> terminal(H), truncated(H);
            for (std::size_t t = 0; t < H; ++t) {
                const std::size_t idx = e * H + t;
                std::copy(cur_obs_[e].begin(), cur_obs_[e].end(), &batch.obs[idx * obs_dim_]);
                Tensor z = encoder_.encode_particles(cur_obs_[e], 1, noise_rng_, zero_noise);
                std::copy(z.data().begin(), z.data().end(),
                          &acting_z[idx * encoder_.config().latent_dim]);
                auto [probs, v] = pv_.policy_value(z.data());
                values[t] = v;
                const std::size_t a = sample_action(probs);
                StepResult res = envs_[e]->step(a);
                batch.actions[idx] = a;
                batch.rewards[idx] = res.reward;
                rewards[t] = res.reward;
                terminal[t] = res.done && !res.truncated;
                truncated[t] = res.truncated;
                batch.terminal[idx] = terminal[t];
                batch.truncated[idx] = truncated[t];
                episode_return_[e] += res.reward;
                if (res.truncated) trunc_values[t] = state_value(res.obs, zero_noise);
                if (res.done || res.truncated) {
                    record_episode(e);
                    cur_obs_[e] = envs_[e]->reset(episode_seed(e));
                } else {
                    cur_obs_[e] = res.obs;
                }
            }
            values[H] = state_value(cur_obs_[e], zero_noise);
            auto ret = nstep_returns(rewards, terminal, truncated, values, trunc_values,
                                     cfg_.rl.gamma, cfg_.rl.n_step);
            std::copy(ret.begin(), ret.end(), &batch.returns[e * H]);
        }
        batch.particles =
            Tensor::constant({N, encoder_.config().latent_dim}, std::move(acting_z));
        remember_states(batch);
        return batch;
    }

    // Particle draw consuming the trainer's noise stream; train_step uses
    // this, and tests use it to replay the exact draw of a parallel trainer.
    Tensor draw_particles(const RolloutBatch& batch, std::size_t m, bool zero_noise) {
        return encoder_.encode_batch(batch.obs, batch.n_states, m, noise_rng_, zero_noise);
    }

    // One parameter update from a rollout batch. phi and theta gradients are
    // both evaluated at the pre-update snapshot before either moves.
    TrainStepDiagnostics train_step(const RolloutBatch& batch) {
        TrainStepDiagnostics diag;
        const bool svib =
            cfg_.variant == Variant::SvibUniform || cfg_.variant == Variant::SvibGaussian;
        opt_phi_.zero_grad();
        opt_theta_.zero_grad();
        if (!svib) {
            const bool zero_noise = cfg_.variant == Variant::VanillaA2C;
            RolloutBatch b = batch;
            b.m_particles = 1;
            b.particles = draw_particles(batch, 1, zero_noise);
            Tensor j = a2c_loss(b, pv_, cfg_.rl, &diag.a2c, /*detach_particles=*/false);
            diag.objective = j.item();
            backward(j);
        } else {
            svgd_update_gradients(batch, diag);
        }
        check_finite_gradients();
        diag.phi_grad_norm = grad_norm(encoder_.params());
        diag.theta_grad_norm = grad_norm(pv_.params());
        opt_phi_.ascend();
        opt_theta_.ascend();
        ++update_;
        return diag;
    }

    // Recent (obs, fresh z) pool for the periodic MI probe.
    MIRecord probe_mi() {
        if (state_pool_.size() < 2 * obs_dim_) throw ContractError("MI probe before any rollout");
        const std::size_t n = state_pool_.size() / obs_dim_;
        Rng probe_rng = Rng(cfg_.seed).split(4).split(update_);
        const bool zero_noise = cfg_.variant == Variant::VanillaA2C;
        std::vector<double> obs(state_pool_.begin(), state_pool_.end());
        Tensor z = encoder_.encode_batch(obs, n, 1, probe_rng, zero_noise);
        PairBatch pool;
        pool.n = n;
        pool.dx = obs_dim_;
        pool.dz = encoder_.config().latent_dim;
        pool.x = std::move(obs);
        pool.z = z.data();
        StatisticsNet net(StatNetConfig{.obs_dim = obs_dim_,
                                        .latent_dim = encoder_.config().latent_dim,
                                        .hidden = {64}},
                          probe_rng);
        return train_probe(net, cfg_.probe, pool, probe_rng, update_);
    }

    NamedParams named_params() const {
        NamedParams out = encoder_.named_params();
        for (auto& p : pv_.named_params()) out.push_back(p);
        return out;
    }

private:
    std::uint64_t episode_seed(std::size_t env_idx) {
        return splitmix64(cfg_.seed ^ splitmix64(1000 + env_idx) ^
                          splitmix64(0xabcdULL + episode_seed_[env_idx]++));
    }

    void record_episode(std::size_t e) {
        recent_returns_.push_back(episode_return_[e]);
        if (recent_returns_.size() > 20) recent_returns_.pop_front();
        episode_return_[e] = 0.0;
        ++episodes_completed_;
    }

    std::size_t sample_action(const std::vector<double>& probs) {
        const double u = act_rng_.uniform();
        double acc = 0.0;
        for (std::size_t a = 0; a < probs.size(); ++a) {
            acc += probs[a];
            if (u < acc) return a;
        }
        return probs.size() - 1;
    }

    double state_value(const std::vector<double>& obs, bool zero_noise) {
        Tensor z = encoder_.encode_particles(obs, 1, noise_rng_, zero_noise);
        return pv_.policy_value(z.data()).second;
    }

    void remember_states(const RolloutBatch& batch) {
        state_pool_.insert(state_pool_.end(), batch.obs.begin(), batch.obs.end());
        const std::size_t cap = 512 * obs_dim_;
        if (state_pool_.size() > cap)
            state_pool_.erase(state_pool_.begin(),
                              state_pool_.begin() + (state_pool_.size() - cap));
    }

    // SVGD phi-update (Eq. 17-18) plus the theta policy-gradient (Eq. 19),
    // both from the same particle draw.
    void svgd_update_gradients(const RolloutBatch& batch, TrainStepDiagnostics& diag) {
        const std::size_t N = batch.n_states, M = cfg_.svgd.particles;
        const std::size_t dz = encoder_.config().latent_dim;
        Tensor particles = draw_particles(batch, M, false);

        // per-particle d J / d Z via a leaf copy of the particle values
        Tensor z_leaf = Tensor::param(particles.shape(), particles.data());
        RolloutBatch b = batch;
        b.m_particles = M;
        b.particles = z_leaf;
        Tensor j = a2c_loss(b, pv_, cfg_.rl, &diag.a2c, /*detach_particles=*/false);
        diag.objective = j.item();
        backward(j);
        std::vector<double> grad_j(z_leaf.grad());
        const double unmean = static_cast<double>(N * M);  // a2c_loss divides by N*M
        for (auto& g : grad_j) g *= unmean;
        opt_theta_.zero_grad();  // theta grads from this pass are discarded

        ParticleMatrix all(N * M, dz);
        std::copy(particles.data().begin(), particles.data().end(), all.v.begin());

        std::vector<double> prior_score(N * M * dz, 0.0);
        if (cfg_.variant == Variant::SvibGaussian) {
            PriorModel prior = PriorModel::batch_gaussian(all);
            for (std::size_t i = 0; i < N * M; ++i) {
                std::vector<double> zrow(all.row(i), all.row(i) + dz);
                auto g = prior.log_grad(zrow);
                std::copy(g.begin(), g.end(), &prior_score[i * dz]);
            }
        }

        double norm_j = 0.0, norm_u = 0.0;
        const double inv_beta = 1.0 / cfg_.svgd.beta;
        for (std::size_t i = 0; i < grad_j.size(); ++i) {
            norm_j += grad_j[i] * inv_beta * grad_j[i] * inv_beta;
            norm_u += prior_score[i] * prior_score[i];
        }
        const double z_coef =
            zeta_from_norms(std::sqrt(norm_j), std::sqrt(norm_u), cfg_.svgd.zeta_scale);
        diag.zeta_value = z_coef;

        ParticleMatrix scores(N * M, dz);
        for (std::size_t i = 0; i < grad_j.size(); ++i)
            scores.v[i] = grad_j[i] * inv_beta + z_coef * prior_score[i];

        ParticleMatrix directions(N * M, dz);
        for (std::size_t t = 0; t < N; ++t) {
            if (M == 1) {
                std::copy(scores.row(t), scores.row(t) + dz, directions.row(t));
                continue;
            }
            ParticleMatrix group(M, dz), gscores(M, dz);
            std::copy(all.row(t * M), all.row(t * M) + M * dz, group.v.begin());
            std::copy(scores.row(t * M), scores.row(t * M) + M * dz, gscores.v.begin());
            const double h = median_bandwidth(group);
            ParticleMatrix dir = svgd_direction(group, gscores, h);
            std::copy(dir.v.begin(), dir.v.end(), directions.row(t * M));
        }

        phi_gradient(particles, directions);  // encoder grads (Eq. 18)

        // theta step from the same snapshot, particles stop-gradiented
        RolloutBatch bt = batch;
        bt.m_particles = M;
        bt.particles = particles;
        Tensor jt = a2c_loss(bt, pv_, cfg_.rl, nullptr, /*detach_particles=*/true);
        backward(jt);
    }

    static double grad_norm(const std::vector<Tensor>& params) {
        double s = 0.0;
        for (const auto& p : params)
            if (p.has_grad())
                for (double g : p.grad()) s += g * g;
        return std::sqrt(s);
    }

    void check_finite_gradients() const {
        for (const auto& [name, p] : named_params()) {
            if (!p.has_grad()) continue;
            for (double g : p.grad())
                if (!std::isfinite(g))
                    throw NumericDomainError("non-finite gradient in '" + name +
                                             "' at update " + std::to_string(update_));
        }
    }

    RunConfig cfg_;
    std::size_t obs_dim_ = 0, n_actions_ = 0;
    Rng init_rng_{0}, act_rng_{0}, noise_rng_{0};
    Encoder encoder_;
    PolicyValue pv_;
    Optimizer opt_phi_{{}, {}}, opt_theta_{{}, {}};
    std::vector<std::unique_ptr<Env>> envs_;
    std::vector<std::vector<double>> cur_obs_;
    std::vector<double> episode_return_;
    std::vector<std::uint64_t> episode_seed_;
    std::deque<double> recent_returns_;
    std::size_t episodes_completed_ = 0;
    std::size_t update_ = 0;
    std::vector<double> state_pool_;
};

struct RunResult {
    std::string run_dir;
    std::vector<MIRecord> mi_records;
    double final_mean_return = 0.0;
    // first update whose windowed mean return reached 0.9; SIZE_MAX if never
    std::size_t updates_to_09 = static_cast<std::size_t>(-1);
};

inline void save_trainer_checkpoint(const Trainer& t, const std::string& path) {
    save_checkpoint(t.named_params(), path);
}

// Full Algorithm-1 loop with artifacts under <runs_root>/<config-hash>/<seed>/.
inline RunResult train(const RunConfig& cfg, const std::string& runs_root) {
    namespace fs = std::filesystem;
    RunResult result;
    const fs::path run_dir = fs::path(runs_root) / config_hash(cfg) / std::to_string(cfg.seed);
    fs::create_directories(run_dir / "checkpoints");
    result.run_dir = run_dir.string();

    Trainer trainer(cfg);

    Json manifest;
    manifest["config_hash"] = config_hash(cfg);
    manifest["seed"] = cfg.seed;
    manifest["variant"] = variant_name(cfg.variant);
    manifest["code_version"] = "0.1.0";
    manifest["created_unix"] = static_cast<std::int64_t>(std::time(nullptr));
    manifest["config"] = config_to_json(cfg);
    {
        std::ofstream mf(run_dir / "manifest.json");
        if (!mf) throw ContractError("cannot write manifest: " + (run_dir / "manifest.json").string());
        mf << manifest.dump(2) << '\n';
    }

    save_trainer_checkpoint(trainer, (run_dir / "checkpoints" / "initial.json").string());
    MetricsWriter metrics((run_dir / "metrics.jsonl").string());

    for (std::size_t u = 0; u < cfg.run.total_updates; ++u) {
        RolloutBatch batch = trainer.rollout();
        TrainStepDiagnostics diag = trainer.train_step(batch);

        MetricsRecord rec;
        rec.record_type = "train";
        rec.update = trainer.update_count();
        rec.seed = cfg.seed;
        rec.variant = variant_name(cfg.variant);
        rec.fields["mean_return"] = trainer.mean_recent_return();
        rec.fields["episodes_completed"] = static_cast<double>(trainer.episodes_completed());
        rec.fields["objective"] = diag.objective;
        rec.fields["policy_term"] = diag.a2c.policy_term;
        rec.fields["value_term"] = diag.a2c.value_term;
        rec.fields["entropy"] = diag.a2c.entropy;
        rec.fields["mean_value"] = diag.a2c.mean_value;
        rec.fields["phi_grad_norm"] = diag.phi_grad_norm;
        rec.fields["theta_grad_norm"] = diag.theta_grad_norm;
        rec.fields["zeta"] = diag.zeta_value;
        metrics.append(rec);

        if (result.updates_to_09 == static_cast<std::size_t>(-1) &&
            trainer.episodes_completed() >= 20 && trainer.mean_recent_return() >= 0.9)
            result.updates_to_09 = trainer.update_count();

        if (trainer.update_count() % cfg.probe.interval == 0) {
            MIRecord mi = trainer.probe_mi();
            result.mi_records.push_back(mi);
            MetricsRecord mrec;
            mrec.record_type = "mi_probe";
            mrec.update = mi.update_step;
            mrec.seed = cfg.seed;
            mrec.variant = variant_name(cfg.variant);
            mrec.fields["mi_nats"] = mi.estimate;
            mrec.fields["probe_steps"] = static_cast<double>(mi.probe_steps);
            mrec.fields["probe_batch"] = static_cast<double>(mi.batch);
            metrics.append(mrec);
        }

        if (cfg.run.checkpoint_every > 0 && trainer.update_count() % cfg.run.checkpoint_every == 0)
            save_trainer_checkpoint(trainer,
                                    (run_dir / "checkpoints" /
                                     ("step_" + std::to_string(trainer.update_count()) + ".json"))
                                        .string());
    }

    save_trainer_checkpoint(trainer, (run_dir / "checkpoints" / "final.json").string());
    result.final_mean_return = trainer.mean_recent_return();
    return result;
}

}  // namespace svib
