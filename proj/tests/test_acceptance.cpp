// Acceptance suite: one test case per criterion, each emitting a single
// "ACCEPTANCE <n>: PASS/FAIL" line so the binary doubles as a checklist.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "fd_oracle.hpp"
#include "svib/oracle.hpp"
#include "svib/trainer.hpp"

using namespace svib;
namespace fs = std::filesystem;

namespace {

void report(int n, bool ok, const std::string& desc) {
    std::printf("ACCEPTANCE %d: %s - %s\n", n, ok ? "PASS" : "FAIL", desc.c_str());
    std::fflush(stdout);
    CHECK_MESSAGE(ok, "criterion ", n, ": ", desc);
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_param(Rng& rng, const Shape& shape, double lo = -1.0, double hi = 1.0) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::param(shape, v);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

fs::path fresh_dir(const std::string& tag) {
    fs::path d = fs::temp_directory_path() / ("svib_accept_" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

PairBatch gaussian_pairs(Rng& rng, std::size_t n, double rho) {
    PairBatch p;
    p.n = n;
    p.dx = p.dz = 1;
    p.x.resize(n);
    p.z.resize(n);
    const double c = std::sqrt(1.0 - rho * rho);
    for (std::size_t i = 0; i < n; ++i) {
        p.x[i] = rng.normal(0.0, 1.0);
        p.z[i] = rho * p.x[i] + c * rng.normal(0.0, 1.0);
    }
    return p;
}

RunConfig small_config(Variant v, std::uint64_t seed) {
    RunConfig c;
    c.variant = v;
    c.seed = seed;
    c.env.size = 4;
    c.env.horizon = 12;
    c.env.pad_dim = 9;
    c.encoder.latent_dim = 4;
    c.encoder.noise_dim = 2;
    c.encoder.hidden = {16};
    c.policy_value.hidden = {16};
    c.svgd.particles = 4;
    c.run.total_updates = 3;
    c.run.k_envs = 2;
    c.run.rollout_horizon = 4;
    c.probe.interval = 2;
    c.probe.steps = 8;
    c.probe.batch = 8;
    return c;
}

// Noisy-gridworld head-to-head protocol: d_x = 25 + 103 = 128, mixed so the
// distractor dimensions are not separable by coordinate.
RunConfig protocol_config(Variant v, std::uint64_t seed) {
    RunConfig c;
    c.variant = v;
    c.seed = seed;
    c.env.name = "gridworld";
    c.env.size = 5;
    c.env.horizon = 50;
    c.env.pad_dim = 103;
    c.env.mix = true;
    c.env.mix_seed = 12345;
    c.encoder.latent_dim = 8;
    c.encoder.noise_dim = 4;
    c.encoder.hidden = {64};
    c.policy_value.hidden = {64};
    c.svgd.beta = 0.001;
    c.svgd.particles = 8;
    c.probe.interval = 100;
    c.probe.steps = 256;
    c.probe.batch = 64;
    c.optim.lr = 0.0007;
    c.run.total_updates = 400;
    c.run.k_envs = 8;
    c.run.rollout_horizon = 5;
    return c;
}

struct HeadToHead {
    std::map<std::string, std::vector<RunResult>> by_variant;  // seeds 1..5 each
};

const HeadToHead& head_to_head() {
    static const HeadToHead h = [] {
        HeadToHead out;
        fs::path root = fresh_dir("head_to_head");
        for (Variant v : {Variant::SvibUniform, Variant::VanillaA2C, Variant::A2CNoise}) {
            auto& runs = out.by_variant[variant_name(v)];
            for (std::uint64_t seed = 1; seed <= 5; ++seed)
                runs.push_back(train(protocol_config(v, seed), root.string()));
        }
        return out;
    }();
    return h;
}

// unreached threshold counts as strictly worse than any reached one
double updates_score(const RunResult& r, std::size_t budget) {
    return r.updates_to_09 == static_cast<std::size_t>(-1)
               ? static_cast<double>(budget + 1)
               : static_cast<double>(r.updates_to_09);
}

}  // namespace

TEST_CASE("criterion 1: gradient correctness across ops and both network families") {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(1000 + seed);
        Tensor x = random_param(rng, {6});
        auto check_op = [&](auto op) {
            x.zero_grad();
            backward(sum(op(x)));
            std::vector<Tensor> params{x};
            auto fd = svib_test::fd_gradients(params, [&]() { return sum(op(x)).item(); });
            worst = std::max(worst, svib_test::max_rel_err(x.grad(), fd[0]));
        };
        check_op([](const Tensor& t) { return tanh(t); });
        check_op([](const Tensor& t) { return square(t); });
        check_op([](const Tensor& t) { return neg(t); });
        check_op([](const Tensor& t) { return exp(scale(t, 0.5)); });
        check_op([](const Tensor& t) { return mul(t, t); });
        check_op([](const Tensor& t) { return log(add(square(t), Tensor::scalar(1.0))); });
        check_op([](const Tensor& t) { return relu(add(t, Tensor::scalar(0.1))); });
        Tensor a = random_param(rng, {2, 3});
        Tensor w = random_param(rng, {3, 3}, -0.5, 0.5);
        auto mm = [&]() { return sum(square(matmul(log_softmax(a), w))); };
        a.zero_grad();
        w.zero_grad();
        backward(mm());
        std::vector<Tensor> mp{a, w};
        auto fd = svib_test::fd_gradients(mp, [&]() { return mm().item(); });
        worst = std::max(worst, svib_test::max_rel_err(a.grad(), fd[0]));
        worst = std::max(worst, svib_test::max_rel_err(w.grad(), fd[1]));
    }

    // both network families jointly, through the full A2C objective
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(2000 + seed);
        Encoder enc(EncoderConfig{.obs_dim = 10, .noise_dim = 2, .latent_dim = 3, .hidden = {8}},
                    rng);
        PolicyValue pv(PolicyValueConfig{.latent_dim = 3, .n_actions = 4, .hidden = {8}}, rng);
        const std::size_t N = 4, M = 2;
        RolloutBatch batch;
        batch.n_states = N;
        batch.obs_dim = 10;
        batch.obs.resize(N * 10);
        for (auto& v : batch.obs) v = rng.uniform(-1.0, 1.0);
        batch.actions.resize(N);
        batch.returns.resize(N);
        batch.rewards.assign(N, 0.0);
        batch.terminal.assign(N, 0);
        batch.truncated.assign(N, 0);
        for (std::size_t t = 0; t < N; ++t) {
            batch.actions[t] = t % 4;
            batch.returns[t] = rng.uniform(-1.0, 1.0);
        }
        batch.m_particles = M;
        RLCoefficients rl;
        const std::size_t dz = enc.config().latent_dim;
        auto encode = [&]() {
            Rng noise(3000 + seed);  // identical draw on every evaluation
            return enc.encode_batch(batch.obs, N, M, noise);
        };

        // the advantage baseline is a stop-gradient, so the FD oracle freezes
        // it at the unperturbed parameters
        std::vector<double> frozen_adv(N);
        {
            Tensor z0 = encode();
            for (std::size_t t = 0; t < N; ++t) {
                double vb = 0.0;
                for (std::size_t i = 0; i < M; ++i) {
                    std::vector<double> zr(z0.data().begin() + (t * M + i) * dz,
                                           z0.data().begin() + (t * M + i + 1) * dz);
                    vb += pv.policy_value(zr).second;
                }
                frozen_adv[t] = batch.returns[t] - vb / static_cast<double>(M);
            }
        }
        auto manual_loss = [&]() {
            Tensor z = encode();
            double total = 0.0;
            for (std::size_t t = 0; t < N; ++t)
                for (std::size_t i = 0; i < M; ++i) {
                    std::vector<double> zr(z.data().begin() + (t * M + i) * dz,
                                           z.data().begin() + (t * M + i + 1) * dz);
                    auto [probs, v] = pv.policy_value(zr);
                    double ent = 0.0;
                    for (double p : probs) ent -= p * std::log(p);
                    const double err = batch.returns[t] - v;
                    total += std::log(probs[batch.actions[t]]) * frozen_adv[t] -
                             rl.value_coef * err * err + rl.entropy_coef * ent;
                }
            return total / static_cast<double>(N * M);
        };

        std::vector<Tensor> params = enc.params();
        for (auto& p : pv.params()) params.push_back(p);
        for (auto p : params) p.zero_grad();
        RolloutBatch b = batch;
        b.particles = encode();
        backward(a2c_loss(b, pv, rl, nullptr, /*detach_particles=*/false));
        auto fd = svib_test::fd_gradients(params, manual_loss);
        for (std::size_t i = 0; i < params.size(); ++i)
            worst = std::max(worst, svib_test::max_rel_err(params[i].grad(), fd[i]));
    }

    const double secs = elapsed_s(t0);
    const bool ok = worst < 1e-4 && secs < 60.0;
    report(1, ok,
           "finite-difference gradients, 20 seeds, max rel err " + std::to_string(worst) + " in " +
               std::to_string(secs) + "s");
}

TEST_CASE("criterion 2: theorem 2 exact improvement and KL-sum identity") {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(20260823);
    bool ok = true;
    for (double beta : {0.001, 0.1, 1.0})
        for (std::size_t i = 0; i < 100; ++i) {
            auto rep = theorem2_check(random_instance(rng, 4, 8, beta));
            ok = ok && rep.improvement_ok && rep.identity_ok;
        }
    const double secs = elapsed_s(t0);
    ok = ok && secs < 10.0;
    report(2, ok, "100 instances per beta in {0.001, 0.1, 1}, " + std::to_string(secs) + "s");
}

TEST_CASE("criterion 3: theorem 1 inequality chain on random families") {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(31415);
    bool ok = true;
    for (std::size_t f = 0; f < 50; ++f) {
        std::vector<DiscreteIBInstance> family;
        for (std::size_t t = 0; t < 20; ++t) family.push_back(random_instance(rng, 4, 8, 0.001));
        ok = ok && theorem1_check(family, 0.001).chain_ok;
    }
    const double secs = elapsed_s(t0);
    ok = ok && secs < 10.0;
    report(3, ok, "50 families of 20 instances, " + std::to_string(secs) + "s");
}

TEST_CASE("criterion 4: target-distribution stationarity under perturbation") {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(27182);
    double worst_gap = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
        auto inst = random_instance(rng, 4, 8, 0.001);
        worst_gap = std::min(worst_gap, stationarity_check(inst, 100, 1e-3, rng));
    }
    const double secs = elapsed_s(t0);
    const bool ok = worst_gap >= -1e-6 && secs < 30.0;
    report(4, ok,
           "20 instances x 100 perturbations, worst normalized gap " + std::to_string(worst_gap) +
               ", " + std::to_string(secs) + "s");
}

TEST_CASE("criterion 5: SVGD sampler fidelity on a 1-D Gaussian") {
    const auto t0 = std::chrono::steady_clock::now();
    const double mu0 = 2.0, sigma0 = 0.8;
    std::vector<double> mean_errs, var_errs;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(80 + seed);
        ParticleMatrix p(200, 1);
        for (auto& v : p.v) v = rng.normal(0.0, 0.3);
        for (int t = 0; t < 500; ++t) {
            const double h = median_bandwidth(p);
            auto dir = svgd_direction(
                p,
                [&](const std::vector<double>& z) {
                    return std::vector<double>{-(z[0] - mu0) / (sigma0 * sigma0)};
                },
                h);
            for (std::size_t i = 0; i < p.m; ++i) p.row(i)[0] += 0.05 * dir.row(i)[0];
        }
        double mean = 0, var = 0;
        for (double v : p.v) mean += v;
        mean /= p.m;
        for (double v : p.v) var += (v - mean) * (v - mean);
        var /= p.m;
        mean_errs.push_back(std::abs(mean - mu0) / mu0);
        var_errs.push_back(std::abs(var - sigma0 * sigma0) / (sigma0 * sigma0));
    }

    ParticleMatrix single(1, 1);
    single.row(0)[0] = -3.0;
    for (int t = 0; t < 4000; ++t) {
        const double step = 0.5 / (1.0 + 0.01 * t);
        auto dir = svgd_direction(
            single, [](const std::vector<double>& z) { return std::vector<double>{-(z[0] - 1.7)}; },
            1.0);
        single.row(0)[0] += step * dir.row(0)[0];
    }
    const double mode_err = std::abs(single.row(0)[0] - 1.7);

    const double secs = elapsed_s(t0);
    const bool ok =
        median(mean_errs) < 0.05 && median(var_errs) < 0.10 && mode_err < 1e-3 && secs < 60.0;
    report(5, ok,
           "median mean err " + std::to_string(median(mean_errs)) + ", median var err " +
               std::to_string(median(var_errs)) + ", mode err " + std::to_string(mode_err));
}

TEST_CASE("criterion 6: MINE probe matches closed-form Gaussian MI") {
    const auto t0 = std::chrono::steady_clock::now();
    ProbeConfig cfg;  // n=64, 256 steps, lr 7e-4
    bool ok = true;
    std::string detail;
    for (double rho : {0.0, 0.5, 0.8}) {
        const double truth = -0.5 * std::log(1.0 - rho * rho);
        std::vector<double> estimates;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            Rng data_rng(900 + seed);
            auto pool = gaussian_pairs(data_rng, 4096, rho);
            Rng probe_rng(700 + seed);
            StatisticsNet net(StatNetConfig{.obs_dim = 1, .latent_dim = 1, .hidden = {128}},
                              probe_rng);
            estimates.push_back(train_probe(net, cfg, pool, probe_rng).estimate);
        }
        const double med = median(estimates);
        ok = ok && std::abs(med - truth) < 0.05;
        detail += " rho " + std::to_string(rho) + ": " + std::to_string(med) + " vs " +
                  std::to_string(truth) + ";";
    }
    const double secs = elapsed_s(t0);
    ok = ok && secs < 120.0;
    report(6, ok, "median of 5 seeds within 0.05 nats;" + detail);
}

TEST_CASE("criterion 7: svib_uniform M=1 reduces to backprop of J/beta") {
    auto cfg = small_config(Variant::SvibUniform, 21);
    cfg.svgd.particles = 1;
    cfg.svgd.beta = 0.01;
    cfg.optim.plain_sgd = true;
    const double lr = 1e-3;
    cfg.optim.lr = lr;

    Trainer a(cfg), b(cfg);
    auto batch_a = a.rollout();
    auto batch_b = b.rollout();
    REQUIRE(batch_a.obs == batch_b.obs);

    auto flatten = [](const NamedParams& params) {
        std::vector<double> flat;
        for (const auto& [_, p] : params) flat.insert(flat.end(), p.data().begin(), p.data().end());
        return flat;
    };
    auto phi_before = flatten(a.encoder().named_params());
    a.train_step(batch_a);
    auto phi_after = flatten(a.encoder().named_params());

    Tensor particles = b.draw_particles(batch_b, 1, false);
    RolloutBatch rb = batch_b;
    rb.m_particles = 1;
    rb.particles = particles;
    for (auto p : b.encoder().params()) p.zero_grad();
    for (auto p : b.policy_value().params()) p.zero_grad();
    backward(a2c_loss(rb, b.policy_value(), cfg.rl, nullptr, /*detach_particles=*/false));

    std::size_t k = 0;
    double max_rel = 0.0;
    for (const auto& [_, p] : b.encoder().named_params())
        for (std::size_t i = 0; i < p.data().size(); ++i, ++k) {
            const double grad_update = (phi_after[k] - phi_before[k]) / lr;
            const double ref = p.grad()[i] / cfg.svgd.beta;
            const double denom = std::max({std::abs(ref), std::abs(grad_update), 1e-8});
            max_rel = std::max(max_rel, std::abs(grad_update - ref) / denom);
        }
    report(7, max_rel < 1e-6, "frozen-batch phi update rel err " + std::to_string(max_rel));
}

TEST_CASE("criterion 8: sample-efficiency direction on the noisy gridworld") {
    const auto& h = head_to_head();
    const std::size_t budget = 400;
    std::map<std::string, double> med;
    for (const auto& [variant, runs] : h.by_variant) {
        std::vector<double> scores;
        for (const auto& r : runs) scores.push_back(updates_score(r, budget));
        med[variant] = median(scores);
    }
    const bool ok = med["svib_uniform"] <= med["vanilla_a2c"] &&
                    med["svib_uniform"] <= med["a2c_noise"];
    report(8, ok,
           "median updates to mean return 0.9: svib_uniform " +
               std::to_string(med["svib_uniform"]) + ", vanilla_a2c " +
               std::to_string(med["vanilla_a2c"]) + ", a2c_noise " +
               std::to_string(med["a2c_noise"]));
}

TEST_CASE("criterion 9: extraction then compression in the MI traces") {
    const auto& h = head_to_head();
    const auto& svib = h.by_variant.at("svib_uniform");
    const auto& vanilla = h.by_variant.at("vanilla_a2c");

    bool peaks_before_final = true;
    std::vector<double> ratios, svib_peaks, vanilla_peaks;
    for (const auto& r : svib) {
        auto t = ec_trace(r.mi_records);
        peaks_before_final =
            peaks_before_final && t.peak_step < r.mi_records.back().update_step;
        ratios.push_back(t.final_value / t.peak_value);
        svib_peaks.push_back(static_cast<double>(t.peak_step));
    }
    for (const auto& r : vanilla)
        vanilla_peaks.push_back(static_cast<double>(ec_trace(r.mi_records).peak_step));

    const double ratio_med = median(ratios);
    const bool ok = peaks_before_final && ratio_med <= 0.8 &&
                    median(vanilla_peaks) >= median(svib_peaks);
    report(9, ok,
           "svib median final/peak " + std::to_string(ratio_med) + ", median peak steps svib " +
               std::to_string(median(svib_peaks)) + " vs vanilla " +
               std::to_string(median(vanilla_peaks)));
}

TEST_CASE("criterion 10: same-seed training runs are byte-identical") {
    auto cfg = small_config(Variant::SvibGaussian, 14);
    fs::path r1 = fresh_dir("det1"), r2 = fresh_dir("det2");
    auto a = train(cfg, r1.string());
    auto b = train(cfg, r2.string());
    const bool ok = slurp(fs::path(a.run_dir) / "metrics.jsonl") ==
                    slurp(fs::path(b.run_dir) / "metrics.jsonl");
    report(10, ok, "two invocations, identical metrics.jsonl bytes");
}

TEST_CASE("criterion 11: MINE-direct smoke on a frozen batch") {
    Rng rng(7);
    Encoder enc(EncoderConfig{.obs_dim = 6, .noise_dim = 2, .latent_dim = 3, .hidden = {8}}, rng);
    Mlp j_model({3, 8, 1}, Activation::Tanh, rng);
    StatisticsNet net(StatNetConfig{.obs_dim = 6, .latent_dim = 3, .hidden = {16}}, rng);
    const std::size_t n = 8;
    std::vector<double> obs(n * 6);
    for (auto& v : obs) v = rng.normal(0.0, 1.0);

    auto flatten = [](std::vector<Tensor> params) {
        std::vector<double> flat;
        for (auto& p : params) flat.insert(flat.end(), p.data().begin(), p.data().end());
        return flat;
    };
    auto before_eta = flatten(net.params());
    const double val = mine_direct_update(enc, j_model, net, obs, n, 0.1, 1e-3, rng);
    const bool eta_moved = flatten(net.params()) != before_eta;

    // independent re-evaluation of the objective formula on a fresh frozen batch
    Rng rng2(6);
    StatisticsNet net2(StatNetConfig{.obs_dim = 3, .latent_dim = 2, .hidden = {8}}, rng2);
    const std::size_t m = 10;
    std::vector<double> xs(m * 3), zs(m * 2), zshuf(m * 2), jm(m);
    for (auto& v : xs) v = rng2.uniform(-1.0, 1.0);
    for (auto& v : zs) v = rng2.uniform(-1.0, 1.0);
    auto perm = shuffle_permutation(m, rng2);
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(&zs[perm[i] * 2], 2, &zshuf[i * 2]);
        jm[i] = rng2.uniform(-1.0, 1.0);
    }
    const double beta = 0.05;
    Tensor tj = net2.forward(Tensor::constant({m, 3}, xs), Tensor::constant({m, 2}, zs));
    Tensor tm = net2.forward(Tensor::constant({m, 3}, xs), Tensor::constant({m, 2}, zshuf));
    const double got =
        mine_direct_objective(tj, tm, Tensor::constant({m, 1}, jm), beta).item();
    double mean_tj = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean_tj += tj.data()[i];
    mean_tj /= static_cast<double>(m);
    double mx = -1e300;
    for (std::size_t i = 0; i < m; ++i) mx = std::max(mx, tm.data()[i] + jm[i] / beta);
    double se = 0.0;
    for (std::size_t i = 0; i < m; ++i) se += std::exp(tm.data()[i] + jm[i] / beta - mx);
    const double want = -beta * mean_tj + beta * (mx + std::log(se / static_cast<double>(m)));

    const bool ok = std::isfinite(val) && eta_moved && std::abs(got - want) < 1e-10;
    report(11, ok,
           "update finite and moves eta; objective matches re-evaluation to 1e-10 (diff " +
               std::to_string(std::abs(got - want)) + ")");
}
