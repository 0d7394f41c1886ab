#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "svib/mine.hpp"
#include "svib/oracle.hpp"

namespace svib {

struct VerifyCounts {
    std::size_t theorem2_instances = 100;  // per beta in {0.001, 0.1, 1}
    std::size_t theorem1_families = 50;
    std::size_t family_size = 20;
    std::size_t stationarity_instances = 20;
    std::size_t stationarity_perturbations = 100;
    std::size_t mi_seeds = 5;
    bool inject_fault = false;  // off-by-beta target, must fail the A.3 identity
};

// Theorem/identity sweeps plus the closed-form MINE probes; the pass flag is
// the conjunction of every instance check.
inline nlohmann::json verify_oracle(std::uint64_t sweep_seed, const VerifyCounts& counts,
                                    bool* all_pass_out = nullptr) {
    nlohmann::json report;
    report["sweep_seed"] = sweep_seed;
    bool all_pass = true;
    std::size_t total_checks = 0;
    Rng rng(sweep_seed);

    {
        nlohmann::json sec;
        std::size_t failures = 0;
        std::vector<nlohmann::json> failing;
        for (double beta : {0.001, 0.1, 1.0}) {
            for (std::size_t i = 0; i < counts.theorem2_instances; ++i) {
                auto inst = random_instance(rng, 4, 8, beta);
                bool ok;
                if (!counts.inject_fault) {
                    auto rep = theorem2_check(inst);
                    ok = rep.improvement_ok && rep.identity_ok;
                } else {
                    // faulty target: exponent J instead of J/beta
                    DiscreteIBInstance wrong = inst;
                    wrong.beta = 1.0;
                    DiscreteIBInstance hat = inst;
                    hat.pzx = target_distribution(wrong);
                    const double gap = exact_objective(hat) - exact_objective(inst);
                    auto rep = theorem2_check(inst);
                    const double residual =
                        std::abs(gap - inst.beta * (rep.kl_marginal + rep.kl_conditional));
                    ok = residual < 1e-10;
                }
                ++total_checks;
                if (!ok) {
                    ++failures;
                    if (failing.size() < 10)
                        failing.push_back({{"beta", beta}, {"index", i}});
                }
            }
        }
        sec["instances"] = counts.theorem2_instances * 3;
        sec["failures"] = failures;
        sec["failing"] = failing;
        sec["passed"] = failures == 0;
        all_pass = all_pass && failures == 0;
        report["theorem2"] = sec;
    }

    {
        nlohmann::json sec;
        std::size_t failures = 0;
        for (std::size_t f = 0; f < counts.theorem1_families; ++f) {
            std::vector<DiscreteIBInstance> family;
            for (std::size_t t = 0; t < counts.family_size; ++t)
                family.push_back(random_instance(rng, 4, 8, 0.001));
            if (family.empty()) continue;
            auto v = theorem1_check(family, 0.001);
            ++total_checks;
            if (!v.chain_ok) ++failures;
        }
        sec["families"] = counts.theorem1_families;
        sec["failures"] = failures;
        sec["passed"] = failures == 0;
        all_pass = all_pass && failures == 0;
        report["theorem1"] = sec;
    }

    {
        nlohmann::json sec;
        std::size_t failures = 0;
        double worst = 0.0;
        for (std::size_t i = 0; i < counts.stationarity_instances; ++i) {
            auto inst = random_instance(rng, 4, 8, 0.001);
            const double gap =
                stationarity_check(inst, counts.stationarity_perturbations, 1e-3, rng);
            ++total_checks;
            worst = std::min(worst, gap);
            if (gap < -1e-6) ++failures;
        }
        sec["instances"] = counts.stationarity_instances;
        sec["failures"] = failures;
        sec["worst_normalized_gap"] = worst;
        sec["passed"] = failures == 0;
        all_pass = all_pass && failures == 0;
        report["stationarity"] = sec;
    }

    {
        nlohmann::json sec;
        std::size_t failures = 0;
        std::vector<nlohmann::json> rows;
        if (counts.mi_seeds > 0) {
            for (double rho : {0.0, 0.5, 0.8}) {
                const double truth = -0.5 * std::log(1.0 - rho * rho);
                std::vector<double> ests;
                for (std::size_t s = 0; s < counts.mi_seeds; ++s) {
                    Rng probe_rng = rng.split(7000 + static_cast<std::uint64_t>(rho * 10) * 100 + s);
                    PairBatch pool;
                    pool.n = 4096;
                    pool.dx = pool.dz = 1;
                    pool.x.resize(pool.n);
                    pool.z.resize(pool.n);
                    const double c = std::sqrt(1.0 - rho * rho);
                    for (std::size_t i = 0; i < pool.n; ++i) {
                        pool.x[i] = probe_rng.normal(0.0, 1.0);
                        pool.z[i] = rho * pool.x[i] + c * probe_rng.normal(0.0, 1.0);
                    }
                    StatisticsNet net(
                        StatNetConfig{.obs_dim = 1, .latent_dim = 1, .hidden = {128}}, probe_rng);
                    ests.push_back(train_probe(net, ProbeConfig{}, pool, probe_rng).estimate);
                }
                std::sort(ests.begin(), ests.end());
                const double med = ests[ests.size() / 2];
                ++total_checks;
                const bool ok = std::abs(med - truth) < 0.05;
                if (!ok) ++failures;
                rows.push_back({{"rho", rho}, {"truth", truth}, {"median", med}, {"passed", ok}});
            }
        }
        sec["probes"] = rows;
        sec["failures"] = failures;
        sec["passed"] = failures == 0;
        all_pass = all_pass && failures == 0;
        report["mine_closed_form"] = sec;
    }

    report["total_checks"] = total_checks;
    report["all_pass"] = all_pass;
    if (all_pass_out) *all_pass_out = all_pass;
    return report;
}

}  // namespace svib
