#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "svib/common.hpp"

namespace svib {

// Finite-alphabet instance: P(X) over K_x states, row-stochastic P(Z|X),
// and a per-z objective table J(z) for a fixed policy parameter.
struct DiscreteIBInstance {
    std::size_t kx = 0, kz = 0;
    std::vector<double> px;   // K_x
    std::vector<double> pzx;  // K_x x K_z, row-stochastic
    std::vector<double> j;    // K_z
    double beta = 1.0;

    void validate() const {
        if (px.size() != kx || pzx.size() != kx * kz || j.size() != kz)
            throw ContractError("DiscreteIBInstance: table sizes inconsistent");
        if (!(beta > 0.0)) throw ContractError("DiscreteIBInstance: beta must be positive");
        double s = 0.0;
        for (double p : px) {
            if (p < 0.0) throw ContractError("P(X) has negative entry");
            s += p;
        }
        if (std::abs(s - 1.0) > 1e-12) throw ContractError("P(X) does not sum to 1");
        for (std::size_t x = 0; x < kx; ++x) {
            double rs = 0.0;
            for (std::size_t z = 0; z < kz; ++z) {
                if (pzx[x * kz + z] < 0.0) throw ContractError("P(Z|X) has negative entry");
                rs += pzx[x * kz + z];
            }
            if (std::abs(rs - 1.0) > 1e-12) throw ContractError("P(Z|X) row does not sum to 1");
        }
    }
};

namespace oracle_detail {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_sum_exp(const std::vector<double>& v) {
    double mx = kNegInf;
    for (double x : v) mx = std::max(mx, x);
    if (mx == kNegInf) return kNegInf;
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

// log of the conditional table (log 0 = -inf).
inline std::vector<double> log_table(const std::vector<double>& p) {
    std::vector<double> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] > 0.0 ? std::log(p[i]) : kNegInf;
    return out;
}

// log P(z) = LSE_x [log P(x) + log P(z|x)]
inline std::vector<double> log_marginal(const std::vector<double>& px,
                                        const std::vector<double>& log_pzx, std::size_t kx,
                                        std::size_t kz) {
    std::vector<double> out(kz);
    std::vector<double> terms(kx);
    for (std::size_t z = 0; z < kz; ++z) {
        for (std::size_t x = 0; x < kx; ++x)
            terms[x] = px[x] > 0.0 ? std::log(px[x]) + log_pzx[x * kz + z] : kNegInf;
        out[z] = log_sum_exp(terms);
    }
    return out;
}

inline double mi_from_log(const std::vector<double>& px, const std::vector<double>& log_pzx,
                          std::size_t kx, std::size_t kz) {
    const auto log_pz = log_marginal(px, log_pzx, kx, kz);
    double mi = 0.0;
    for (std::size_t x = 0; x < kx; ++x) {
        if (px[x] == 0.0) continue;
        for (std::size_t z = 0; z < kz; ++z) {
            const double lc = log_pzx[x * kz + z];
            if (lc == kNegInf) continue;  // 0 log 0 = 0
            mi += px[x] * std::exp(lc) * (lc - log_pz[z]);
        }
    }
    return mi;
}

inline double expected_j_from_log(const std::vector<double>& px, const std::vector<double>& log_pzx,
                                  const std::vector<double>& j, std::size_t kx, std::size_t kz) {
    double e = 0.0;
    for (std::size_t x = 0; x < kx; ++x) {
        if (px[x] == 0.0) continue;
        for (std::size_t z = 0; z < kz; ++z) {
            const double lc = log_pzx[x * kz + z];
            if (lc != kNegInf) e += px[x] * std::exp(lc) * j[z];
        }
    }
    return e;
}

inline double objective_from_log(const DiscreteIBInstance& inst,
                                 const std::vector<double>& log_pzx) {
    return expected_j_from_log(inst.px, log_pzx, inst.j, inst.kx, inst.kz) -
           inst.beta * mi_from_log(inst.px, log_pzx, inst.kx, inst.kz);
}

}  // namespace oracle_detail

// I(X,Z) in nats, 0 log 0 treated as 0.
inline double exact_mi(const DiscreteIBInstance& inst) {
    inst.validate();
    return oracle_detail::mi_from_log(inst.px, oracle_detail::log_table(inst.pzx), inst.kx, inst.kz);
}

// L(theta, phi) = E[J(Z)] - beta I(X,Z)
inline double exact_objective(const DiscreteIBInstance& inst) {
    inst.validate();
    return oracle_detail::objective_from_log(inst, oracle_detail::log_table(inst.pzx));
}

// Log of the optimal target table: log Phat(z|x) = log P(z) + J(z)/beta - LSE.
// The right side has no x dependence, so every row is the same.
inline std::vector<double> target_log_distribution(const DiscreteIBInstance& inst) {
    inst.validate();
    const auto log_pzx = oracle_detail::log_table(inst.pzx);
    const auto log_pz = oracle_detail::log_marginal(inst.px, log_pzx, inst.kx, inst.kz);
    std::vector<double> row(inst.kz);
    for (std::size_t z = 0; z < inst.kz; ++z) row[z] = log_pz[z] + inst.j[z] / inst.beta;
    const double norm = oracle_detail::log_sum_exp(row);
    for (auto& v : row) v -= norm;
    std::vector<double> out(inst.kx * inst.kz);
    for (std::size_t x = 0; x < inst.kx; ++x)
        std::copy(row.begin(), row.end(), out.begin() + x * inst.kz);
    return out;
}

inline std::vector<double> target_distribution(const DiscreteIBInstance& inst) {
    auto out = target_log_distribution(inst);
    for (auto& v : out) v = v == oracle_detail::kNegInf ? 0.0 : std::exp(v);
    return out;
}

struct OracleReport {
    double mi = 0;                // I(X,Z) under phi
    double objective_phi = 0;     // L(theta, phi)
    double objective_phihat = 0;  // L(theta, phihat)
    double gap = 0;
    double kl_marginal = 0;     // D_KL(Phat(Z) || P(Z))
    double kl_conditional = 0;  // E_X D_KL(P(Z|X) || Phat(Z|X))
    double identity_residual = 0;
    bool improvement_ok = false;
    bool identity_ok = false;
};

// Representation improvement: L(theta, phihat) >= L(theta, phi), and the gap
// equals beta*KL(Phat(Z)||P(Z)) + beta*E_X KL(P(Z|X)||Phat(Z|X)) exactly.
inline OracleReport theorem2_check(const DiscreteIBInstance& inst, double identity_tol = 1e-10,
                                   double gap_tol = -1e-12) {
    using namespace oracle_detail;
    inst.validate();
    OracleReport rep;
    const auto log_pzx = log_table(inst.pzx);
    const auto log_hat = target_log_distribution(inst);
    rep.mi = mi_from_log(inst.px, log_pzx, inst.kx, inst.kz);
    rep.objective_phi = objective_from_log(inst, log_pzx);
    rep.objective_phihat = objective_from_log(inst, log_hat);
    rep.gap = rep.objective_phihat - rep.objective_phi;

    const auto log_pz = log_marginal(inst.px, log_pzx, inst.kx, inst.kz);
    const auto log_pz_hat = log_marginal(inst.px, log_hat, inst.kx, inst.kz);
    for (std::size_t z = 0; z < inst.kz; ++z) {
        if (log_pz_hat[z] == kNegInf) continue;
        rep.kl_marginal += std::exp(log_pz_hat[z]) * (log_pz_hat[z] - log_pz[z]);
    }
    for (std::size_t x = 0; x < inst.kx; ++x) {
        if (inst.px[x] == 0.0) continue;
        double kl = 0.0;
        for (std::size_t z = 0; z < inst.kz; ++z) {
            const double lc = log_pzx[x * inst.kz + z];
            if (lc == kNegInf) continue;
            kl += std::exp(lc) * (lc - log_hat[x * inst.kz + z]);
        }
        rep.kl_conditional += inst.px[x] * kl;
    }
    rep.identity_residual =
        std::abs(rep.gap - inst.beta * (rep.kl_marginal + rep.kl_conditional));
    rep.improvement_ok = rep.gap >= gap_tol;
    rep.identity_ok = rep.identity_residual < identity_tol;
    return rep;
}

struct Theorem1Verdict {
    std::size_t idx_r = 0, idx_star = 0;
    double mi_r = 0, mi_star = 0, j_r = 0, j_star = 0;
    bool chain_ok = false;
};

// Brute-force selection over a finite family: (theta_r, phi_r) minimizes
// I - E[J]/beta, (theta*, phi*) minimizes -E[J]/beta; asserts
// beta (I* - I_r) >= J* - J_r >= 0 within tol.
inline Theorem1Verdict theorem1_check(const std::vector<DiscreteIBInstance>& family, double beta,
                                      double tol = 1e-12) {
    using namespace oracle_detail;
    if (family.empty()) throw ContractError("theorem1_check: empty family");
    Theorem1Verdict v;
    double best_r = std::numeric_limits<double>::infinity();
    double best_star = std::numeric_limits<double>::infinity();
    std::vector<double> mis(family.size()), ejs(family.size());
    for (std::size_t i = 0; i < family.size(); ++i) {
        const auto& inst = family[i];
        inst.validate();
        const auto lt = log_table(inst.pzx);
        mis[i] = mi_from_log(inst.px, lt, inst.kx, inst.kz);
        ejs[i] = expected_j_from_log(inst.px, lt, inst.j, inst.kx, inst.kz);
        const double obj_r = mis[i] - ejs[i] / beta;
        const double obj_star = -ejs[i] / beta;
        if (obj_r < best_r) {
            best_r = obj_r;
            v.idx_r = i;
        }
        if (obj_star < best_star) {
            best_star = obj_star;
            v.idx_star = i;
        }
    }
    v.mi_r = mis[v.idx_r];
    v.mi_star = mis[v.idx_star];
    v.j_r = ejs[v.idx_r];
    v.j_star = ejs[v.idx_star];
    v.chain_ok = beta * (v.mi_star - v.mi_r) >= (v.j_star - v.j_r) - tol &&
                 v.j_star - v.j_r >= -tol;
    return v;
}

// Reproducible random instance: Dirichlet(1,...,1) rows, J uniform in [-1,1].
inline DiscreteIBInstance random_instance(Rng& rng, std::size_t kx, std::size_t kz, double beta) {
    DiscreteIBInstance inst;
    inst.kx = kx;
    inst.kz = kz;
    inst.beta = beta;
    auto dirichlet_row = [&](double* out, std::size_t n) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double u = rng.uniform();
            while (u <= 0.0) u = rng.uniform();
            out[i] = -std::log(u);
            s += out[i];
        }
        for (std::size_t i = 0; i < n; ++i) out[i] /= s;
        // re-normalize exactly so validate()'s 1e-12 row-sum check holds
        double rs = 0.0;
        for (std::size_t i = 0; i < n; ++i) rs += out[i];
        out[n - 1] += 1.0 - rs;
    };
    inst.px.resize(kx);
    dirichlet_row(inst.px.data(), kx);
    inst.pzx.resize(kx * kz);
    for (std::size_t x = 0; x < kx; ++x) dirichlet_row(&inst.pzx[x * kz], kz);
    inst.j.resize(kz);
    for (auto& v : inst.j) v = rng.uniform(-1.0, 1.0);
    return inst;
}

// First-order stationarity of the target: L(theta, phihat) dominates small
// random row perturbations of phihat. Returns the minimum normalized gap.
inline double stationarity_check(const DiscreteIBInstance& inst, std::size_t n_perturb,
                                 double magnitude, Rng& rng) {
    using namespace oracle_detail;
    DiscreteIBInstance hat = inst;
    hat.pzx = target_distribution(inst);
    // exact renormalize rows (exp/LSE leaves ~1e-16 residue)
    for (std::size_t x = 0; x < hat.kx; ++x) {
        double rs = 0.0;
        for (std::size_t z = 0; z < hat.kz; ++z) rs += hat.pzx[x * hat.kz + z];
        for (std::size_t z = 0; z < hat.kz; ++z) hat.pzx[x * hat.kz + z] /= rs;
    }
    const double l_hat = exact_objective(hat);
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t trial = 0; trial < n_perturb; ++trial) {
        DiscreteIBInstance pert = hat;
        for (std::size_t x = 0; x < pert.kx; ++x) {
            double rs = 0.0;
            for (std::size_t z = 0; z < pert.kz; ++z) {
                double& p = pert.pzx[x * pert.kz + z];
                p = std::max(0.0, p + magnitude * rng.uniform(-1.0, 1.0));
                rs += p;
            }
            for (std::size_t z = 0; z < pert.kz; ++z) pert.pzx[x * pert.kz + z] /= rs;
        }
        const double l_pert = objective_from_log(pert, log_table(pert.pzx));
        const double gap = (l_hat - l_pert) / std::max(1.0, std::abs(l_hat));
        min_gap = std::min(min_gap, gap);
    }
    return min_gap;
}

}  // namespace svib
