#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "svib/common.hpp"
#include "svib/tensor.hpp"

namespace svib {

// M x d matrix of representation samples for one source state (plain
// storage; tape connectivity lives in the Tensor the particles came from).
struct ParticleMatrix {
    std::size_t m = 0, d = 0;
    std::vector<double> v;

    ParticleMatrix() = default;
    ParticleMatrix(std::size_t m_, std::size_t d_) : m(m_), d(d_), v(m_ * d_, 0.0) {}

    double* row(std::size_t i) { return &v[i * d]; }
    const double* row(std::size_t i) const { return &v[i * d]; }

    static ParticleMatrix from_tensor_rows(const Tensor& t, std::size_t first, std::size_t count) {
        ParticleMatrix p(count, t.shape()[1]);
        std::copy_n(&t.data()[first * p.d], count * p.d, p.v.begin());
        return p;
    }
};

inline double squared_distance(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double diff = a[j] - b[j];
        s += diff * diff;
    }
    return s;
}

constexpr double kBandwidthFloor = 1e-6;

// h = med^2 / (2 ln(M+1)) over the M(M-1)/2 pairwise Euclidean distances.
// Falls back to the floor when every particle coincides.
inline double median_bandwidth(const ParticleMatrix& p) {
    if (p.m < 2) throw ContractError("median_bandwidth needs at least 2 particles");
    std::vector<double> d2;
    d2.reserve(p.m * (p.m - 1) / 2);
    for (std::size_t i = 0; i < p.m; ++i)
        for (std::size_t j = i + 1; j < p.m; ++j) d2.push_back(squared_distance(p.row(i), p.row(j), p.d));
    std::sort(d2.begin(), d2.end());
    const std::size_t n = d2.size();
    double med2;  // median of distances, squared; even count averages the middle distances
    if (n % 2 == 1) {
        med2 = d2[n / 2];
    } else {
        const double mid = 0.5 * (std::sqrt(d2[n / 2 - 1]) + std::sqrt(d2[n / 2]));
        med2 = mid * mid;
    }
    const double h = med2 / (2.0 * std::log(static_cast<double>(p.m) + 1.0));
    return std::max(h, kBandwidthFloor);
}

inline double rbf_kernel(const double* zi, const double* zj, std::size_t d, double h) {
    if (!(h > 0.0)) throw ContractError("rbf_kernel bandwidth must be positive");
    return std::exp(-squared_distance(zi, zj, d) / h);
}

inline double rbf_kernel(const std::vector<double>& zi, const std::vector<double>& zj, double h) {
    if (zi.size() != zj.size())
        throw DimensionError("rbf_kernel dimension mismatch");
    return rbf_kernel(zi.data(), zj.data(), zi.size(), h);
}

// d/d z_j of exp(-||z_i - z_j||^2 / h), written into out.
inline void rbf_kernel_grad_zj(const double* zi, const double* zj, std::size_t d, double h,
                               double kval, double* out) {
    const double c = 2.0 * kval / h;
    for (std::size_t j = 0; j < d; ++j) out[j] = c * (zi[j] - zj[j]);
}

inline std::vector<double> kernel_matrix(const ParticleMatrix& p, double h) {
    std::vector<double> k(p.m * p.m);
    for (std::size_t i = 0; i < p.m; ++i) {
        k[i * p.m + i] = 1.0;
        for (std::size_t j = i + 1; j < p.m; ++j) {
            const double val = rbf_kernel(p.row(i), p.row(j), p.d, h);
            k[i * p.m + j] = val;
            k[j * p.m + i] = val;
        }
    }
    return k;
}

constexpr double kPriorVarFloor = 1e-6;

struct PriorModel {
    enum class Kind { Uniform, BatchGaussian };
    Kind kind = Kind::Uniform;
    std::vector<double> mu, var;  // batch_gaussian only
    bool fitted = false;

    static PriorModel uniform() { return PriorModel{}; }

    // Per-dimension mean and (population) variance of the particle batch.
    static PriorModel batch_gaussian(const ParticleMatrix& p) {
        PriorModel prior;
        prior.kind = Kind::BatchGaussian;
        prior.mu.assign(p.d, 0.0);
        prior.var.assign(p.d, 0.0);
        for (std::size_t i = 0; i < p.m; ++i)
            for (std::size_t j = 0; j < p.d; ++j) prior.mu[j] += p.row(i)[j];
        for (auto& m : prior.mu) m /= static_cast<double>(p.m);
        for (std::size_t i = 0; i < p.m; ++i)
            for (std::size_t j = 0; j < p.d; ++j) {
                const double d = p.row(i)[j] - prior.mu[j];
                prior.var[j] += d * d;
            }
        for (auto& v : prior.var) v = std::max(v / static_cast<double>(p.m), kPriorVarFloor);
        prior.fitted = true;
        return prior;
    }

    // Score of the prior at z: 0 for uniform, -(z - mu)/var per dimension.
    std::vector<double> log_grad(const std::vector<double>& z) const {
        if (kind == Kind::Uniform) return std::vector<double>(z.size(), 0.0);
        if (!fitted) throw ContractError("gaussian prior used before fitting");
        if (z.size() != mu.size()) throw DimensionError("prior dimension mismatch");
        std::vector<double> g(z.size());
        for (std::size_t j = 0; j < z.size(); ++j) g[j] = -(z[j] - mu[j]) / var[j];
        return g;
    }
};

struct SVGDConfig {
    double beta = 0.001;
    double zeta_scale = 0.005;
    double step_size = 1e-3;
    std::size_t particles = 32;
};

// zeta = zeta_scale * ||grad (1/beta) J|| / ||grad log U||, zero when the
// prior score vanishes (uniform prior drops the term entirely).
inline double zeta(const std::vector<double>& grad_j_over_beta,
                   const std::vector<double>& grad_log_u, double zeta_scale) {
    if (grad_j_over_beta.size() != grad_log_u.size())
        throw DimensionError("zeta tensors must share shape");
    double nj = 0, nu = 0;
    for (double v : grad_j_over_beta) nj += v * v;
    for (double v : grad_log_u) nu += v * v;
    nj = std::sqrt(nj);
    nu = std::sqrt(nu);
    if (nu < 1e-12) return 0.0;
    return zeta_scale * nj / nu;
}

inline double zeta_from_norms(double norm_j_over_beta, double norm_log_u, double zeta_scale) {
    if (norm_log_u < 1e-12) return 0.0;
    return zeta_scale * norm_j_over_beta / norm_log_u;
}

// Greedy KL-descent direction: Phi(Z_i) = (1/M) sum_j [K(Z_j,Z_i) s_j +
// grad_{Z_j} K(Z_j,Z_i)], with s_j the target score at Z_j. The kernel
// expectation runs over the same M particles; the normalizer is omitted.
inline ParticleMatrix svgd_direction(const ParticleMatrix& particles,
                                     const ParticleMatrix& scores, double h) {
    if (scores.m != particles.m || scores.d != particles.d)
        throw DimensionError("svgd_direction: scores shape does not match particles");
    const std::size_t m = particles.m, d = particles.d;
    ParticleMatrix dir(m, d);
    std::vector<double> gk(d);
    for (std::size_t i = 0; i < m; ++i) {
        double* out = dir.row(i);
        for (std::size_t j = 0; j < m; ++j) {
            const double k = rbf_kernel(particles.row(j), particles.row(i), d, h);
            rbf_kernel_grad_zj(particles.row(i), particles.row(j), d, h, k, gk.data());
            const double* s = scores.row(j);
            for (std::size_t c = 0; c < d; ++c) out[c] += k * s[c] + gk[c];
        }
        for (std::size_t c = 0; c < d; ++c) out[c] /= static_cast<double>(m);
    }
    return dir;
}

inline ParticleMatrix svgd_direction(
    const ParticleMatrix& particles,
    const std::function<std::vector<double>(const std::vector<double>&)>& grad_log_target_at,
    double h) {
    ParticleMatrix scores(particles.m, particles.d);
    for (std::size_t j = 0; j < particles.m; ++j) {
        std::vector<double> z(particles.row(j), particles.row(j) + particles.d);
        std::vector<double> s = grad_log_target_at(z);
        if (s.size() != particles.d) throw DimensionError("grad_log_target dimension mismatch");
        std::copy(s.begin(), s.end(), scores.row(j));
    }
    return svgd_direction(particles, scores, h);
}

// Chain rule into the encoder: backprops the surrogate
// (1/rows) * sum_i <stop_gradient(Phi_i), Z_i> so each encoder weight
// accumulates the expectation of Phi(Z_i) * dZ_i/dphi. Directions are
// treated as constants.
inline void phi_gradient(const Tensor& particles, const ParticleMatrix& directions) {
    if (!particles.on_tape())
        throw ContractError("phi_gradient: particles are detached from the encoder tape");
    if (particles.rank() != 2 || particles.shape()[0] != directions.m ||
        particles.shape()[1] != directions.d)
        throw DimensionError("phi_gradient: direction matrix shape mismatch");
    const double inv = 1.0 / static_cast<double>(directions.m);
    std::vector<double> w(directions.v);
    for (auto& x : w) x *= inv;
    Tensor dir = Tensor::constant(particles.shape(), std::move(w));
    backward(sum(mul(particles, dir)));
}

}  // namespace svib
