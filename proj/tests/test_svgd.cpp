#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "fd_oracle.hpp"
#include "svib/nets.hpp"
#include "svib/svgd.hpp"

using namespace svib;

namespace {

ParticleMatrix make_particles(const std::vector<std::vector<double>>& rows) {
    ParticleMatrix p(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), p.row(i));
    return p;
}

// Independent sort-based median bandwidth oracle.
double bandwidth_oracle(const ParticleMatrix& p) {
    std::vector<double> dist;
    for (std::size_t i = 0; i < p.m; ++i)
        for (std::size_t j = i + 1; j < p.m; ++j)
            dist.push_back(std::sqrt(squared_distance(p.row(i), p.row(j), p.d)));
    std::sort(dist.begin(), dist.end());
    const std::size_t n = dist.size();
    const double med = n % 2 ? dist[n / 2] : 0.5 * (dist[n / 2 - 1] + dist[n / 2]);
    return med * med / (2.0 * std::log(static_cast<double>(p.m) + 1.0));
}

double energy_distance_1d(const std::vector<double>& xs, const std::vector<double>& ys) {
    auto mean_abs = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0;
        for (double x : a)
            for (double y : b) s += std::abs(x - y);
        return s / (a.size() * b.size());
    };
    return 2.0 * mean_abs(xs, ys) - mean_abs(xs, xs) - mean_abs(ys, ys);
}

}  // namespace

TEST_CASE("median bandwidth on three collinear particles") {
    auto p = make_particles({{0.0}, {1.0}, {2.0}});
    // distances {1,1,2}, median 1
    CHECK(median_bandwidth(p) == doctest::Approx(1.0 / (2.0 * std::log(4.0))).epsilon(1e-12));
}

TEST_CASE("median bandwidth with all distances equal") {
    // equilateral triangle, side sqrt(2)
    auto p = make_particles({{1.0, 0, 0}, {0, 1.0, 0}, {0, 0, 1.0}});
    CHECK(median_bandwidth(p) == doctest::Approx(2.0 / (2.0 * std::log(4.0))).epsilon(1e-12));
}

TEST_CASE("median bandwidth matches sort-based oracle on random sets") {
    Rng rng(31);
    for (std::size_t m : {5, 16, 100}) {
        ParticleMatrix p(m, 3);
        for (auto& v : p.v) v = rng.normal();
        CHECK(median_bandwidth(p) == doctest::Approx(bandwidth_oracle(p)).epsilon(1e-14));
    }
}

TEST_CASE("median bandwidth contract errors and degenerate floor") {
    ParticleMatrix one(1, 2);
    CHECK_THROWS_AS(median_bandwidth(one), ContractError);
    auto collapsed = make_particles({{1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}});
    CHECK(median_bandwidth(collapsed) == kBandwidthFloor);
}

TEST_CASE("rbf kernel values and gradient at coincidence") {
    CHECK(rbf_kernel({0.3, -0.7}, {0.3, -0.7}, 2.0) == 1.0);
    CHECK(rbf_kernel({0.0}, {1.0}, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK_THROWS_AS(rbf_kernel({0.0}, {1.0}, 0.0), ContractError);
    double g[2];
    const double z[2] = {0.5, -0.5};
    rbf_kernel_grad_zj(z, z, 2, 1.0, 1.0, g);
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
}

TEST_CASE("kernel matrix is symmetric, unit-diagonal, entries in (0,1], PSD") {
    Rng rng(41);
    ParticleMatrix p(12, 4);
    for (auto& v : p.v) v = rng.normal();
    const double h = median_bandwidth(p);
    auto k = kernel_matrix(p, h);
    for (std::size_t i = 0; i < p.m; ++i) {
        CHECK(k[i * p.m + i] == 1.0);
        for (std::size_t j = 0; j < p.m; ++j) {
            CHECK(k[i * p.m + j] == k[j * p.m + i]);
            CHECK(k[i * p.m + j] > 0.0);
            CHECK(k[i * p.m + j] <= 1.0);
        }
    }
    // PSD probe via random quadratic forms
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(p.m);
        for (auto& v : x) v = rng.normal();
        double q = 0;
        for (std::size_t i = 0; i < p.m; ++i)
            for (std::size_t j = 0; j < p.m; ++j) q += x[i] * k[i * p.m + j] * x[j];
        CHECK(q > -1e-10);
    }
}

TEST_CASE("uniform prior score is zero") {
    auto prior = PriorModel::uniform();
    CHECK(prior.log_grad({3.0, -1.0}) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("standard gaussian prior score") {
    PriorModel prior;
    prior.kind = PriorModel::Kind::BatchGaussian;
    prior.mu = {0.0};
    prior.var = {1.0};
    prior.fitted = true;
    CHECK(prior.log_grad({2.0}) == std::vector<double>{-2.0});
}

TEST_CASE("batch gaussian fit of particles {0,2}") {
    auto p = make_particles({{0.0}, {2.0}});
    auto prior = PriorModel::batch_gaussian(p);
    CHECK(prior.mu[0] == 1.0);
    CHECK(prior.var[0] == 1.0);
}

TEST_CASE("unfitted gaussian prior rejected") {
    PriorModel prior;
    prior.kind = PriorModel::Kind::BatchGaussian;
    CHECK_THROWS_AS(prior.log_grad({1.0}), ContractError);
}

TEST_CASE("zeta rule") {
    CHECK(zeta({1.0, 1.0}, {0.0, 0.0}, 0.005) == 0.0);
    CHECK(zeta({3.0, 4.0}, {4.0, 3.0}, 0.005) == doctest::Approx(0.005).epsilon(1e-12));
    CHECK(zeta({2.0}, {4.0}, 0.005) == doctest::Approx(0.0025).epsilon(1e-12));
}

TEST_CASE("single particle direction is the plain target gradient") {
    auto p = make_particles({{0.7, -0.3}});
    auto dir = svgd_direction(
        p, [](const std::vector<double>& z) { return std::vector<double>{-z[0], -z[1]}; }, 1.0);
    CHECK(dir.row(0)[0] == doctest::Approx(-0.7).epsilon(1e-14));
    CHECK(dir.row(0)[1] == doctest::Approx(0.3).epsilon(1e-14));
}

TEST_CASE("identical particles with zero target gradient give zero direction") {
    auto p = make_particles({{0.5}, {0.5}});
    auto dir = svgd_direction(
        p, [](const std::vector<double>& z) { return std::vector<double>{0.0}; }, 1.0);
    CHECK(dir.row(0)[0] == 0.0);
    CHECK(dir.row(1)[0] == 0.0);
}

TEST_CASE("two-particle direction matches a hand evaluation") {
    auto p = make_particles({{0.0}, {1.0}});
    const double h = 1.0;
    auto dir = svgd_direction(
        p, [](const std::vector<double>& z) { return std::vector<double>{-z[0]}; }, h);
    const double k = std::exp(-1.0);
    // Phi(z=0): j at 0 contributes 1*0 + 0; j at 1 contributes k*(-1) + 2k*(0-1)/h
    const double phi0 = 0.5 * (k * (-1.0) + 2.0 * k * (0.0 - 1.0));
    // Phi(z=1): j at 0 contributes k*0 + 2k*(1-0)/h; j at 1 contributes 1*(-1) + 0
    const double phi1 = 0.5 * (2.0 * k * (1.0 - 0.0) + (-1.0));
    CHECK(dir.row(0)[0] == doctest::Approx(phi0).epsilon(1e-12));
    CHECK(dir.row(1)[0] == doctest::Approx(phi1).epsilon(1e-12));
}

TEST_CASE("direction is permutation-equivariant") {
    Rng rng(53);
    ParticleMatrix p(6, 2);
    for (auto& v : p.v) v = rng.normal();
    auto score = [](const std::vector<double>& z) {
        return std::vector<double>{-z[0] + 0.2 * z[1], -z[1]};
    };
    const double h = median_bandwidth(p);
    auto dir = svgd_direction(p, score, h);
    ParticleMatrix rev(6, 2);
    for (std::size_t i = 0; i < 6; ++i)
        std::copy(p.row(5 - i), p.row(5 - i) + 2, rev.row(i));
    auto dir_rev = svgd_direction(rev, score, h);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t c = 0; c < 2; ++c)
            CHECK(dir.row(i)[c] == doctest::Approx(dir_rev.row(5 - i)[c]).epsilon(1e-13));
}

TEST_CASE("zero directions give zero phi gradient") {
    Rng rng(61);
    Encoder enc({.obs_dim = 5, .noise_dim = 2, .latent_dim = 2, .noise_var = 0.1, .hidden = {4}}, rng);
    std::vector<double> x(5, 0.2);
    Tensor z = enc.encode_particles(x, 3, rng);
    phi_gradient(z, ParticleMatrix(3, 2));
    for (const auto& p : enc.params())
        if (p.has_grad())
            for (double g : p.grad()) CHECK(g == 0.0);
}

TEST_CASE("phi gradient through an identity offset") {
    // particle = x + b with learnable scalar b; Phi(Z) = c gives d/db = c
    Tensor b = Tensor::param({1}, {0.4});
    Tensor x = Tensor::constant({1, 1}, {1.5});
    Tensor z = add(x, b);
    ParticleMatrix dir(1, 1);
    dir.row(0)[0] = 2.5;
    phi_gradient(z, dir);
    CHECK(b.grad()[0] == doctest::Approx(2.5).epsilon(1e-14));
}

TEST_CASE("detached particles rejected") {
    Tensor z = Tensor::constant({2, 2}, {1, 2, 3, 4});
    CHECK_THROWS_AS(phi_gradient(z, ParticleMatrix(2, 2)), ContractError);
}

TEST_CASE("phi gradient matches finite differences of the stop-gradient surrogate") {
    Rng init_rng(71);
    Encoder enc({.obs_dim = 4, .noise_dim = 2, .latent_dim = 2, .noise_var = 0.1, .hidden = {5}}, init_rng);
    std::vector<double> xs = {0.1, -0.3, 0.7, 0.2, -0.5, 0.4, 0.0, 0.9};
    ParticleMatrix dir(6, 2);
    Rng dr(72);
    for (auto& v : dir.v) v = dr.normal();

    auto encode = [&]() {
        Rng noise_rng(73);  // frozen noise draw
        return enc.encode_batch(xs, 2, 3, noise_rng);
    };
    auto surrogate = [&]() {
        Tensor z = encode();
        double s = 0;
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t c = 0; c < 2; ++c) s += dir.row(i)[c] * z.data()[i * 2 + c];
        return s / 6.0;
    };

    Tensor z = encode();
    phi_gradient(z, dir);
    auto params = enc.params();
    auto fd = svib_test::fd_gradients(params, surrogate);
    for (std::size_t i = 0; i < params.size(); ++i)
        CHECK(svib_test::max_rel_err(params[i].grad(), fd[i]) < 1e-4);
}

TEST_CASE("single-particle SVGD converges to the mode of a quadratic log-target") {
    // log target -(z - 1.7)^2 / 2
    ParticleMatrix p(1, 1);
    p.row(0)[0] = -3.0;
    for (int t = 0; t < 4000; ++t) {
        const double step = 0.5 / (1.0 + 0.01 * t);
        auto dir = svgd_direction(
            p, [](const std::vector<double>& z) { return std::vector<double>{-(z[0] - 1.7)}; }, 1.0);
        p.row(0)[0] += step * dir.row(0)[0];
    }
    CHECK(std::abs(p.row(0)[0] - 1.7) < 1e-3);
}

TEST_CASE("200-particle SVGD matches a fixed 1-D Gaussian target") {
    const double mu0 = 2.0, sigma0 = 0.8;
    Rng rng(81);
    ParticleMatrix p(200, 1);
    for (auto& v : p.v) v = rng.normal(0.0, 0.3);

    std::vector<double> target_sample(2000);
    for (auto& v : target_sample) v = rng.normal(mu0, sigma0);

    std::vector<double> energy_at_window;
    for (int t = 0; t < 500; ++t) {
        const double h = median_bandwidth(p);
        auto dir = svgd_direction(
            p,
            [&](const std::vector<double>& z) {
                return std::vector<double>{-(z[0] - mu0) / (sigma0 * sigma0)};
            },
            h);
        for (std::size_t i = 0; i < p.m; ++i) p.row(i)[0] += 0.05 * dir.row(i)[0];
        if ((t + 1) % 50 == 0)
            energy_at_window.push_back(energy_distance_1d(p.v, target_sample));
    }
    double mean = 0, var = 0;
    for (double v : p.v) mean += v;
    mean /= p.m;
    for (double v : p.v) var += (v - mean) * (v - mean);
    var /= p.m;
    CHECK(std::abs(mean - mu0) / mu0 < 0.05);
    CHECK(std::abs(var - sigma0 * sigma0) / (sigma0 * sigma0) < 0.10);

    // energy distance decreases over 50-step windows, allowing one stall
    int non_decreasing = 0;
    for (std::size_t i = 1; i < energy_at_window.size(); ++i)
        if (energy_at_window[i] >= energy_at_window[i - 1]) ++non_decreasing;
    CHECK(non_decreasing <= 1);
}
