#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "ifv/objective.hpp"
#include "ifv/rng.hpp"
#include "ifv/tensor.hpp"

namespace ifv {

// Hoyer sparseness: (sqrt(n) - ||x||_1 / ||x||_2) / (sqrt(n) - 1).
// Canonical vectors map to 1, constant vectors to 0.
inline double hoyer(const std::vector<double>& x) {
    const std::size_t n = x.size();
    if (n < 2) throw std::invalid_argument("hoyer: undefined for n < 2");
    double l1 = 0.0, l2sq = 0.0;
    for (double v : x) {
        if (v < 0.0) throw std::invalid_argument("hoyer: entries must be nonnegative");
        l1 += v;
        l2sq += v * v;
    }
    if (l2sq == 0.0) throw std::domain_error("hoyer: zero vector");
    const double sqn = std::sqrt(static_cast<double>(n));
    return (sqn - l1 / std::sqrt(l2sq)) / (sqn - 1.0);
}

namespace detail {

// Projected Riemannian descent on the sphere for (hoyer(x) - s)^2, keeping
// entries nonnegative. Returns true on |hoyer - s| < tol.
inline bool sparseness_search(std::vector<double>& x, double s, double tol,
                              std::size_t max_iters) {
    const std::size_t n = x.size();
    const double sqn = std::sqrt(static_cast<double>(n));
    auto objective = [&](const std::vector<double>& v) {
        double h = hoyer(v);
        return (h - s) * (h - s);
    };
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        double l1 = 0.0;
        for (double v : x) l1 += v;
        double h = (sqn - l1) / (sqn - 1.0);  // ||x||_2 == 1 here
        if (std::abs(h - s) < tol) return true;

        // d hoyer / dx_i on the unit sphere = -(1 - l1 * x_i) / (sqrt(n) - 1)
        std::vector<double> g(n);
        const double c = 2.0 * (h - s) / (sqn - 1.0);
        for (std::size_t i = 0; i < n; ++i) g[i] = -c * (1.0 - l1 * x[i]);
        // tangent projection
        double gx = dot(g, x);
        axpy(g, -gx, x);

        double f0 = (h - s) * (h - s);
        double step = 0.5;
        bool moved = false;
        for (int bt = 0; bt < 50; ++bt) {
            std::vector<double> cand = x;
            axpy(cand, -step, g);
            for (double& v : cand) v = std::max(v, 0.0);
            double nn = norm2(cand);
            if (nn > 0.0) {
                scale(cand, 1.0 / nn);
                if (objective(cand) < f0) {
                    x = std::move(cand);
                    moved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if (!moved) return std::abs(hoyer(x) - s) < tol;
    }
    return std::abs(hoyer(x) - s) < tol;
}

}  // namespace detail

// Nonnegative unit vector with the requested Hoyer sparseness (within 0.01;
// the search aims tighter).
inline FeatureObjective sample_objective_with_sparseness(std::size_t n_f, double s, Rng& rng) {
    if (n_f < 2) throw std::invalid_argument("sample_objective: n_f must be >= 2");
    for (int attempt = 0; attempt < 16; ++attempt) {
        std::vector<double> x = rng.unit_vector(n_f);
        for (double& v : x) v = std::abs(v);
        double n = norm2(x);
        scale(x, 1.0 / n);
        if (detail::sparseness_search(x, s, 0.002, 10000)) return FeatureObjective{std::move(x)};
        std::fprintf(stderr, "sample_objective: search did not converge (s=%.4f), retrying\n", s);
    }
    throw std::runtime_error("sample_objective: sparseness search failed repeatedly");
}

// Target objective with uniformly distributed Hoyer sparseness.
inline FeatureObjective sample_objective(std::size_t n_f, Rng& rng) {
    for (int attempt = 0; attempt < 16; ++attempt) {
        double s = rng.uniform();
        std::vector<double> x = rng.unit_vector(n_f);
        for (double& v : x) v = std::abs(v);
        double n = norm2(x);
        scale(x, 1.0 / n);
        if (detail::sparseness_search(x, s, 0.002, 10000)) return FeatureObjective{std::move(x)};
        std::fprintf(stderr, "sample_objective: search did not converge (s=%.4f), resampling s\n", s);
    }
    throw std::runtime_error("sample_objective: sparseness search failed repeatedly");
}

inline FeatureObjective sample_objective(std::size_t n_f, std::uint64_t seed) {
    Rng rng(seed);
    return sample_objective(n_f, rng);
}

}  // namespace ifv
