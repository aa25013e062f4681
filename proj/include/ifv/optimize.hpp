#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ifv/tensor.hpp"

namespace ifv {

struct AdamConfig {
    double lr = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m, v;
    std::size_t t = 0;

    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// One Adam update, minimizing. params and grad must match the state size.
inline void adam_step(AdamState& state, std::vector<double>& params,
                      const std::vector<double>& grad, const AdamConfig& cfg) {
    if (params.size() != state.m.size() || grad.size() != state.m.size())
        throw std::invalid_argument("adam_step: size mismatch");
    state.t += 1;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        params[i] -= cfg.lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + cfg.eps);
    }
}

struct LbfgsConfig {
    std::size_t max_steps = 300;
    std::size_t history = 10;
    double armijo_c1 = 1e-4;
    double grad_tol = 1e-12;
    std::size_t max_backtracks = 40;
};

struct LbfgsResult {
    std::vector<double> x;
    double value = 0.0;
    double grad_norm = 0.0;
    std::size_t steps = 0;
    bool line_search_failed = false;  // warning, not an error: best-so-far is returned
    std::vector<double> trace;        // objective value per accepted step
};

// Objective callback: fills grad, returns f(x).
using ObjectiveFn = std::function<double(const std::vector<double>&, std::vector<double>&)>;

// Limited-memory BFGS with two-loop recursion and Armijo backtracking.
inline LbfgsResult lbfgs_minimize(std::vector<double> x0, const ObjectiveFn& fn,
                                  const LbfgsConfig& cfg) {
    const std::size_t n = x0.size();
    LbfgsResult res;
    res.x = std::move(x0);

    std::vector<double> g(n);
    double f = fn(res.x, g);
    if (!std::isfinite(f) || !all_finite(g))
        throw std::runtime_error("lbfgs: non-finite objective at start");

    std::deque<std::vector<double>> s_hist, y_hist;
    std::deque<double> rho_hist;

    std::vector<double> best_x = res.x;
    double best_f = f;

    for (std::size_t step = 0; step < cfg.max_steps; ++step) {
        double gnorm = norm2(g);
        if (gnorm <= cfg.grad_tol) break;

        // two-loop recursion
        std::vector<double> q = g;
        std::vector<double> alpha(s_hist.size());
        for (std::size_t i = s_hist.size(); i-- > 0;) {
            alpha[i] = rho_hist[i] * dot(s_hist[i], q);
            axpy(q, -alpha[i], y_hist[i]);
        }
        if (!s_hist.empty()) {
            const auto& s = s_hist.back();
            const auto& y = y_hist.back();
            double gamma = dot(s, y) / dot(y, y);
            scale(q, gamma);
        }
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            double beta = rho_hist[i] * dot(y_hist[i], q);
            axpy(q, alpha[i] - beta, s_hist[i]);
        }
        // descent direction
        std::vector<double> d = scaled(std::move(q), -1.0);
        double gd = dot(g, d);
        if (gd >= 0.0) {  // bad curvature; fall back to steepest descent
            d = scaled(g, -1.0);
            gd = -gnorm * gnorm;
        }

        std::vector<double> x_new(n), g_new(n);
        double f_new = 0.0;
        auto backtrack = [&]() {
            double t = 1.0;
            for (std::size_t bt = 0; bt < cfg.max_backtracks; ++bt) {
                x_new = res.x;
                axpy(x_new, t, d);
                f_new = fn(x_new, g_new);
                if (std::isfinite(f_new) && all_finite(g_new) &&
                    f_new <= f + cfg.armijo_c1 * t * gd)
                    return true;
                t *= 0.5;
            }
            return false;
        };
        bool accepted = backtrack();
        if (!accepted && !s_hist.empty()) {
            // the quasi-Newton direction stalled; drop the history and give
            // plain steepest descent one chance before declaring failure
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = scaled(g, -1.0);
            gd = -gnorm * gnorm;
            accepted = backtrack();
        }
        if (!accepted) {
            res.line_search_failed = true;
            break;
        }

        std::vector<double> s = x_new;
        for (std::size_t i = 0; i < n; ++i) s[i] -= res.x[i];
        std::vector<double> y = g_new;
        for (std::size_t i = 0; i < n; ++i) y[i] -= g[i];
        double sy = dot(s, y);
        if (sy > 1e-12 * norm2(s) * norm2(y)) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (s_hist.size() > cfg.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        } else {
            // negative curvature: the stored pairs no longer model the local
            // Hessian, restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        res.x = std::move(x_new);
        f = f_new;
        g = g_new;
        res.steps += 1;
        res.trace.push_back(f);
        if (f < best_f) {
            best_f = f;
            best_x = res.x;
        }
    }

    if (best_f < f) {
        res.x = best_x;
        f = fn(res.x, g);
    }
    res.value = f;
    res.grad_norm = norm2(g);
    return res;
}

}  // namespace ifv
