#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ifv/optimize.hpp"
#include "ifv/pipeline.hpp"
#include "ifv/rng.hpp"

namespace ifv {

struct FvConfig {
    std::size_t adam_steps = 800;
    AdamConfig adam;             // lr 5e-2, betas (0.9, 0.999), eps 1e-8
    std::size_t lbfgs_steps = 300;
    std::size_t lbfgs_history = 10;
    std::uint64_t seed = 0;
    double init_scale = 0.01;    // stddev of the Gaussian init of v
};

// Output of one feature visualization run. grad_norm_at_opt is measured, not
// assumed zero.
struct Realization {
    Tensor v_star;
    Tensor image;
    FeatureResponse y;
    double final_value = 0.0;
    double grad_norm_at_opt = 0.0;
    bool line_search_warning = false;
    std::vector<double> adam_trace;   // S_x per Adam step
    std::vector<double> lbfgs_trace;  // S_x per accepted L-BFGS step
};

namespace detail {

inline void check_unit(const FeatureObjective& x, const char* where) {
    if (std::abs(norm2(x.x) - 1.0) > 1e-8)
        throw std::invalid_argument(std::string(where) + ": objective must be unit-norm");
}

}  // namespace detail

// Maximize S_x over parameters v: Adam first, then L-BFGS fine tuning.
// Deterministic for a fixed (config, seed).
inline Realization run_fv(const FeaturePipeline& pipe, const FeatureObjective& x,
                          const FvConfig& fv) {
    detail::check_unit(x, "run_fv");
    if (x.dim() != pipe.feature_count())
        throw std::invalid_argument("run_fv: objective dimension != feature count");

    Rng rng(fv.seed);
    Tensor v({pipe.param_count()});
    v.data = rng.gaussian_vector(pipe.param_count(), fv.init_scale);

    Realization out;
    out.adam_trace.reserve(fv.adam_steps);

    AdamState state(v.size());
    Tensor grad;
    for (std::size_t step = 0; step < fv.adam_steps; ++step) {
        double value = pipe.value_and_grad(x, v, &grad);
        if (!std::isfinite(value) || !grad.all_finite())
            throw std::runtime_error("run_fv: diverged at Adam step " + std::to_string(step));
        out.adam_trace.push_back(value);
        // ascent on S_x == descent on -S_x
        for (double& gi : grad.data) gi = -gi;
        adam_step(state, v.data, grad.data, fv.adam);
    }

    if (fv.lbfgs_steps > 0) {
        LbfgsConfig lc;
        lc.max_steps = fv.lbfgs_steps;
        lc.history = fv.lbfgs_history;
        ObjectiveFn fn = [&](const std::vector<double>& p, std::vector<double>& g) {
            Tensor vp(v.shape, p);
            Tensor gt;
            double value = pipe.value_and_grad(x, vp, &gt);
            g = gt.data;
            for (double& gi : g) gi = -gi;
            return -value;
        };
        LbfgsResult lr = lbfgs_minimize(v.data, fn, lc);
        v.data = lr.x;
        out.line_search_warning = lr.line_search_failed;
        out.lbfgs_trace.reserve(lr.trace.size());
        for (double f : lr.trace) out.lbfgs_trace.push_back(-f);
    }

    out.final_value = pipe.value_and_grad(x, v, &grad);
    out.grad_norm_at_opt = norm2(grad.data);
    out.v_star = v;
    out.image = pipe.image(v);
    out.y = pipe.response(v);
    return out;
}

struct ReoptResult {
    Tensor image_before;
    Tensor image_after;
    Tensor v_after;
    double value_after = 0.0;
};

// Continue Adam from a realization's optimum under a new objective, with
// fresh optimizer state. Returns the image pair for SSIM comparison.
inline ReoptResult reoptimize(const FeaturePipeline& pipe, const Realization& realization,
                              const FeatureObjective& x_new, std::size_t steps,
                              const AdamConfig& adam = {}) {
    detail::check_unit(x_new, "reoptimize");
    Tensor v = realization.v_star;
    AdamState state(v.size());
    Tensor grad;
    double value = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
        value = pipe.value_and_grad(x_new, v, &grad);
        if (!std::isfinite(value) || !grad.all_finite())
            throw std::runtime_error("reoptimize: diverged at step " + std::to_string(step));
        for (double& gi : grad.data) gi = -gi;
        adam_step(state, v.data, grad.data, adam);
    }
    ReoptResult out;
    out.image_before = realization.image;
    out.image_after = pipe.image(v);
    out.value_after = steps == 0 ? realization.final_value : value;
    out.v_after = std::move(v);
    return out;
}

}  // namespace ifv
