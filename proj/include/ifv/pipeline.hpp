#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ifv/network.hpp"
#include "ifv/objective.hpp"
#include "ifv/parametrize.hpp"

namespace ifv {

// The combined map from parameter vectors to feature responses,
// net = agg o N o P, together with the significance head. All FV and
// inversion work happens against this chain.
struct FeaturePipeline {
    Parametrization param;
    Network net;
    SignificanceConfig cfg;

    std::size_t param_count() const { return param.param_count(); }

    std::size_t feature_count() const {
        const Shape& out = net.output_shape;
        return out.size() == 1 ? out[0] : out[out.size() - 1];
    }

    Tensor image(const Tensor& v) const { return apply(param, v); }

    FeatureResponse response(const Tensor& v) const {
        return aggregate(forward(net, apply(param, v)), cfg);
    }

    // cotangent on y, pulled back to parameter space
    Tensor response_vjp(const Tensor& v, const std::vector<double>& cot_y) const {
        Tensor img = apply(param, v);
        ForwardTrace trace = forward_trace(net, img);
        Tensor dact = aggregate_vjp(trace.output(), cfg, cot_y);
        Tensor dimg = backward(net, trace, dact);
        return apply_vjp(param, v, dimg);
    }

    // Dy, one backward pass per feature from a shared forward evaluation
    JacobianMatrix jacobian(const Tensor& v) const {
        Tensor img = apply(param, v);
        ForwardTrace trace = forward_trace(net, img);
        const std::size_t n_f = feature_count();
        const std::size_t n_p = param_count();
        JacobianMatrix jac(n_f, n_p);
        for (std::size_t f = 0; f < n_f; ++f) {
            std::vector<double> cot(n_f, 0.0);
            cot[f] = 1.0;
            Tensor dact = aggregate_vjp(trace.output(), cfg, cot);
            Tensor dimg = backward(net, trace, dact);
            Tensor row = apply_vjp(param, v, dimg);
            if (!row.all_finite()) throw std::runtime_error("pipeline jacobian: non-finite row");
            std::copy(row.data.begin(), row.data.end(), jac.data.begin() + f * n_p);
        }
        return jac;
    }

    // S_x at v and its gradient via reverse mode; the gradient buffer is
    // optional.
    double value_and_grad(const FeatureObjective& x, const Tensor& v, Tensor* grad) const {
        Tensor img = apply(param, v);
        ForwardTrace trace = forward_trace(net, img);
        FeatureResponse y = aggregate(trace.output(), cfg);
        double value = significance(x, y, cfg.k);
        if (grad) {
            std::vector<double> cot_y = significance_grad_y(x, y, cfg.k);
            Tensor dact = aggregate_vjp(trace.output(), cfg, cot_y);
            Tensor dimg = backward(net, trace, dact);
            *grad = apply_vjp(param, v, dimg);
        }
        return value;
    }
};

}  // namespace ifv
