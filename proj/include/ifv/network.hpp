#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ifv/linalg.hpp"
#include "ifv/tensor.hpp"

namespace ifv {

enum class LayerKind { dense, conv2d, relu, maxpool2d, sigmoid, softmax, bias_add, flatten, square };

inline std::string layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool2d: return "maxpool2d";
        case LayerKind::sigmoid: return "sigmoid";
        case LayerKind::softmax: return "softmax";
        case LayerKind::bias_add: return "bias_add";
        case LayerKind::flatten: return "flatten";
        case LayerKind::square: return "square";
    }
    return "?";
}

enum class Padding { valid, same };

// One feedforward layer. Weight layout:
//   dense    weights {out, in}
//   conv2d   weights {out_channels, k, k, in_channels}, stride 1, square kernel
//   bias_add weights {channels} for rank-3 inputs (per channel), {n} for rank-1
struct Layer {
    LayerKind kind;
    std::size_t kernel = 0;  // conv2d
    Padding padding = Padding::valid;
    std::size_t pool = 0, stride = 0;  // maxpool2d
    Tensor weights;

    static Layer dense(Tensor w) {
        Layer l{LayerKind::dense};
        l.weights = std::move(w);
        return l;
    }
    static Layer conv2d(Tensor w, Padding pad = Padding::valid) {
        Layer l{LayerKind::conv2d};
        l.weights = std::move(w);
        l.kernel = l.weights.shape.size() == 4 ? l.weights.shape[1] : 0;
        l.padding = pad;
        return l;
    }
    static Layer relu() { return Layer{LayerKind::relu}; }
    static Layer maxpool2d(std::size_t pool, std::size_t stride) {
        Layer l{LayerKind::maxpool2d};
        l.pool = pool;
        l.stride = stride;
        return l;
    }
    static Layer sigmoid_layer() { return Layer{LayerKind::sigmoid}; }
    static Layer softmax() { return Layer{LayerKind::softmax}; }
    static Layer bias_add(Tensor b) {
        Layer l{LayerKind::bias_add};
        l.weights = std::move(b);
        return l;
    }
    static Layer flatten() { return Layer{LayerKind::flatten}; }
    static Layer square() { return Layer{LayerKind::square}; }
};

namespace detail {

[[noreturn]] inline void layer_error(std::size_t index, const Layer& l, const std::string& msg) {
    throw std::invalid_argument("layer " + std::to_string(index) + " (" +
                                layer_kind_name(l.kind) + "): " + msg);
}

inline Shape layer_output_shape(const Layer& l, const Shape& in, std::size_t index) {
    switch (l.kind) {
        case LayerKind::dense: {
            if (l.weights.rank() != 2) layer_error(index, l, "weights must be rank-2");
            if (in.size() != 1 || in[0] != l.weights.shape[1])
                layer_error(index, l,
                            "expects rank-1 input of length " + std::to_string(l.weights.shape[1]) +
                                ", got " + shape_str(in));
            return {l.weights.shape[0]};
        }
        case LayerKind::conv2d: {
            if (l.weights.rank() != 4 || l.weights.shape[1] != l.weights.shape[2])
                layer_error(index, l, "weights must be {out, k, k, in} with square kernel");
            if (in.size() != 3) layer_error(index, l, "expects rank-3 input, got " + shape_str(in));
            const std::size_t k = l.weights.shape[1];
            if (in[2] != l.weights.shape[3])
                layer_error(index, l,
                            "input channels " + std::to_string(in[2]) + " != weight channels " +
                                std::to_string(l.weights.shape[3]));
            if (l.padding == Padding::same) {
                if (k % 2 == 0) layer_error(index, l, "same padding requires odd kernel");
                return {in[0], in[1], l.weights.shape[0]};
            }
            if (in[0] < k || in[1] < k)
                layer_error(index, l, "input " + shape_str(in) + " smaller than kernel");
            return {in[0] - k + 1, in[1] - k + 1, l.weights.shape[0]};
        }
        case LayerKind::relu:
        case LayerKind::sigmoid:
        case LayerKind::square:
            return in;
        case LayerKind::softmax: {
            if (in.size() != 1) layer_error(index, l, "expects rank-1 input, got " + shape_str(in));
            return in;
        }
        case LayerKind::maxpool2d: {
            if (in.size() != 3) layer_error(index, l, "expects rank-3 input, got " + shape_str(in));
            if (l.pool == 0 || l.stride == 0) layer_error(index, l, "pool and stride must be positive");
            if (in[0] < l.pool || in[1] < l.pool)
                layer_error(index, l, "input " + shape_str(in) + " smaller than pool window");
            return {(in[0] - l.pool) / l.stride + 1, (in[1] - l.pool) / l.stride + 1, in[2]};
        }
        case LayerKind::bias_add: {
            if (in.size() == 3) {
                if (l.weights.rank() != 1 || l.weights.shape[0] != in[2])
                    layer_error(index, l, "bias must have one entry per channel");
            } else if (in.size() == 1) {
                if (l.weights.rank() != 1 || l.weights.shape[0] != in[0])
                    layer_error(index, l, "bias length must match input length");
            } else {
                layer_error(index, l, "expects rank-1 or rank-3 input, got " + shape_str(in));
            }
            return in;
        }
        case LayerKind::flatten:
            return {shape_size(in)};
    }
    layer_error(index, l, "unknown layer kind");
}

}  // namespace detail

// Fixed-weight feedforward chain. Immutable after construction; all
// evaluation entry points are pure functions of (network, input).
struct Network {
    std::vector<Layer> layers;
    Shape input_shape;
    Shape output_shape;
};

inline Network make_network(Shape input_shape, std::vector<Layer> layers) {
    Network net;
    net.input_shape = std::move(input_shape);
    net.layers = std::move(layers);
    Shape cur = net.input_shape;
    for (std::size_t i = 0; i < net.layers.size(); ++i)
        cur = detail::layer_output_shape(net.layers[i], cur, i);
    net.output_shape = cur;
    return net;
}

namespace detail {

inline Tensor layer_forward(const Layer& l, const Tensor& in, std::size_t index) {
    switch (l.kind) {
        case LayerKind::dense: {
            Tensor out({l.weights.shape[0]});
            const std::size_t m = l.weights.shape[0], n = l.weights.shape[1];
            for (std::size_t r = 0; r < m; ++r) {
                double s = 0.0;
                for (std::size_t c = 0; c < n; ++c) s += l.weights[r * n + c] * in[c];
                out[r] = s;
            }
            return out;
        }
        case LayerKind::conv2d: {
            const std::size_t k = l.kernel;
            const std::size_t co = l.weights.shape[0], ci = l.weights.shape[3];
            const std::size_t ih = in.shape[0], iw = in.shape[1];
            const std::ptrdiff_t pad = l.padding == Padding::same ? (std::ptrdiff_t)(k / 2) : 0;
            const std::size_t oh = l.padding == Padding::same ? ih : ih - k + 1;
            const std::size_t ow = l.padding == Padding::same ? iw : iw - k + 1;
            Tensor out({oh, ow, co});
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    for (std::size_t f = 0; f < co; ++f) {
                        double s = 0.0;
                        for (std::size_t ky = 0; ky < k; ++ky) {
                            std::ptrdiff_t iy = (std::ptrdiff_t)(oy + ky) - pad;
                            if (iy < 0 || iy >= (std::ptrdiff_t)ih) continue;
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                std::ptrdiff_t ix = (std::ptrdiff_t)(ox + kx) - pad;
                                if (ix < 0 || ix >= (std::ptrdiff_t)iw) continue;
                                const double* wrow = l.weights.data.data() +
                                                     ((f * k + ky) * k + kx) * ci;
                                const double* irow = in.data.data() +
                                                     ((std::size_t)iy * iw + (std::size_t)ix) * ci;
                                for (std::size_t c = 0; c < ci; ++c) s += wrow[c] * irow[c];
                            }
                        }
                        out.at(oy, ox, f) = s;
                    }
                }
            }
            return out;
        }
        case LayerKind::relu: {
            Tensor out = in;
            for (double& x : out.data) x = x > 0.0 ? x : 0.0;
            return out;
        }
        case LayerKind::sigmoid: {
            Tensor out = in;
            for (double& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
            return out;
        }
        case LayerKind::square: {
            Tensor out = in;
            for (double& x : out.data) x = x * x;
            return out;
        }
        case LayerKind::softmax: {
            Tensor out = in;
            double mx = *std::max_element(out.data.begin(), out.data.end());
            double sum = 0.0;
            for (double& x : out.data) {
                x = std::exp(x - mx);
                sum += x;
            }
            for (double& x : out.data) x /= sum;
            return out;
        }
        case LayerKind::maxpool2d: {
            const std::size_t p = l.pool, st = l.stride;
            const std::size_t oh = (in.shape[0] - p) / st + 1, ow = (in.shape[1] - p) / st + 1;
            const std::size_t ch = in.shape[2];
            Tensor out({oh, ow, ch});
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox)
                    for (std::size_t c = 0; c < ch; ++c) {
                        double best = in.at(oy * st, ox * st, c);
                        for (std::size_t dy = 0; dy < p; ++dy)
                            for (std::size_t dx = 0; dx < p; ++dx)
                                best = std::max(best, in.at(oy * st + dy, ox * st + dx, c));
                        out.at(oy, ox, c) = best;
                    }
            return out;
        }
        case LayerKind::bias_add: {
            Tensor out = in;
            if (in.rank() == 3) {
                const std::size_t ch = in.shape[2];
                for (std::size_t i = 0; i < out.size(); ++i) out[i] += l.weights[i % ch];
            } else {
                for (std::size_t i = 0; i < out.size(); ++i) out[i] += l.weights[i];
            }
            return out;
        }
        case LayerKind::flatten:
            return in.reshaped({in.size()});
    }
    layer_error(index, l, "unknown layer kind");
}

// Gradient w.r.t. the layer input. `in` is the stored forward input, `out`
// the stored forward output.
inline Tensor layer_backward(const Layer& l, const Tensor& in, const Tensor& out,
                             const Tensor& cot, std::size_t index) {
    switch (l.kind) {
        case LayerKind::dense: {
            const std::size_t m = l.weights.shape[0], n = l.weights.shape[1];
            Tensor din({n});
            for (std::size_t r = 0; r < m; ++r) {
                double cr = cot[r];
                if (cr == 0.0) continue;
                for (std::size_t c = 0; c < n; ++c) din[c] += l.weights[r * n + c] * cr;
            }
            return din;
        }
        case LayerKind::conv2d: {
            const std::size_t k = l.kernel;
            const std::size_t co = l.weights.shape[0], ci = l.weights.shape[3];
            const std::size_t ih = in.shape[0], iw = in.shape[1];
            const std::ptrdiff_t pad = l.padding == Padding::same ? (std::ptrdiff_t)(k / 2) : 0;
            const std::size_t oh = out.shape[0], ow = out.shape[1];
            Tensor din(in.shape);
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    for (std::size_t f = 0; f < co; ++f) {
                        double g = cot.at(oy, ox, f);
                        if (g == 0.0) continue;
                        for (std::size_t ky = 0; ky < k; ++ky) {
                            std::ptrdiff_t iy = (std::ptrdiff_t)(oy + ky) - pad;
                            if (iy < 0 || iy >= (std::ptrdiff_t)ih) continue;
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                std::ptrdiff_t ix = (std::ptrdiff_t)(ox + kx) - pad;
                                if (ix < 0 || ix >= (std::ptrdiff_t)iw) continue;
                                const double* wrow = l.weights.data.data() +
                                                     ((f * k + ky) * k + kx) * ci;
                                double* drow = din.data.data() +
                                               ((std::size_t)iy * iw + (std::size_t)ix) * ci;
                                for (std::size_t c = 0; c < ci; ++c) drow[c] += wrow[c] * g;
                            }
                        }
                    }
                }
            }
            return din;
        }
        case LayerKind::relu: {
            Tensor din = cot;
            for (std::size_t i = 0; i < din.size(); ++i)
                if (in[i] <= 0.0) din[i] = 0.0;
            return din;
        }
        case LayerKind::sigmoid: {
            Tensor din = cot;
            for (std::size_t i = 0; i < din.size(); ++i) din[i] *= out[i] * (1.0 - out[i]);
            return din;
        }
        case LayerKind::square: {
            Tensor din = cot;
            for (std::size_t i = 0; i < din.size(); ++i) din[i] *= 2.0 * in[i];
            return din;
        }
        case LayerKind::softmax: {
            double cs = 0.0;
            for (std::size_t i = 0; i < cot.size(); ++i) cs += cot[i] * out[i];
            Tensor din = cot;
            for (std::size_t i = 0; i < din.size(); ++i) din[i] = out[i] * (cot[i] - cs);
            return din;
        }
        case LayerKind::maxpool2d: {
            // ties: first occurrence in row-major window scan receives the gradient
            const std::size_t p = l.pool, st = l.stride;
            const std::size_t oh = out.shape[0], ow = out.shape[1], ch = in.shape[2];
            Tensor din(in.shape);
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox)
                    for (std::size_t c = 0; c < ch; ++c) {
                        double best = in.at(oy * st, ox * st, c);
                        std::size_t by = oy * st, bx = ox * st;
                        for (std::size_t dy = 0; dy < p; ++dy)
                            for (std::size_t dx = 0; dx < p; ++dx) {
                                double val = in.at(oy * st + dy, ox * st + dx, c);
                                if (val > best) {
                                    best = val;
                                    by = oy * st + dy;
                                    bx = ox * st + dx;
                                }
                            }
                        din.at(by, bx, c) += cot.at(oy, ox, c);
                    }
            return din;
        }
        case LayerKind::bias_add:
            return cot;
        case LayerKind::flatten:
            return cot.reshaped(in.shape);
    }
    layer_error(index, l, "unknown layer kind");
}

}  // namespace detail

// Forward pass keeping every layer boundary value; values[i] is the input of
// layer i, values.back() the network output.
struct ForwardTrace {
    std::vector<Tensor> values;
    const Tensor& output() const { return values.back(); }
};

inline ForwardTrace forward_trace(const Network& net, const Tensor& v) {
    if (v.shape != net.input_shape)
        throw std::invalid_argument("forward: input shape " + shape_str(v.shape) +
                                    " does not match network input " + shape_str(net.input_shape));
    ForwardTrace trace;
    trace.values.reserve(net.layers.size() + 1);
    trace.values.push_back(v);
    for (std::size_t i = 0; i < net.layers.size(); ++i)
        trace.values.push_back(detail::layer_forward(net.layers[i], trace.values.back(), i));
    return trace;
}

inline Tensor forward(const Network& net, const Tensor& v) {
    Tensor out = forward_trace(net, v).output();
    if (!out.all_finite()) throw std::runtime_error("forward: non-finite activations");
    return out;
}

inline Tensor backward(const Network& net, const ForwardTrace& trace, const Tensor& cotangent) {
    if (cotangent.shape != net.output_shape)
        throw std::invalid_argument("backward: cotangent shape " + shape_str(cotangent.shape) +
                                    " does not match network output " +
                                    shape_str(net.output_shape));
    Tensor cot = cotangent;
    for (std::size_t i = net.layers.size(); i-- > 0;)
        cot = detail::layer_backward(net.layers[i], trace.values[i], trace.values[i + 1], cot, i);
    return cot;
}

// c^T * Dnet(v), reshaped to v.shape.
inline Tensor vjp(const Network& net, const Tensor& v, const Tensor& cotangent) {
    Tensor grad = backward(net, forward_trace(net, v), cotangent);
    if (!grad.all_finite()) throw std::runtime_error("vjp: non-finite gradient");
    return grad;
}

// Full Jacobian of the (flattened) network output w.r.t. the flattened input.
// Rows are independent backward passes from a shared forward trace, so the
// result does not depend on evaluation order.
inline JacobianMatrix jacobian(const Network& net, const Tensor& v) {
    ForwardTrace trace = forward_trace(net, v);
    const std::size_t n_f = trace.output().size();
    const std::size_t n_p = v.size();
    JacobianMatrix jac(n_f, n_p);
    for (std::size_t f = 0; f < n_f; ++f) {
        Tensor cot(net.output_shape);
        cot[f] = 1.0;
        Tensor row = backward(net, trace, cot);
        if (!row.all_finite()) throw std::runtime_error("jacobian: non-finite row");
        std::copy(row.data.begin(), row.data.end(), jac.data.begin() + f * n_p);
    }
    return jac;
}

}  // namespace ifv
