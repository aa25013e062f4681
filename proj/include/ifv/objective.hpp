#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ifv/linalg.hpp"
#include "ifv/tensor.hpp"

namespace ifv {

// Unit vector on the n_f-sphere of feature directions.
struct FeatureObjective {
    std::vector<double> x;

    std::size_t dim() const { return x.size(); }

    static FeatureObjective unit(std::vector<double> v) {
        double n = norm2(v);
        if (n == 0.0) throw std::domain_error("FeatureObjective: zero vector");
        scale(v, 1.0 / n);
        return FeatureObjective{std::move(v)};
    }

    static FeatureObjective canonical(std::size_t n, std::size_t i) {
        std::vector<double> v(n, 0.0);
        v.at(i) = 1.0;
        return FeatureObjective{std::move(v)};
    }
};

struct FeatureResponse {
    std::vector<double> y;

    std::size_t dim() const { return y.size(); }
    double norm() const { return norm2(y); }
    std::vector<double> unit() const {
        double n = norm();
        if (n == 0.0) throw std::domain_error("FeatureResponse: zero response has no direction");
        return scaled(y, 1.0 / n);
    }
};

enum class Aggregation { maxpool_mean, mean, pick_center };

inline std::string aggregation_name(Aggregation a) {
    switch (a) {
        case Aggregation::maxpool_mean: return "maxpool_mean";
        case Aggregation::mean: return "mean";
        case Aggregation::pick_center: return "pick_center";
    }
    return "?";
}

struct SignificanceConfig {
    int k = 2;  // cosine power
    Aggregation aggregation = Aggregation::maxpool_mean;
};

// Reduce a (H, W, n_f) activation tensor to one value per feature. Rank-1
// activations pass through unchanged (agg = Id). maxpool_mean uses a 3x3
// window with stride 1, valid (unpadded), then averages the pooled map.
inline FeatureResponse aggregate(const Tensor& activations, const SignificanceConfig& cfg) {
    if (activations.rank() == 1) return FeatureResponse{activations.data};
    if (activations.rank() != 3)
        throw std::invalid_argument("aggregate: expects rank-1 or rank-3 activations, got " +
                                    shape_str(activations.shape));
    const std::size_t h = activations.shape[0], w = activations.shape[1],
                      n_f = activations.shape[2];
    std::vector<double> y(n_f, 0.0);
    switch (cfg.aggregation) {
        case Aggregation::mean: {
            for (std::size_t i = 0; i < activations.size(); ++i) y[i % n_f] += activations[i];
            const double inv = 1.0 / static_cast<double>(h * w);
            for (double& v : y) v *= inv;
            return FeatureResponse{std::move(y)};
        }
        case Aggregation::pick_center: {
            const std::size_t cy = h / 2, cx = w / 2;
            for (std::size_t f = 0; f < n_f; ++f) y[f] = activations.at(cy, cx, f);
            return FeatureResponse{std::move(y)};
        }
        case Aggregation::maxpool_mean: {
            if (h < 3 || w < 3)
                throw std::invalid_argument("aggregate: maxpool_mean needs spatial dims >= 3, got " +
                                            shape_str(activations.shape));
            const std::size_t ph = h - 2, pw = w - 2;
            const double inv = 1.0 / static_cast<double>(ph * pw);
            for (std::size_t f = 0; f < n_f; ++f) {
                double acc = 0.0;
                for (std::size_t oy = 0; oy < ph; ++oy)
                    for (std::size_t ox = 0; ox < pw; ++ox) {
                        double best = activations.at(oy, ox, f);
                        for (std::size_t dy = 0; dy < 3; ++dy)
                            for (std::size_t dx = 0; dx < 3; ++dx)
                                best = std::max(best, activations.at(oy + dy, ox + dx, f));
                        acc += best;
                    }
                y[f] = acc * inv;
            }
            return FeatureResponse{std::move(y)};
        }
    }
    throw std::logic_error("aggregate: unknown aggregation");
}

// Gradient of the aggregation w.r.t. the activations, given a cotangent per
// feature. Maxpool ties route to the first window position in row-major scan
// order, matching the pooling layer.
inline Tensor aggregate_vjp(const Tensor& activations, const SignificanceConfig& cfg,
                            const std::vector<double>& cotangent) {
    if (activations.rank() == 1) {
        if (cotangent.size() != activations.size())
            throw std::invalid_argument("aggregate_vjp: cotangent length mismatch");
        return Tensor(activations.shape, cotangent);
    }
    const std::size_t h = activations.shape[0], w = activations.shape[1],
                      n_f = activations.shape[2];
    if (cotangent.size() != n_f)
        throw std::invalid_argument("aggregate_vjp: cotangent length mismatch");
    Tensor grad(activations.shape);
    switch (cfg.aggregation) {
        case Aggregation::mean: {
            const double inv = 1.0 / static_cast<double>(h * w);
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = cotangent[i % n_f] * inv;
            return grad;
        }
        case Aggregation::pick_center: {
            for (std::size_t f = 0; f < n_f; ++f) grad.at(h / 2, w / 2, f) = cotangent[f];
            return grad;
        }
        case Aggregation::maxpool_mean: {
            const std::size_t ph = h - 2, pw = w - 2;
            const double inv = 1.0 / static_cast<double>(ph * pw);
            for (std::size_t f = 0; f < n_f; ++f) {
                const double g = cotangent[f] * inv;
                for (std::size_t oy = 0; oy < ph; ++oy)
                    for (std::size_t ox = 0; ox < pw; ++ox) {
                        double best = activations.at(oy, ox, f);
                        std::size_t by = oy, bx = ox;
                        for (std::size_t dy = 0; dy < 3; ++dy)
                            for (std::size_t dx = 0; dx < 3; ++dx) {
                                double val = activations.at(oy + dy, ox + dx, f);
                                if (val > best) {
                                    best = val;
                                    by = oy + dy;
                                    bx = ox + dx;
                                }
                            }
                        grad.at(by, bx, f) += g;
                    }
            }
            return grad;
        }
    }
    throw std::logic_error("aggregate_vjp: unknown aggregation");
}

// S_x(y) = (x^T y) * (x^T y / ||y||)^k
inline double significance(const FeatureObjective& x, const FeatureResponse& y, int k) {
    if (k < 0) throw std::invalid_argument("significance: k must be nonnegative");
    double n = y.norm();
    if (n == 0.0) throw std::domain_error("significance: undefined for zero feature response");
    double xy = dot(x.x, y.y);
    return xy * std::pow(xy / n, k);
}

// dS_x/dy by the product rule:
//   dS/dy_i = q^k x_i + (x^T y) k q^(k-1) (x_i - q ybar_i) / ||y||
// This is the reverse-mode route; the closed-form route below reorganizes the
// same expression through Z_k.
inline std::vector<double> significance_grad_y(const FeatureObjective& x, const FeatureResponse& y,
                                               int k) {
    double n = y.norm();
    if (n == 0.0) throw std::domain_error("significance: undefined for zero feature response");
    std::vector<double> ybar = scaled(y.y, 1.0 / n);
    double xy = dot(x.x, y.y);
    double q = dot(x.x, ybar);
    double qk = std::pow(q, k);
    std::vector<double> grad(x.dim());
    if (k == 0) return x.x;
    double qk1 = std::pow(q, k - 1);
    for (std::size_t i = 0; i < grad.size(); ++i)
        grad[i] = qk * x.x[i] + xy * k * qk1 * (x.x[i] - q * ybar[i]) / n;
    return grad;
}

// Z_k(y) = Id - k/(k+1) ybar ybar^T
inline Matrix z_matrix(const FeatureResponse& y, int k) {
    if (k < 0) throw std::invalid_argument("z_matrix: k must be nonnegative");
    std::vector<double> ybar = y.unit();
    const std::size_t n = ybar.size();
    Matrix z = Matrix::identity(n);
    const double f = static_cast<double>(k) / static_cast<double>(k + 1);
    // f * (a*b) keeps z(r,c) == z(c,r) exact; (f*a)*b would not
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) z(r, c) -= f * (ybar[r] * ybar[c]);
    return z;
}

// Z_k(y)^{-1} = Id + k ybar ybar^T (Sherman-Morrison)
inline Matrix z_inverse(const FeatureResponse& y, int k) {
    if (k < 0) throw std::invalid_argument("z_inverse: k must be nonnegative");
    std::vector<double> ybar = y.unit();
    const std::size_t n = ybar.size();
    Matrix z = Matrix::identity(n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c)
            z(r, c) += static_cast<double>(k) * (ybar[r] * ybar[c]);
    return z;
}

struct SignificanceEval {
    double value = 0.0;            // S_x(y)
    double q = 0.0;                // cosine term x^T ybar
    std::vector<double> grad_row;  // (k+1) q^k x^T Z_k(y) Dy, length n_p
};

// Closed-form gradient of the full objective chain at a point where y and
// Dy = D(agg o N o P) have already been evaluated.
inline SignificanceEval closed_form_gradient(const FeatureObjective& x, const FeatureResponse& y,
                                             const JacobianMatrix& jac, int k) {
    if (x.dim() != y.dim() || jac.rows != y.dim())
        throw std::invalid_argument("closed_form_gradient: dimension mismatch");
    double n = y.norm();
    if (n == 0.0) throw std::domain_error("closed_form_gradient: zero feature response");
    std::vector<double> ybar = scaled(y.y, 1.0 / n);
    double q = dot(x.x, ybar);

    // w = Z_k(y) x without materializing Z
    const double f = static_cast<double>(k) / static_cast<double>(k + 1);
    std::vector<double> w = x.x;
    axpy(w, -f * q, ybar);

    std::vector<double> grad = vecmat(w, jac);
    scale(grad, static_cast<double>(k + 1) * std::pow(q, k));

    SignificanceEval out;
    out.value = dot(x.x, y.y) * std::pow(q, k);
    out.q = q;
    out.grad_row = std::move(grad);
    return out;
}

}  // namespace ifv
