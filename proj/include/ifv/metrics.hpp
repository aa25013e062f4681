#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ifv/critical_space.hpp"
#include "ifv/objective.hpp"
#include "ifv/solver.hpp"
#include "ifv/tensor.hpp"

namespace ifv {

// Sign-invariant angle between unit vectors, in degrees:
// 180/pi * min(acos(-a.b), acos(a.b)) = 180/pi * acos(|a.b|).
inline double angular_distance(const FeatureObjective& a, const FeatureObjective& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("angular_distance: dimension mismatch");
    double d = std::abs(dot(a.x, b.x));
    d = std::min(d, 1.0);
    return std::acos(d) * 180.0 / 3.14159265358979323846;
}

// SSIM over 8x8 sliding windows (stride 1, uniform weights, population
// statistics), constants C1 = 0.01^2 and C2 = 0.03^2 for unit dynamic range,
// averaged over windows and channels.
inline double ssim(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) throw std::invalid_argument("ssim: image shapes differ");
    if (a.rank() != 3) throw std::invalid_argument("ssim: expects rank-3 images");
    const std::size_t h = a.shape[0], w = a.shape[1], ch = a.shape[2];
    constexpr std::size_t win = 8;
    if (h < win || w < win)
        throw std::invalid_argument("ssim: image smaller than the 8x8 window");
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    const double inv_n = 1.0 / static_cast<double>(win * win);
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < ch; ++c) {
        for (std::size_t oy = 0; oy + win <= h; ++oy) {
            for (std::size_t ox = 0; ox + win <= w; ++ox) {
                double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
                for (std::size_t rowy = oy; rowy < oy + win; ++rowy)
                    for (std::size_t rowx = ox; rowx < ox + win; ++rowx) {
                        double va = a.at(rowy, rowx, c), vb = b.at(rowy, rowx, c);
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                double mua = sa * inv_n, mub = sb * inv_n;
                double vara = saa * inv_n - mua * mua;
                double varb = sbb * inv_n - mub * mub;
                double cov = sab * inv_n - mua * mub;
                acc += ((2.0 * mua * mub + c1) * (2.0 * cov + c2)) /
                       ((mua * mua + mub * mub + c1) * (vara + varb + c2));
                ++count;
            }
        }
    }
    return acc / static_cast<double>(count);
}

// Coefficients of x_true in the left-singular basis of Z_k(y) Dy, ordered by
// ascending singular value; basis signs follow the solver's convention so
// coefficients[0] matches x_true . x_hat for the unconstrained solve.
struct Decomposition {
    std::vector<double> coefficients;
    double quad_proxy_deg = 0.0;  // 90 (1 - c_0^2), degree-two angular-distance proxy
};

inline Decomposition decompose(const FeatureObjective& x_true, const FeatureResponse& y,
                               const JacobianMatrix& jac, int k) {
    const std::size_t n_f = y.dim();
    if (x_true.dim() != n_f || jac.rows != n_f)
        throw std::invalid_argument("decompose: dimension mismatch");
    Matrix a = matmul(z_matrix(y, k), jac);
    CokernelSpectrum spec = cokernel_spectrum(a);
    Decomposition out;
    out.coefficients.resize(n_f);
    for (std::size_t j = 0; j < n_f; ++j) {
        std::vector<double> col = spec.u.col(n_f - 1 - j);  // ascending singular values
        double s = detail::sign_convention(col, y.y);
        out.coefficients[j] = s * dot(col, x_true.x);
    }
    double c0 = out.coefficients[0];
    out.quad_proxy_deg = 90.0 * (1.0 - c0 * c0);
    return out;
}

// alpha_j = mean over samples of c_{i,j}^2
inline std::vector<double> alpha_coefficients(const std::vector<Decomposition>& rows) {
    if (rows.empty()) return {};
    std::vector<double> alpha(rows[0].coefficients.size(), 0.0);
    for (const auto& r : rows)
        for (std::size_t j = 0; j < alpha.size(); ++j)
            alpha[j] += r.coefficients[j] * r.coefficients[j];
    for (double& a : alpha) a /= static_cast<double>(rows.size());
    return alpha;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median: empty");
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace ifv
