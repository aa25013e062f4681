#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ifv/fft.hpp"
#include "ifv/tensor.hpp"

namespace ifv {

enum class ParamKind { rgb, fft, ffte };

inline std::string param_kind_name(ParamKind k) {
    switch (k) {
        case ParamKind::rgb: return "rgb";
        case ParamKind::fft: return "fft";
        case ParamKind::ffte: return "ffte";
    }
    return "?";
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Differentiable surjective map from n_p = H*W*C unconstrained parameters to
// images in (0,1)^{H x W x C}.
//
//   rgb   pixel-space parameters, sigmoid clamped
//   fft   parameters are a packed real half-spectrum per channel; inverse
//         2D FFT (1/(H*W) normalization), then sigmoid
//   ffte  as fft, with coefficients scaled by a per-frequency energy factor
//         1/max(fx^2+fy^2, 1)^(1/2), normalized to unit mean, before the
//         inverse transform
//
// Half-spectrum packing (per channel, scan (u,w) row-major over the H x W
// frequency grid, conjugate partner (u',w') = ((H-u)%H, (W-w)%W)):
//   - self-conjugate points (u,w) == (u',w'): one parameter, the real
//     coefficient;
//   - (u,w) lexicographically before (u',w'): two parameters (re, im) for
//     F[u][w], partner gets the conjugate;
//   - remaining points are filled by their partner.
// Parameters are consumed in scan order; this packs exactly H*W reals.
struct Parametrization {
    ParamKind kind = ParamKind::rgb;
    std::size_t height = 0, width = 0, channels = 0;
    std::vector<double> energy_scale;  // per packed slot, length H*W; empty for rgb/fft

    std::size_t param_count() const { return height * width * channels; }
};

namespace detail {

inline void pack_halfspectrum(const double* v, std::size_t h, std::size_t w,
                              std::vector<std::complex<double>>& grid) {
    grid.assign(h * w, {0.0, 0.0});
    std::size_t idx = 0;
    for (std::size_t u = 0; u < h; ++u) {
        for (std::size_t x = 0; x < w; ++x) {
            std::size_t u2 = (h - u) % h, x2 = (w - x) % w;
            if (u2 == u && x2 == x) {
                grid[u * w + x] = {v[idx], 0.0};
                idx += 1;
            } else if (u < u2 || (u == u2 && x < x2)) {
                grid[u * w + x] = {v[idx], v[idx + 1]};
                grid[u2 * w + x2] = {v[idx], -v[idx + 1]};
                idx += 2;
            }
        }
    }
}

inline void unpack_halfspectrum(const std::vector<std::complex<double>>& grid, std::size_t h,
                                std::size_t w, double* v) {
    std::size_t idx = 0;
    for (std::size_t u = 0; u < h; ++u) {
        for (std::size_t x = 0; x < w; ++x) {
            std::size_t u2 = (h - u) % h, x2 = (w - x) % w;
            if (u2 == u && x2 == x) {
                v[idx] = grid[u * w + x].real();
                idx += 1;
            } else if (u < u2 || (u == u2 && x < x2)) {
                v[idx] = grid[u * w + x].real();
                v[idx + 1] = grid[u * w + x].imag();
                idx += 2;
            }
        }
    }
}

// Adjoint of pack_halfspectrum under the real pairing.
inline void pack_adjoint(const std::vector<std::complex<double>>& grid, std::size_t h,
                         std::size_t w, double* dv) {
    std::size_t idx = 0;
    for (std::size_t u = 0; u < h; ++u) {
        for (std::size_t x = 0; x < w; ++x) {
            std::size_t u2 = (h - u) % h, x2 = (w - x) % w;
            if (u2 == u && x2 == x) {
                dv[idx] = grid[u * w + x].real();
                idx += 1;
            } else if (u < u2 || (u == u2 && x < x2)) {
                dv[idx] = grid[u * w + x].real() + grid[u2 * w + x2].real();
                dv[idx + 1] = grid[u * w + x].imag() - grid[u2 * w + x2].imag();
                idx += 2;
            }
        }
    }
}

inline std::vector<double> frequency_energy_scale(std::size_t h, std::size_t w) {
    std::vector<double> slot(h * w, 0.0);
    std::size_t idx = 0;
    double sum = 0.0;
    auto freq = [](std::size_t i, std::size_t n) {
        return i <= n / 2 ? static_cast<double>(i)
                          : static_cast<double>(i) - static_cast<double>(n);
    };
    for (std::size_t u = 0; u < h; ++u) {
        for (std::size_t x = 0; x < w; ++x) {
            std::size_t u2 = (h - u) % h, x2 = (w - x) % w;
            double fu = freq(u, h), fx = freq(x, w);
            double e = 1.0 / std::sqrt(std::max(fu * fu + fx * fx, 1.0));
            if (u2 == u && x2 == x) {
                slot[idx++] = e;
                sum += e;
            } else if (u < u2 || (u == u2 && x < x2)) {
                slot[idx++] = e;
                slot[idx++] = e;
                sum += 2.0 * e;
            }
        }
    }
    double mean = sum / static_cast<double>(h * w);
    for (double& s : slot) s /= mean;
    return slot;
}

}  // namespace detail

inline Parametrization make_parametrization(ParamKind kind, std::size_t height, std::size_t width,
                                            std::size_t channels) {
    if (height == 0 || width == 0 || channels == 0)
        throw std::invalid_argument("make_parametrization: zero dimension");
    if (kind != ParamKind::rgb && (!is_pow2(height) || !is_pow2(width)))
        throw std::invalid_argument("make_parametrization: " + param_kind_name(kind) +
                                    " requires power-of-two spatial dims, got " +
                                    std::to_string(height) + "x" + std::to_string(width));
    Parametrization p;
    p.kind = kind;
    p.height = height;
    p.width = width;
    p.channels = channels;
    if (kind == ParamKind::ffte) p.energy_scale = detail::frequency_energy_scale(height, width);
    return p;
}

inline Tensor apply(const Parametrization& p, const Tensor& v) {
    if (v.size() != p.param_count())
        throw std::invalid_argument("parametrize::apply: expected " +
                                    std::to_string(p.param_count()) + " parameters, got " +
                                    std::to_string(v.size()));
    const std::size_t hw = p.height * p.width;
    Tensor img({p.height, p.width, p.channels});
    if (p.kind == ParamKind::rgb) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            std::size_t ch = i / hw, pix = i % hw;
            img.data[pix * p.channels + ch] = sigmoid(v[i]);
        }
        return img;
    }
    std::vector<double> coeffs(hw);
    std::vector<std::complex<double>> grid;
    for (std::size_t ch = 0; ch < p.channels; ++ch) {
        const double* slice = v.data.data() + ch * hw;
        if (p.kind == ParamKind::ffte) {
            for (std::size_t i = 0; i < hw; ++i) coeffs[i] = slice[i] * p.energy_scale[i];
        } else {
            std::copy(slice, slice + hw, coeffs.begin());
        }
        detail::pack_halfspectrum(coeffs.data(), p.height, p.width, grid);
        fft2d(grid, p.height, p.width, /*inverse=*/true);
        for (std::size_t pix = 0; pix < hw; ++pix)
            img.data[pix * p.channels + ch] = sigmoid(grid[pix].real());
    }
    return img;
}

inline Tensor apply_vjp(const Parametrization& p, const Tensor& v, const Tensor& cotangent) {
    if (v.size() != p.param_count())
        throw std::invalid_argument("parametrize::apply_vjp: parameter count mismatch");
    if (cotangent.size() != p.param_count())
        throw std::invalid_argument("parametrize::apply_vjp: cotangent shape mismatch");
    const std::size_t hw = p.height * p.width;
    Tensor dv(v.shape);
    if (p.kind == ParamKind::rgb) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            std::size_t ch = i / hw, pix = i % hw;
            double s = sigmoid(v[i]);
            dv[i] = cotangent.data[pix * p.channels + ch] * s * (1.0 - s);
        }
        return dv;
    }
    std::vector<double> coeffs(hw);
    std::vector<std::complex<double>> grid;
    const double inv_hw = 1.0 / static_cast<double>(hw);
    for (std::size_t ch = 0; ch < p.channels; ++ch) {
        const double* slice = v.data.data() + ch * hw;
        if (p.kind == ParamKind::ffte) {
            for (std::size_t i = 0; i < hw; ++i) coeffs[i] = slice[i] * p.energy_scale[i];
        } else {
            std::copy(slice, slice + hw, coeffs.begin());
        }
        detail::pack_halfspectrum(coeffs.data(), p.height, p.width, grid);
        fft2d(grid, p.height, p.width, /*inverse=*/true);
        // chain the sigmoid, then the adjoint of the inverse transform
        for (std::size_t pix = 0; pix < hw; ++pix) {
            double s = sigmoid(grid[pix].real());
            grid[pix] = {cotangent.data[pix * p.channels + ch] * s * (1.0 - s), 0.0};
        }
        fft2d(grid, p.height, p.width, /*inverse=*/false);
        for (auto& g : grid) g *= inv_hw;
        double* dslice = dv.data.data() + ch * hw;
        detail::pack_adjoint(grid, p.height, p.width, dslice);
        if (p.kind == ParamKind::ffte)
            for (std::size_t i = 0; i < hw; ++i) dslice[i] *= p.energy_scale[i];
    }
    return dv;
}

// Parameter vector reproducing a given image in (0,1)^{H x W x C} exactly
// (up to transform round-off). Used to witness surjectivity.
inline Tensor preimage(const Parametrization& p, const Tensor& img) {
    if (img.shape != Shape{p.height, p.width, p.channels})
        throw std::invalid_argument("parametrize::preimage: image shape mismatch");
    const std::size_t hw = p.height * p.width;
    Tensor v({p.param_count()});
    for (double x : img.data)
        if (!(x > 0.0 && x < 1.0))
            throw std::domain_error("parametrize::preimage: image values must lie in (0,1)");
    if (p.kind == ParamKind::rgb) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            std::size_t ch = i / hw, pix = i % hw;
            v[i] = logit(img.data[pix * p.channels + ch]);
        }
        return v;
    }
    std::vector<std::complex<double>> grid(hw);
    for (std::size_t ch = 0; ch < p.channels; ++ch) {
        for (std::size_t pix = 0; pix < hw; ++pix)
            grid[pix] = {logit(img.data[pix * p.channels + ch]), 0.0};
        fft2d(grid, p.height, p.width, /*inverse=*/false);
        double* slice = v.data.data() + ch * hw;
        detail::unpack_halfspectrum(grid, p.height, p.width, slice);
        if (p.kind == ParamKind::ffte)
            for (std::size_t i = 0; i < hw; ++i) slice[i] /= p.energy_scale[i];
    }
    return v;
}

}  // namespace ifv
