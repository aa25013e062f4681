#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace ifv {

inline bool is_pow2(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, in place. Twiddles are computed directly
// per butterfly; sizes here are tiny and small-singular-value work downstream
// is sensitive to transform error. Inverse applies the 1/n factor.
inline void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (!is_pow2(n)) throw std::invalid_argument("fft_radix2: length must be a power of two");
    if (n == 1) return;

    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * 3.14159265358979323846 / static_cast<double>(len);
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t j = 0; j < len / 2; ++j) {
                std::complex<double> w = std::polar(1.0, ang * static_cast<double>(j));
                std::complex<double> u = a[i + j];
                std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
            }
        }
    }

    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& x : a) x *= inv;
    }
}

// 2D transform of a row-major h x w grid; rows first, then columns.
inline void fft2d(std::vector<std::complex<double>>& grid, std::size_t h, std::size_t w,
                  bool inverse) {
    if (grid.size() != h * w) throw std::invalid_argument("fft2d: grid size mismatch");
    std::vector<std::complex<double>> line;
    for (std::size_t r = 0; r < h; ++r) {
        line.assign(grid.begin() + r * w, grid.begin() + (r + 1) * w);
        fft_radix2(line, inverse);
        std::copy(line.begin(), line.end(), grid.begin() + r * w);
    }
    line.resize(h);
    for (std::size_t c = 0; c < w; ++c) {
        for (std::size_t r = 0; r < h; ++r) line[r] = grid[r * w + c];
        fft_radix2(line, inverse);
        for (std::size_t r = 0; r < h; ++r) grid[r * w + c] = line[r];
    }
}

}  // namespace ifv
