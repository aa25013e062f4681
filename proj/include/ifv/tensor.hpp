#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ifv {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

// Dense n-dimensional array of 64-bit floats, row-major.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(shape_size(shape), 0.0) {}
    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != shape_size(shape))
            throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    double operator[](std::size_t i) const { return data[i]; }
    double& operator[](std::size_t i) { return data[i]; }

    // (row, col, channel) access for rank-3 tensors
    double at(std::size_t r, std::size_t c, std::size_t ch) const {
        return data[(r * shape[1] + c) * shape[2] + ch];
    }
    double& at(std::size_t r, std::size_t c, std::size_t ch) {
        return data[(r * shape[1] + c) * shape[2] + ch];
    }

    Tensor reshaped(Shape s) const {
        if (shape_size(s) != data.size())
            throw std::invalid_argument("Tensor::reshaped: size mismatch " + shape_str(shape) +
                                        " -> " + shape_str(s));
        return Tensor(std::move(s), data);
    }

    bool all_finite() const {
        for (double x : data)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

// ---- small vector helpers shared across the library ----

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline void scale(std::vector<double>& a, double f) {
    for (double& x : a) x *= f;
}

inline std::vector<double> scaled(std::vector<double> a, double f) {
    scale(a, f);
    return a;
}

// a += f * b
inline void axpy(std::vector<double>& a, double f, const std::vector<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += f * b[i];
}

inline std::vector<double> normalized(const std::vector<double>& a) {
    double n = norm2(a);
    if (n == 0.0) throw std::domain_error("normalized: zero vector");
    return scaled(a, 1.0 / n);
}

inline bool all_finite(const std::vector<double>& a) {
    for (double x : a)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace ifv
