#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "ifv/tensor.hpp"

namespace ifv {

// Dense row-major matrix of 64-bit floats. Also used for Jacobians Dy
// (row f = gradient of feature response component f).
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> d)
        : rows(r), cols(c), data(std::move(d)) {
        if (data.size() != r * c) throw std::invalid_argument("Matrix: data length mismatch");
    }

    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::vector<double> row(std::size_t r) const {
        return std::vector<double>(data.begin() + r * cols, data.begin() + (r + 1) * cols);
    }

    std::vector<double> col(std::size_t c) const {
        std::vector<double> v(rows);
        for (std::size_t r = 0; r < rows; ++r) v[r] = (*this)(r, c);
        return v;
    }

    void set_col(std::size_t c, const std::vector<double>& v) {
        for (std::size_t r = 0; r < rows; ++r) (*this)(r, c) = v[r];
    }

    bool all_finite() const {
        for (double x : data)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

using JacobianMatrix = Matrix;

inline Matrix transpose(const Matrix& m) {
    Matrix t(m.cols, m.rows);
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) t(c, r) = m(r, c);
    return t;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions disagree");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
        }
    return out;
}

inline std::vector<double> matvec(const Matrix& m, const std::vector<double>& v) {
    if (m.cols != v.size()) throw std::invalid_argument("matvec: dimension mismatch");
    std::vector<double> out(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) s += m(r, c) * v[c];
        out[r] = s;
    }
    return out;
}

// x^T M as a plain vector of length M.cols
inline std::vector<double> vecmat(const std::vector<double>& x, const Matrix& m) {
    if (m.rows != x.size()) throw std::invalid_argument("vecmat: dimension mismatch");
    std::vector<double> out(m.cols, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        double xr = x[r];
        if (xr == 0.0) continue;
        for (std::size_t c = 0; c < m.cols; ++c) out[c] += xr * m(r, c);
    }
    return out;
}

inline double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double x : m.data) s += x * x;
    return std::sqrt(s);
}

inline double max_abs(const Matrix& m) {
    double s = 0.0;
    for (double x : m.data) s = std::max(s, std::abs(x));
    return s;
}

struct SvdResult {
    Matrix u;                       // rows x k, orthonormal columns
    std::vector<double> s;          // k singular values, descending
    Matrix vt;                      // k x cols, orthonormal rows
};

namespace detail {

// Fill columns [rank, k) of u with an orthonormal completion, drawn by
// Gram-Schmidt from the canonical basis. Existing columns must already be
// orthonormal.
inline void complete_columns(Matrix& u, std::size_t rank) {
    const std::size_t m = u.rows, k = u.cols;
    std::size_t next = rank;
    for (std::size_t cand = 0; cand < m && next < k; ++cand) {
        std::vector<double> v(m, 0.0);
        v[cand] = 1.0;
        for (std::size_t j = 0; j < next; ++j) {
            double d = 0.0;
            for (std::size_t r = 0; r < m; ++r) d += u(r, j) * v[r];
            for (std::size_t r = 0; r < m; ++r) v[r] -= d * u(r, j);
        }
        double n = norm2(v);
        if (n < 0.5) continue;  // candidate nearly inside the span, try the next one
        for (std::size_t r = 0; r < m; ++r) u(r, next) = v[r] / n;
        ++next;
    }
    if (next < k) throw std::runtime_error("svd: failed to complete orthonormal basis");
}

// One-sided Jacobi on a tall matrix (rows >= cols). High relative accuracy
// for small singular values, which the co-kernel analysis depends on.
inline SvdResult svd_tall(Matrix a) {
    const std::size_t m = a.rows, n = a.cols;
    Matrix v = Matrix::identity(n);

    const double tol = 1e-15;
    const std::size_t max_sweeps = 100 * std::max(m, n);
    bool converged = (n <= 1);
    for (std::size_t sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        converged = true;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t r = 0; r < m; ++r) {
                    double ap = a(r, p), aq = a(r, q);
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                if (alpha == 0.0 || beta == 0.0) continue;
                if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                converged = false;
                double zeta = (beta - alpha) / (2.0 * gamma);
                double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = c * t;
                for (std::size_t r = 0; r < m; ++r) {
                    double ap = a(r, p), aq = a(r, q);
                    a(r, p) = c * ap - s * aq;
                    a(r, q) = s * ap + c * aq;
                }
                for (std::size_t r = 0; r < n; ++r) {
                    double vp = v(r, p), vq = v(r, q);
                    v(r, p) = c * vp - s * vq;
                    v(r, q) = s * vp + c * vq;
                }
            }
        }
    }
    if (!converged) throw std::runtime_error("svd: no convergence within sweep cap");

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) {
        double s2 = 0.0;
        for (std::size_t r = 0; r < m; ++r) s2 += a(r, j) * a(r, j);
        sigma[j] = std::sqrt(s2);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });

    SvdResult out;
    out.u = Matrix(m, n);
    out.s.resize(n);
    out.vt = Matrix(n, n);
    std::size_t rank = 0;
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t src = order[j];
        out.s[j] = sigma[src];
        for (std::size_t r = 0; r < n; ++r) out.vt(j, r) = v(r, src);
        if (sigma[src] > 0.0) {
            for (std::size_t r = 0; r < m; ++r) out.u(r, j) = a(r, src) / sigma[src];
            rank = j + 1;
        }
    }
    if (rank < n) detail::complete_columns(out.u, rank);
    return out;
}

}  // namespace detail

// Thin SVD, singular values descending. Wide inputs are handled through the
// transpose, so left-singular vectors of an n_f x n_p Jacobian are complete.
inline SvdResult svd(const Matrix& m) {
    if (m.rows == 0 || m.cols == 0) throw std::invalid_argument("svd: empty matrix");
    if (!m.all_finite()) throw std::invalid_argument("svd: non-finite entries");
    if (m.rows >= m.cols) return detail::svd_tall(m);
    SvdResult t = detail::svd_tall(transpose(m));
    SvdResult out;
    out.s = std::move(t.s);
    out.u = transpose(t.vt);
    out.vt = transpose(t.u);
    return out;
}

struct EigResult {
    std::vector<double> values;  // descending
    Matrix vectors;              // eigenvector j in column j
};

// Symmetric eigendecomposition by cyclic Jacobi rotations.
inline EigResult sym_eig(const Matrix& m) {
    if (m.rows != m.cols) throw std::invalid_argument("sym_eig: matrix not square");
    if (!m.all_finite()) throw std::invalid_argument("sym_eig: non-finite entries");
    const std::size_t n = m.rows;
    double scale = max_abs(m);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = r + 1; c < n; ++c)
            if (std::abs(m(r, c) - m(c, r)) > 1e-10 * std::max(1.0, scale))
                throw std::invalid_argument("sym_eig: matrix not symmetric");

    Matrix a = m;
    Matrix v = Matrix::identity(n);
    const double anorm = frobenius_norm(a);
    const std::size_t max_sweeps = 100 * std::max<std::size_t>(n, 1);
    bool converged = (n <= 1) || anorm == 0.0;
    for (std::size_t sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (std::sqrt(2.0 * off) <= 1e-15 * anorm) {
            converged = true;
            break;
        }
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = a(p, q);
                if (std::abs(apq) <= 1e-18 * anorm) continue;
                double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
                double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;
                for (std::size_t r = 0; r < n; ++r) {
                    double arp = a(r, p), arq = a(r, q);
                    a(r, p) = c * arp - s * arq;
                    a(r, q) = s * arp + c * arq;
                }
                for (std::size_t r = 0; r < n; ++r) {
                    double apr = a(p, r), aqr = a(q, r);
                    a(p, r) = c * apr - s * aqr;
                    a(q, r) = s * apr + c * aqr;
                }
                for (std::size_t r = 0; r < n; ++r) {
                    double vrp = v(r, p), vrq = v(r, q);
                    v(r, p) = c * vrp - s * vrq;
                    v(r, q) = s * vrp + c * vrq;
                }
            }
        }
    }
    if (!converged) throw std::runtime_error("sym_eig: no convergence within sweep cap");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    EigResult out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = a(order[j], order[j]);
        for (std::size_t r = 0; r < n; ++r) out.vectors(r, j) = v(r, order[j]);
    }
    return out;
}

struct QrResult {
    Matrix q;  // rows x k, orthonormal columns (k = min(rows, cols))
    Matrix r;  // k x cols, upper triangular
};

namespace detail {

// Householder QR; returns reflectors in-place and fills tau.
inline void householder_factor(Matrix& a, std::vector<double>& tau) {
    const std::size_t m = a.rows, n = a.cols, k = std::min(m, n);
    tau.assign(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        double normx = 0.0;
        for (std::size_t r = j; r < m; ++r) normx += a(r, j) * a(r, j);
        normx = std::sqrt(normx);
        if (normx == 0.0) continue;
        double alpha = a(j, j) >= 0.0 ? -normx : normx;
        double v0 = a(j, j) - alpha;
        // v = (v0, a(j+1..m-1, j)); store normalized by v0 below the diagonal
        double vnorm2 = v0 * v0;
        for (std::size_t r = j + 1; r < m; ++r) vnorm2 += a(r, j) * a(r, j);
        if (vnorm2 == 0.0) continue;
        tau[j] = 2.0 * v0 * v0 / vnorm2;
        for (std::size_t r = j + 1; r < m; ++r) a(r, j) /= v0;
        a(j, j) = alpha;
        // apply reflector to remaining columns
        for (std::size_t c = j + 1; c < n; ++c) {
            double w = a(j, c);
            for (std::size_t r = j + 1; r < m; ++r) w += a(r, j) * a(r, c);
            w *= tau[j];
            a(j, c) -= w;
            for (std::size_t r = j + 1; r < m; ++r) a(r, c) -= w * a(r, j);
        }
    }
}

// Apply the stored reflectors (in factored a) to the first qcols columns of
// the identity, producing an m x qcols orthonormal matrix.
inline Matrix householder_q(const Matrix& a, const std::vector<double>& tau, std::size_t qcols) {
    const std::size_t m = a.rows, k = tau.size();
    Matrix q(m, qcols);
    for (std::size_t c = 0; c < qcols && c < m; ++c) q(c, c) = 1.0;
    for (std::size_t jj = k; jj-- > 0;) {
        if (tau[jj] == 0.0) continue;
        for (std::size_t c = 0; c < qcols; ++c) {
            double w = q(jj, c);
            for (std::size_t r = jj + 1; r < m; ++r) w += a(r, jj) * q(r, c);
            w *= tau[jj];
            q(jj, c) -= w;
            for (std::size_t r = jj + 1; r < m; ++r) q(r, c) -= w * a(r, jj);
        }
    }
    return q;
}

}  // namespace detail

inline QrResult qr(const Matrix& m) {
    if (m.rows == 0 || m.cols == 0) throw std::invalid_argument("qr: empty matrix");
    const std::size_t k = std::min(m.rows, m.cols);
    Matrix a = m;
    std::vector<double> tau;
    detail::householder_factor(a, tau);
    QrResult out;
    out.q = detail::householder_q(a, tau, k);
    out.r = Matrix(k, m.cols);
    for (std::size_t r = 0; r < k; ++r)
        for (std::size_t c = r; c < m.cols; ++c) out.r(r, c) = a(r, c);
    return out;
}

// Orthonormal basis of the orthogonal complement of span(basis columns).
// basis is n x d with orthonormal columns; result is n x (n - d).
inline Matrix orthonormal_complement(const Matrix& basis, std::size_t ambient_dim) {
    const std::size_t n = ambient_dim;
    const std::size_t d = basis.cols;
    if (d == 0 || basis.rows == 0) return Matrix::identity(n);
    if (basis.rows != n) throw std::invalid_argument("orthonormal_complement: ambient dim mismatch");
    if (d >= n) return Matrix(n, 0);
    Matrix a = basis;
    std::vector<double> tau;
    detail::householder_factor(a, tau);
    Matrix fullq = detail::householder_q(a, tau, n);
    Matrix out(n, n - d);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = d; c < n; ++c) out(r, c - d) = fullq(r, c);
    return out;
}

}  // namespace ifv
