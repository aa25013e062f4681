#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ifv/linalg.hpp"
#include "ifv/objective.hpp"

namespace ifv {

// Orthonormal column basis of a subspace of feature space. dim() == 0 is the
// trivial space, dim() == ambient_dim the full space (no filtering).
struct SubspaceBasis {
    std::size_t ambient_dim = 0;
    Matrix basis;  // ambient_dim x d
    bool degenerate = false;

    std::size_t dim() const { return basis.cols; }

    static SubspaceBasis full(std::size_t n) {
        return SubspaceBasis{n, Matrix::identity(n), false};
    }
    static SubspaceBasis empty(std::size_t n) { return SubspaceBasis{n, Matrix(n, 0), false}; }

    static SubspaceBasis from_columns(std::size_t n, const std::vector<std::vector<double>>& cols) {
        Matrix m(n, cols.size());
        for (std::size_t c = 0; c < cols.size(); ++c) m.set_col(c, cols[c]);
        return SubspaceBasis{n, std::move(m), false};
    }

    double orthonormality_residual() const {
        double worst = 0.0;
        for (std::size_t i = 0; i < basis.cols; ++i)
            for (std::size_t j = i; j < basis.cols; ++j) {
                double d = 0.0;
                for (std::size_t r = 0; r < basis.rows; ++r) d += basis(r, i) * basis(r, j);
                worst = std::max(worst, std::abs(d - (i == j ? 1.0 : 0.0)));
            }
        return worst;
    }
};

// Solution of the constrained gradient-minimization problem for one sample.
struct Prediction {
    FeatureObjective x_hat;
    std::vector<double> sigma;            // coefficients in the substitution basis, unit norm
    double smallest_singular_value = 0.0;
    std::vector<double> singular_values;  // full spectrum of M = U^T Z_k(y) Dy, descending
    Matrix substitution_u;                // n_f x d, im U = im Z_k(y)^{-1} C_M
    bool degenerate = false;              // whole spectrum vanishes; any unit x is optimal
    bool multiple_minima = false;         // smallest singular value is (numerically) repeated
};

namespace detail {

// Fix the sign so x_hat . y >= 0; on a tie, first nonzero coordinate positive.
inline double sign_convention(const std::vector<double>& x_hat, const std::vector<double>& y) {
    double d = dot(x_hat, y);
    if (d > 1e-14) return 1.0;
    if (d < -1e-14) return -1.0;
    for (double v : x_hat) {
        if (v > 0.0) return 1.0;
        if (v < 0.0) return -1.0;
    }
    return 1.0;
}

}  // namespace detail

// Minimize ||x^T Z_k(y) Dy||^2 over unit x subject to Z_k(y) x in C.
// Substitution x = U sigma with im U = im Z_k(y)^{-1} C_M reduces the problem
// to the smallest left-singular vector of M = U^T Z_k(y) Dy, obtained from
// the symmetric eigendecomposition of M M^T.
inline Prediction predict_objective(const FeatureResponse& y, const JacobianMatrix& jac, int k,
                                    const SubspaceBasis& c) {
    const std::size_t n_f = y.dim();
    if (jac.rows != n_f) throw std::invalid_argument("predict_objective: Jacobian rows != n_f");
    if (c.ambient_dim != n_f)
        throw std::invalid_argument("predict_objective: critical space ambient dim != n_f");
    if (c.dim() == 0) throw std::invalid_argument("predict_objective: empty critical space");
    if (y.norm() == 0.0) throw std::domain_error("predict_objective: zero feature response");

    const std::size_t d = c.dim();
    Matrix zinv = z_inverse(y, k);
    Matrix z = z_matrix(y, k);

    // U: orthonormal basis of im(Z^{-1} C_M)
    Matrix u;
    if (d == n_f) {
        // Z^{-1} is invertible, so the image is the full space
        u = Matrix::identity(n_f);
    } else {
        SvdResult s = svd(matmul(zinv, c.basis));
        u = Matrix(n_f, d);
        for (std::size_t r = 0; r < n_f; ++r)
            for (std::size_t j = 0; j < d; ++j) u(r, j) = s.u(r, j);
    }

    Matrix m = matmul(transpose(u), matmul(z, jac));  // d x n_p
    Matrix g = matmul(m, transpose(m));               // d x d
    EigResult eig = sym_eig(g);

    Prediction out;
    out.singular_values.resize(d);
    for (std::size_t i = 0; i < d; ++i)
        out.singular_values[i] = std::sqrt(std::max(eig.values[i], 0.0));
    out.smallest_singular_value = out.singular_values[d - 1];
    out.degenerate = out.singular_values[0] <= 0.0;
    if (d >= 2) {
        double gap = out.singular_values[d - 2] - out.singular_values[d - 1];
        out.multiple_minima = gap <= 1e-8 * std::max(out.singular_values[0], 1e-300);
    }

    std::vector<double> sigma = eig.vectors.col(d - 1);
    std::vector<double> x_hat = normalized(matvec(u, sigma));
    double s = detail::sign_convention(x_hat, y.y);
    scale(x_hat, s);
    scale(sigma, s);

    out.sigma = std::move(sigma);
    out.x_hat = FeatureObjective{std::move(x_hat)};
    out.substitution_u = std::move(u);
    return out;
}

// Best-recoverable representative of a known target under critical space C:
// normalize(Z^{-1} C_M C_M^T Z x_true). The residual of x_true outside
// im(Z^{-1} C_M) is unrecoverable by construction.
inline FeatureObjective project_objective(const FeatureObjective& x_true, const FeatureResponse& y,
                                          int k, const SubspaceBasis& c) {
    const std::size_t n_f = y.dim();
    if (x_true.dim() != n_f || c.ambient_dim != n_f)
        throw std::invalid_argument("project_objective: dimension mismatch");
    if (c.dim() == 0) throw std::invalid_argument("project_objective: empty critical space");
    if (c.dim() == n_f) return x_true;

    Matrix z = z_matrix(y, k);
    Matrix zinv = z_inverse(y, k);
    std::vector<double> zx = matvec(z, x_true.x);
    std::vector<double> coeff = vecmat(zx, c.basis);          // C_M^T Z x
    std::vector<double> back = matvec(c.basis, coeff);        // C_M C_M^T Z x
    std::vector<double> result = matvec(zinv, back);
    double n = norm2(result);
    if (n < 1e-12)
        throw std::domain_error("project_objective: target lies outside the recoverable space");
    scale(result, 1.0 / n);
    return FeatureObjective{std::move(result)};
}

// Large-k behavior: the unconstrained prediction approaches the normalized
// feature response.
inline FeatureObjective k_limit_check(const FeatureResponse& y, const JacobianMatrix& jac) {
    Prediction p = predict_objective(y, jac, 200, SubspaceBasis::full(y.dim()));
    return p.x_hat;
}

// Fraction (in norm) of x outside im(U); the part of a target the constrained
// solve cannot represent.
inline double out_of_space_fraction(const FeatureObjective& x, const Matrix& u) {
    std::vector<double> coeff = vecmat(x.x, u);
    std::vector<double> inside = matvec(u, coeff);
    std::vector<double> resid = x.x;
    axpy(resid, -1.0, inside);
    return norm2(resid);
}

}  // namespace ifv
