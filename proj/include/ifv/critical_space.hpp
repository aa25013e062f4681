#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <vector>

#include "ifv/linalg.hpp"
#include "ifv/solver.hpp"

namespace ifv {

struct CriticalSpaceConfig {
    double rho = 0.01;           // relative singular-value threshold, in (0,1)
    std::size_t sample_count = 32;  // Jacobians consumed by the estimate
};

// Running merged co-kernel; weight counts the subspaces folded in so far and
// sets the slerp interpolation parameter.
struct MergeState {
    SubspaceBasis basis;
    std::size_t weight = 1;
};

// Full left-singular structure of one Jacobian, cached so that thresholding
// at many rho values is a column selection.
struct CokernelSpectrum {
    Matrix u;               // n_f x n_f, complete left-singular basis
    std::vector<double> s;  // descending, padded with zeros for completed columns
    bool zero_matrix = false;
};

inline CokernelSpectrum cokernel_spectrum(const JacobianMatrix& jac) {
    if (jac.rows == 0 || jac.cols == 0)
        throw std::invalid_argument("cokernel_spectrum: empty Jacobian");
    CokernelSpectrum out;
    SvdResult dec = svd(jac);
    const std::size_t n_f = jac.rows;
    out.s.assign(n_f, 0.0);
    for (std::size_t i = 0; i < dec.s.size() && i < n_f; ++i) out.s[i] = dec.s[i];
    out.u = Matrix(n_f, n_f);
    const std::size_t have = std::min<std::size_t>(dec.u.cols, n_f);
    for (std::size_t r = 0; r < n_f; ++r)
        for (std::size_t c = 0; c < have; ++c) out.u(r, c) = dec.u(r, c);
    if (have < n_f) detail::complete_columns(out.u, have);
    out.zero_matrix = out.s[0] == 0.0;
    return out;
}

inline SubspaceBasis cokernel_at(const CokernelSpectrum& spec, double rho) {
    const std::size_t n_f = spec.u.rows;
    if (spec.zero_matrix) {
        SubspaceBasis full = SubspaceBasis::full(n_f);
        full.degenerate = true;
        return full;
    }
    const double cutoff = rho * spec.s[0];
    std::size_t first = n_f;
    for (std::size_t i = 0; i < n_f; ++i)
        if (spec.s[i] < cutoff) {
            first = i;
            break;
        }
    Matrix basis(n_f, n_f - first);
    for (std::size_t r = 0; r < n_f; ++r)
        for (std::size_t c = first; c < n_f; ++c) basis(r, c - first) = spec.u(r, c);
    return SubspaceBasis{n_f, std::move(basis), false};
}

// Left-singular vectors of jac with sigma < rho * sigma_max. A zero Jacobian
// yields the full space, flagged degenerate.
inline SubspaceBasis approx_cokernel(const JacobianMatrix& jac, double rho) {
    return cokernel_at(cokernel_spectrum(jac), rho);
}

struct PrincipalAngles {
    std::vector<double> angles_deg;  // ascending, in [0, 90]
    Matrix left;                     // ambient x pairs, unit columns from a
    Matrix right;                    // ambient x pairs, unit columns from b
};

// Principal angles and paired vectors between two subspaces, via the SVD of
// A^T B with the sine-based evaluation of small angles (Knyazev-Argentati).
inline PrincipalAngles principal_angles(const SubspaceBasis& a, const SubspaceBasis& b) {
    if (a.ambient_dim != b.ambient_dim)
        throw std::invalid_argument("principal_angles: ambient dimensions differ");
    PrincipalAngles out;
    if (a.dim() == 0 || b.dim() == 0) {
        out.left = Matrix(a.ambient_dim, 0);
        out.right = Matrix(a.ambient_dim, 0);
        return out;
    }
    const std::size_t n = a.ambient_dim;
    Matrix m = matmul(transpose(a.basis), b.basis);  // p x q
    SvdResult dec = svd(m);
    const std::size_t pairs = dec.s.size();
    out.left = matmul(a.basis, dec.u);
    out.right = matmul(b.basis, transpose(dec.vt));
    out.angles_deg.resize(pairs);
    constexpr double rad2deg = 180.0 / 3.14159265358979323846;
    for (std::size_t i = 0; i < pairs; ++i) {
        double cosv = std::min(dec.s[i], 1.0);
        if (cosv * cosv > 0.5) {
            // small angle: acos of a cosine near 1 loses half the digits,
            // use the projection residual instead
            std::vector<double> r = out.right.col(i);
            std::vector<double> coeff = vecmat(r, a.basis);
            std::vector<double> proj = matvec(a.basis, coeff);
            axpy(r, -1.0, proj);
            double sinv = std::min(norm2(r), 1.0);
            out.angles_deg[i] = std::asin(sinv) * rad2deg;
        } else {
            out.angles_deg[i] = std::acos(std::max(cosv, 0.0)) * rad2deg;
        }
        (void)n;
    }
    return out;
}

// Spherical interpolation from v0 (t = 0) to v1 (t = 1) along the great
// circle, using the acute representative of the sign-ambiguous pair.
inline std::vector<double> slerp(std::vector<double> v0, std::vector<double> v1, double t) {
    double d = dot(v0, v1);
    if (d < 0.0) {
        scale(v1, -1.0);
        d = -d;
    }
    d = std::min(d, 1.0);
    double omega = std::acos(d);
    if (omega < 1e-12) return v0;
    double so = std::sin(omega);
    std::vector<double> out(v0.size());
    const double w0 = std::sin((1.0 - t) * omega) / so;
    const double w1 = std::sin(t * omega) / so;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = w0 * v0[i] + w1 * v1[i];
    return out;
}

namespace detail {

// Modified Gram-Schmidt with second pass; drops vectors that fall inside the
// accepted span.
inline Matrix orthonormalize_columns(std::size_t ambient, const std::vector<std::vector<double>>& vecs) {
    std::vector<std::vector<double>> accepted;
    for (std::vector<double> v : vecs) {
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& b : accepted) axpy(v, -dot(b, v), b);
        double n = norm2(v);
        if (n > 1e-10) accepted.push_back(scaled(std::move(v), 1.0 / n));
    }
    Matrix out(ambient, accepted.size());
    for (std::size_t c = 0; c < accepted.size(); ++c) out.set_col(c, accepted[c]);
    return out;
}

}  // namespace detail

// Merge two co-kernel estimates: keep principal pairs under 45 degrees,
// slerp each pair with t = b.weight / (a.weight + b.weight), and
// re-orthonormalize. All pairs dropped leaves the empty space.
inline MergeState merge(const MergeState& a, const MergeState& b) {
    if (a.basis.ambient_dim != b.basis.ambient_dim)
        throw std::invalid_argument("merge: ambient dimensions differ");
    const std::size_t n = a.basis.ambient_dim;
    MergeState out;
    out.weight = a.weight + b.weight;
    if (a.basis.dim() == 0 || b.basis.dim() == 0) {
        out.basis = SubspaceBasis::empty(n);
        out.basis.degenerate = a.basis.degenerate || b.basis.degenerate;
        return out;
    }
    const double t = static_cast<double>(b.weight) / static_cast<double>(a.weight + b.weight);
    PrincipalAngles pa = principal_angles(a.basis, b.basis);
    std::vector<std::vector<double>> kept;
    for (std::size_t i = 0; i < pa.angles_deg.size(); ++i) {
        if (pa.angles_deg[i] >= 45.0) continue;
        kept.push_back(slerp(pa.left.col(i), pa.right.col(i), t));
    }
    out.basis = SubspaceBasis{n, detail::orthonormalize_columns(n, kept),
                              a.basis.degenerate || b.basis.degenerate};
    return out;
}

inline SubspaceBasis complement(const SubspaceBasis& s) {
    return SubspaceBasis{s.ambient_dim, orthonormal_complement(s.basis, s.ambient_dim), false};
}

namespace detail {

inline SubspaceBasis critical_space_from(const std::vector<CokernelSpectrum>& spectra, double rho) {
    MergeState state{cokernel_at(spectra[0], rho), 1};
    for (std::size_t i = 1; i < spectra.size(); ++i)
        state = merge(state, MergeState{cokernel_at(spectra[i], rho), 1});
    SubspaceBasis c = complement(state.basis);
    c.degenerate = state.basis.degenerate;
    return c;
}

}  // namespace detail

// Approximate common co-kernel of the sampled Jacobians (left fold in input
// order), then return its orthogonal complement: the critical space.
inline SubspaceBasis critical_space(const std::vector<JacobianMatrix>& jacs, double rho) {
    if (jacs.empty()) throw std::invalid_argument("critical_space: no Jacobians");
    if (!(rho > 0.0 && rho < 1.0))
        throw std::invalid_argument("critical_space: rho must lie in (0,1)");
    std::vector<CokernelSpectrum> spectra;
    spectra.reserve(jacs.size());
    for (const auto& j : jacs) spectra.push_back(cokernel_spectrum(j));
    return detail::critical_space_from(spectra, rho);
}

struct RhoInterval {
    double lo = 0.0, hi = 0.0;  // rho range producing this dimension
    std::size_t dim = 0;
    SubspaceBasis space;        // representative, computed at the interval midpoint
};

// Scan rho over (0,1) by nested intervals (geometric bisection, so
// singular-value ratios spanning several orders of magnitude are resolved)
// and report one representative critical space per detected dimension
// plateau. Assumes dim(C) is monotone in rho between probes.
inline std::vector<RhoInterval> rho_scan(const std::vector<JacobianMatrix>& jacs) {
    if (jacs.empty()) throw std::invalid_argument("rho_scan: no Jacobians");
    std::vector<CokernelSpectrum> spectra;
    spectra.reserve(jacs.size());
    for (const auto& j : jacs) spectra.push_back(cokernel_spectrum(j));

    const double lo0 = 1e-8, hi0 = 1.0 - 1e-4;
    auto dim_at = [&](double rho) { return detail::critical_space_from(spectra, rho).dim(); };

    std::vector<double> boundaries;
    struct Seg {
        double lo, hi;
        std::size_t dlo, dhi;
    };
    std::vector<Seg> stack{{lo0, hi0, dim_at(lo0), dim_at(hi0)}};
    while (!stack.empty()) {
        Seg s = stack.back();
        stack.pop_back();
        if (s.dlo == s.dhi) continue;
        if (s.hi - s.lo <= 1e-4 * s.hi || s.hi - s.lo <= 1e-9) {
            boundaries.push_back(0.5 * (s.lo + s.hi));
            continue;
        }
        double mid = std::sqrt(s.lo * s.hi);
        std::size_t dmid = dim_at(mid);
        stack.push_back({s.lo, mid, s.dlo, dmid});
        stack.push_back({mid, s.hi, dmid, s.dhi});
    }
    std::sort(boundaries.begin(), boundaries.end());

    std::vector<RhoInterval> out;
    double lo = lo0;
    for (std::size_t i = 0; i <= boundaries.size(); ++i) {
        double hi = i < boundaries.size() ? boundaries[i] : hi0;
        if (hi <= lo) continue;
        RhoInterval iv;
        iv.lo = lo;
        iv.hi = hi;
        double rep = std::sqrt(lo * hi);
        iv.space = detail::critical_space_from(spectra, rep);
        iv.dim = iv.space.dim();
        out.push_back(std::move(iv));
        lo = hi;
    }
    return out;
}

}  // namespace ifv
