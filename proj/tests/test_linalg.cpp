#include <catch2/catch_amalgamated.hpp>

#include "ifv/linalg.hpp"
#include "support/test_support.hpp"

using namespace ifv;
using testsupport::random_matrix;

namespace {

double reconstruction_error(const Matrix& m, const SvdResult& r) {
    Matrix s(r.s.size(), r.s.size());
    for (std::size_t i = 0; i < r.s.size(); ++i) s(i, i) = r.s[i];
    Matrix rec = matmul(r.u, matmul(s, r.vt));
    double num = 0.0;
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        double d = rec.data[i] - m.data[i];
        num += d * d;
    }
    double den = frobenius_norm(m);
    return den == 0.0 ? std::sqrt(num) : std::sqrt(num) / den;
}

double orthonormality_error(const Matrix& q) {
    double worst = 0.0;
    for (std::size_t i = 0; i < q.cols; ++i)
        for (std::size_t j = i; j < q.cols; ++j) {
            double d = 0.0;
            for (std::size_t r = 0; r < q.rows; ++r) d += q(r, i) * q(r, j);
            worst = std::max(worst, std::abs(d - (i == j ? 1.0 : 0.0)));
        }
    return worst;
}

}  // namespace

TEST_CASE("svd of the identity", "[linalg]") {
    SvdResult r = svd(Matrix::identity(3));
    for (double s : r.s) REQUIRE(s == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("svd of a diagonal matrix", "[linalg]") {
    Matrix m(3, 3);
    m(0, 0) = 3.0;
    m(1, 1) = 2.0;
    m(2, 2) = 1.0;
    SvdResult r = svd(m);
    REQUIRE(r.s[0] == Catch::Approx(3.0).margin(1e-14));
    REQUIRE(r.s[1] == Catch::Approx(2.0).margin(1e-14));
    REQUIRE(r.s[2] == Catch::Approx(1.0).margin(1e-14));
    // u and v are signed permutations of the identity; here the order is
    // already descending so they are (signed) identity
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double expect = i == j ? 1.0 : 0.0;
            REQUIRE(std::abs(r.u(i, j)) == Catch::Approx(expect).margin(1e-14));
            REQUIRE(std::abs(r.vt(i, j)) == Catch::Approx(expect).margin(1e-14));
        }
}

TEST_CASE("svd reconstruction and orthonormality on random matrices", "[linalg]") {
    Rng rng(101);
    for (auto [rows, cols] : {std::pair<std::size_t, std::size_t>{8, 20},
                              {20, 8},
                              {5, 5},
                              {1, 7},
                              {7, 1}}) {
        Matrix m = random_matrix(rng, rows, cols);
        SvdResult r = svd(m);
        CAPTURE(rows, cols);
        REQUIRE(reconstruction_error(m, r) < 1e-10);
        REQUIRE(orthonormality_error(r.u) < 1e-10);
        REQUIRE(orthonormality_error(transpose(r.vt)) < 1e-10);
        for (std::size_t i = 0; i + 1 < r.s.size(); ++i) REQUIRE(r.s[i] >= r.s[i + 1]);
        for (double s : r.s) REQUIRE(s >= 0.0);
    }
}

TEST_CASE("singular values are transpose invariant", "[linalg]") {
    Rng rng(7);
    Matrix m = random_matrix(rng, 6, 11);
    SvdResult a = svd(m);
    SvdResult b = svd(transpose(m));
    for (std::size_t i = 0; i < a.s.size(); ++i)
        REQUIRE(a.s[i] == Catch::Approx(b.s[i]).margin(1e-12));
}

TEST_CASE("orthonormal columns have unit singular values", "[linalg]") {
    Rng rng(23);
    Matrix q = qr(random_matrix(rng, 12, 5)).q;
    SvdResult r = svd(q);
    for (double s : r.s) REQUIRE(s == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("svd keeps exact zero rows in the left null space", "[linalg]") {
    Rng rng(31);
    Matrix m = random_matrix(rng, 4, 30);
    for (std::size_t c = 0; c < m.cols; ++c) m(2, c) = 0.0;
    SvdResult r = svd(m);
    REQUIRE(r.s[3] == 0.0);
    // the smallest left-singular vector is +-e_2
    for (std::size_t i = 0; i < 4; ++i)
        REQUIRE(std::abs(r.u(i, 3)) == Catch::Approx(i == 2 ? 1.0 : 0.0).margin(1e-12));
}

TEST_CASE("svd relative accuracy for tiny singular values", "[linalg]") {
    // diag(1, 1e-8) rotated by orthogonal factors; one-sided Jacobi should
    // recover the 1e-8 value to near machine relative accuracy
    Rng rng(67);
    Matrix q1 = qr(random_matrix(rng, 6, 6)).q;
    Matrix q2 = qr(random_matrix(rng, 6, 6)).q;
    Matrix d(6, 6);
    const double tiny = 1e-8;
    for (std::size_t i = 0; i < 6; ++i) d(i, i) = i == 5 ? tiny : 1.0 + 0.1 * (double)i;
    Matrix m = matmul(q1, matmul(d, transpose(q2)));
    SvdResult r = svd(m);
    // the product itself perturbs m by ~1e-16 absolute, i.e. ~1e-8 relative
    // at this scale; the decomposition must not add to that
    REQUIRE(r.s[5] == Catch::Approx(tiny).epsilon(1e-6));
}

TEST_CASE("svd rejects non-finite input", "[linalg]") {
    Matrix m(2, 2);
    m(0, 0) = std::nan("");
    REQUIRE_THROWS_AS(svd(m), std::invalid_argument);
}

TEST_CASE("sym_eig on a known matrix", "[linalg]") {
    Matrix m(2, 2);
    m(0, 0) = 2.0;
    m(0, 1) = 1.0;
    m(1, 0) = 1.0;
    m(1, 1) = 2.0;
    EigResult r = sym_eig(m);
    REQUIRE(r.values[0] == Catch::Approx(3.0).margin(1e-13));
    REQUIRE(r.values[1] == Catch::Approx(1.0).margin(1e-13));
    REQUIRE(orthonormality_error(r.vectors) < 1e-12);
}

TEST_CASE("sym_eig reproduces A v = lambda v on random symmetric input", "[linalg]") {
    Rng rng(5);
    Matrix a = random_matrix(rng, 7, 7);
    Matrix m(7, 7);
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 7; ++j) m(i, j) = 0.5 * (a(i, j) + a(j, i));
    EigResult r = sym_eig(m);
    for (std::size_t j = 0; j < 7; ++j) {
        std::vector<double> v = r.vectors.col(j);
        std::vector<double> mv = matvec(m, v);
        std::vector<double> lv = scaled(v, r.values[j]);
        REQUIRE(testsupport::max_abs_diff(mv, lv) < 1e-11);
    }
    for (std::size_t j = 0; j + 1 < 7; ++j) REQUIRE(r.values[j] >= r.values[j + 1]);
}

TEST_CASE("sym_eig rejects asymmetric input", "[linalg]") {
    Matrix m(2, 2);
    m(0, 1) = 1.0;
    REQUIRE_THROWS_AS(sym_eig(m), std::invalid_argument);
}

TEST_CASE("qr factorization", "[linalg]") {
    Rng rng(13);
    Matrix m = random_matrix(rng, 6, 4);
    QrResult r = qr(m);
    REQUIRE(orthonormality_error(r.q) < 1e-12);
    Matrix rec = matmul(r.q, r.r);
    for (std::size_t i = 0; i < m.data.size(); ++i)
        REQUIRE(rec.data[i] == Catch::Approx(m.data[i]).margin(1e-12));
    for (std::size_t i = 0; i < r.r.rows; ++i)
        for (std::size_t j = 0; j < i; ++j) REQUIRE(r.r(i, j) == 0.0);
}

TEST_CASE("orthonormal complement", "[linalg]") {
    Matrix basis(4, 2);
    basis(0, 0) = 1.0;
    basis(1, 1) = 1.0;
    Matrix comp = orthonormal_complement(basis, 4);
    REQUIRE(comp.cols == 2);
    REQUIRE(orthonormality_error(comp) < 1e-12);
    // complement is orthogonal to the basis
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            double d = 0.0;
            for (std::size_t r = 0; r < 4; ++r) d += basis(r, i) * comp(r, j);
            REQUIRE(std::abs(d) < 1e-13);
        }

    Matrix empty(4, 0);
    REQUIRE(orthonormal_complement(empty, 4).cols == 4);
    REQUIRE(orthonormal_complement(Matrix::identity(4), 4).cols == 0);
}

TEST_CASE("matrix helpers", "[linalg]") {
    Matrix a(2, 3, {1, 2, 3, 4, 5, 6});
    std::vector<double> x{1.0, 1.0};
    std::vector<double> xa = vecmat(x, a);
    REQUIRE(xa == std::vector<double>{5.0, 7.0, 9.0});
    std::vector<double> v{1.0, 0.0, -1.0};
    std::vector<double> av = matvec(a, v);
    REQUIRE(av == std::vector<double>{-2.0, -2.0});
}
