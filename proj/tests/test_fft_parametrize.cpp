#include <catch2/catch_amalgamated.hpp>
#include <complex>

#include "ifv/fft.hpp"
#include "ifv/parametrize.hpp"
#include "support/test_support.hpp"

using namespace ifv;
using testsupport::random_tensor;

namespace {

// O(N^2) DFT sum, the independent transform oracle
std::vector<std::complex<double>> naive_dft2d(const std::vector<std::complex<double>>& in,
                                              std::size_t h, std::size_t w, bool inverse) {
    const double sign = inverse ? 1.0 : -1.0;
    std::vector<std::complex<double>> out(h * w, {0.0, 0.0});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            std::complex<double> acc{0.0, 0.0};
            for (std::size_t u = 0; u < h; ++u)
                for (std::size_t v = 0; v < w; ++v) {
                    double ang = sign * 2.0 * 3.14159265358979323846 *
                                 (double(y) * double(u) / double(h) +
                                  double(x) * double(v) / double(w));
                    acc += in[u * w + v] * std::polar(1.0, ang);
                }
            out[y * w + x] = inverse ? acc / double(h * w) : acc;
        }
    return out;
}

double cdiff(const std::vector<std::complex<double>>& a,
             const std::vector<std::complex<double>>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

}  // namespace

TEST_CASE("radix-2 fft matches the DFT sum", "[fft]") {
    Rng rng(5);
    for (std::size_t h : {1u, 2u, 4u, 8u}) {
        for (std::size_t w : {2u, 8u}) {
            std::vector<std::complex<double>> in(h * w);
            for (auto& z : in) z = {rng.gaussian(), rng.gaussian()};
            auto fwd = in;
            fft2d(fwd, h, w, false);
            REQUIRE(cdiff(fwd, naive_dft2d(in, h, w, false)) < 1e-10);
            auto inv = in;
            fft2d(inv, h, w, true);
            REQUIRE(cdiff(inv, naive_dft2d(in, h, w, true)) < 1e-12);
            // round trip
            fft2d(fwd, h, w, true);
            REQUIRE(cdiff(fwd, in) < 1e-12);
        }
    }
}

TEST_CASE("fft rejects non-power-of-two lengths", "[fft]") {
    std::vector<std::complex<double>> a(6);
    REQUIRE_THROWS_AS(fft_radix2(a, false), std::invalid_argument);
    REQUIRE_THROWS_AS(make_parametrization(ParamKind::fft, 6, 8, 1), std::invalid_argument);
    REQUIRE_THROWS_AS(make_parametrization(ParamKind::ffte, 8, 12, 3), std::invalid_argument);
    REQUIRE_NOTHROW(make_parametrization(ParamKind::rgb, 6, 12, 3));
}

TEST_CASE("rgb parametrization maps zero to mid gray", "[parametrize]") {
    Parametrization p = make_parametrization(ParamKind::rgb, 4, 4, 3);
    Tensor img = apply(p, Tensor({48}));
    for (double v : img.data) REQUIRE(v == 0.5);
}

TEST_CASE("rgb adjoint at zero scales by sigmoid'(0) = 1/4", "[parametrize]") {
    Parametrization p = make_parametrization(ParamKind::rgb, 2, 2, 1);
    Rng rng(9);
    Tensor c = random_tensor(rng, {2, 2, 1});
    Tensor g = apply_vjp(p, Tensor({4}), c);
    for (std::size_t i = 0; i < 4; ++i) REQUIRE(g[i] == Catch::Approx(0.25 * c[i]).margin(1e-15));
}

TEST_CASE("fft DC coefficient produces a constant image", "[parametrize]") {
    Parametrization p = make_parametrization(ParamKind::fft, 4, 4, 1);
    Tensor v({16});
    v[0] = 8.0;  // DC slot is the first packed parameter
    Tensor img = apply(p, v);
    // inverse transform carries 1/(H*W), so the constant is sigmoid(8/16)
    double expect = sigmoid(8.0 / 16.0);
    for (double x : img.data) REQUIRE(x == Catch::Approx(expect).margin(1e-12));
}

TEST_CASE("fft parametrization matches a DFT-sum oracle", "[parametrize]") {
    const std::size_t h = 8, w = 8;
    Parametrization p = make_parametrization(ParamKind::fft, h, w, 1);
    Rng rng(21);
    Tensor v = random_tensor(rng, {h * w});
    Tensor img = apply(p, v);

    std::vector<std::complex<double>> grid;
    detail::pack_halfspectrum(v.data.data(), h, w, grid);
    auto spatial = naive_dft2d(grid, h, w, true);
    for (std::size_t pix = 0; pix < h * w; ++pix) {
        REQUIRE(std::abs(spatial[pix].imag()) < 1e-12);  // Hermitian packing
        REQUIRE(img.data[pix] == Catch::Approx(sigmoid(spatial[pix].real())).margin(1e-10));
    }
}

TEST_CASE("adjoint pairing holds for every parametrization", "[parametrize]") {
    Rng rng(33);
    for (ParamKind kind : {ParamKind::rgb, ParamKind::fft, ParamKind::ffte}) {
        Parametrization p = make_parametrization(kind, 8, 4, 2);
        for (int rep = 0; rep < 5; ++rep) {
            Tensor v = random_tensor(rng, {p.param_count()});
            Tensor dv = random_tensor(rng, {p.param_count()});
            Tensor c = random_tensor(rng, {8, 4, 2});
            // directional derivative <J dv, c> via finite differences of <apply, c>
            const double h = 1e-6;
            Tensor vp = v, vm = v;
            axpy(vp.data, h, dv.data);
            axpy(vm.data, -h, dv.data);
            Tensor ip = apply(p, vp), im = apply(p, vm);
            double lhs = 0.0;
            for (std::size_t i = 0; i < c.size(); ++i)
                lhs += (ip.data[i] - im.data[i]) / (2.0 * h) * c[i];
            double rhs = dot(apply_vjp(p, v, c).data, dv.data);
            CAPTURE(param_kind_name(kind), rep);
            REQUIRE(lhs == Catch::Approx(rhs).margin(1e-7));
        }
    }
}

TEST_CASE("adjoint pairing of the linear transform part is exact", "[parametrize]") {
    // strip the sigmoid by pairing in logit space: for fft kinds the map
    // v -> t (pre-sigmoid) is linear; check <T v, z> == <v, T^T z>
    const std::size_t h = 8, w = 8;
    Rng rng(35);
    for (ParamKind kind : {ParamKind::fft, ParamKind::ffte}) {
        Parametrization p = make_parametrization(kind, h, w, 1);
        for (int rep = 0; rep < 10; ++rep) {
            std::vector<double> v = rng.gaussian_vector(h * w);
            std::vector<double> z = rng.gaussian_vector(h * w);
            std::vector<double> coeffs = v;
            if (kind == ParamKind::ffte)
                for (std::size_t i = 0; i < coeffs.size(); ++i) coeffs[i] *= p.energy_scale[i];
            std::vector<std::complex<double>> grid;
            detail::pack_halfspectrum(coeffs.data(), h, w, grid);
            fft2d(grid, h, w, true);
            double lhs = 0.0;
            for (std::size_t i = 0; i < z.size(); ++i) lhs += grid[i].real() * z[i];

            std::vector<std::complex<double>> zg(h * w);
            for (std::size_t i = 0; i < z.size(); ++i) zg[i] = {z[i], 0.0};
            fft2d(zg, h, w, false);
            for (auto& g : zg) g /= double(h * w);
            std::vector<double> adj(h * w);
            detail::pack_adjoint(zg, h, w, adj.data());
            if (kind == ParamKind::ffte)
                for (std::size_t i = 0; i < adj.size(); ++i) adj[i] *= p.energy_scale[i];
            double rhs = dot(v, adj);
            REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-10).margin(1e-10));
        }
    }
}

TEST_CASE("ffte with all-ones energy scale reproduces fft bitwise", "[parametrize]") {
    Parametrization fft_p = make_parametrization(ParamKind::fft, 8, 8, 2);
    Parametrization ffte_p = make_parametrization(ParamKind::ffte, 8, 8, 2);
    ffte_p.energy_scale.assign(64, 1.0);
    Rng rng(39);
    Tensor v = random_tensor(rng, {128});
    Tensor a = apply(fft_p, v);
    Tensor b = apply(ffte_p, v);
    REQUIRE(a.data == b.data);
    Tensor c = random_tensor(rng, {8, 8, 2});
    REQUIRE(apply_vjp(fft_p, v, c).data == apply_vjp(ffte_p, v, c).data);
}

TEST_CASE("ffte energy scale favors low frequencies and has unit mean", "[parametrize]") {
    Parametrization p = make_parametrization(ParamKind::ffte, 16, 16, 1);
    double mean = 0.0;
    for (double s : p.energy_scale) mean += s;
    mean /= double(p.energy_scale.size());
    REQUIRE(mean == Catch::Approx(1.0).margin(1e-12));
    // the DC slot carries the largest scale
    REQUIRE(p.energy_scale[0] == *std::max_element(p.energy_scale.begin(), p.energy_scale.end()));
}

TEST_CASE("parametrizations are surjective onto the open cube", "[parametrize]") {
    Rng rng(51);
    for (ParamKind kind : {ParamKind::rgb, ParamKind::fft, ParamKind::ffte}) {
        Parametrization p = make_parametrization(kind, 8, 8, 3);
        Tensor target({8, 8, 3});
        for (double& x : target.data) x = 0.02 + 0.96 * rng.uniform();
        Tensor v = preimage(p, target);
        Tensor round = apply(p, v);
        CAPTURE(param_kind_name(kind));
        REQUIRE(testsupport::max_abs_diff(round.data, target.data) < 1e-8);
    }
}

TEST_CASE("preimage rejects values outside the open cube", "[parametrize]") {
    Parametrization p = make_parametrization(ParamKind::rgb, 2, 2, 1);
    Tensor img({2, 2, 1}, {0.5, 1.0, 0.5, 0.5});
    REQUIRE_THROWS_AS(preimage(p, img), std::domain_error);
}
