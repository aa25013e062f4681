#include <catch2/catch_amalgamated.hpp>

#include "ifv/objective.hpp"
#include "ifv/pipeline.hpp"
#include "ifv/toynets.hpp"
#include "support/test_support.hpp"

using namespace ifv;
using testsupport::fd_gradient;
using testsupport::random_tensor;
using testsupport::rel_err;

TEST_CASE("aggregate keeps constant maps constant", "[objective]") {
    Tensor acts({5, 5, 3});
    for (std::size_t i = 0; i < acts.size(); ++i) acts[i] = 1.0 + double(i % 3);
    for (Aggregation a : {Aggregation::maxpool_mean, Aggregation::mean, Aggregation::pick_center}) {
        FeatureResponse y = aggregate(acts, {2, a});
        REQUIRE(y.y == std::vector<double>{1.0, 2.0, 3.0});
    }
}

TEST_CASE("maxpool_mean of a single 3x3 window is the max", "[objective]") {
    Tensor acts({3, 3, 1}, {0.1, 0.7, -0.3, 0.2, 0.9, 0.0, -1.0, 0.4, 0.5});
    FeatureResponse y = aggregate(acts, {2, Aggregation::maxpool_mean});
    REQUIRE(y.y.size() == 1);
    REQUIRE(y.y[0] == 0.9);
}

TEST_CASE("maxpool_mean matches a direct nested-loop oracle", "[objective]") {
    Rng rng(61);
    Tensor acts = random_tensor(rng, {6, 6, 4});
    FeatureResponse y = aggregate(acts, {2, Aggregation::maxpool_mean});
    for (std::size_t f = 0; f < 4; ++f) {
        double acc = 0.0;
        for (std::size_t oy = 0; oy < 4; ++oy)
            for (std::size_t ox = 0; ox < 4; ++ox) {
                double best = -1e300;
                for (std::size_t dy = 0; dy < 3; ++dy)
                    for (std::size_t dx = 0; dx < 3; ++dx)
                        best = std::max(best, acts.at(oy + dy, ox + dx, f));
                acc += best;
            }
        REQUIRE(y.y[f] == acc / 16.0);
    }
}

TEST_CASE("pick_center with even dims picks floor(H/2)", "[objective]") {
    Tensor acts({4, 4, 2});
    acts.at(2, 2, 0) = 5.0;
    acts.at(2, 2, 1) = -3.0;
    FeatureResponse y = aggregate(acts, {0, Aggregation::pick_center});
    REQUIRE(y.y == std::vector<double>{5.0, -3.0});
}

TEST_CASE("rank-1 activations aggregate as identity", "[objective]") {
    Tensor acts({4}, {1.0, -2.0, 3.0, 0.5});
    for (Aggregation a : {Aggregation::maxpool_mean, Aggregation::mean, Aggregation::pick_center})
        REQUIRE(aggregate(acts, {2, a}).y == acts.data);
}

TEST_CASE("maxpool_mean rejects tiny spatial dims", "[objective]") {
    REQUIRE_THROWS_AS(aggregate(Tensor({2, 2, 1}), {2, Aggregation::maxpool_mean}),
                      std::invalid_argument);
}

TEST_CASE("aggregate_vjp matches finite differences", "[objective]") {
    Rng rng(71);
    for (Aggregation a : {Aggregation::maxpool_mean, Aggregation::mean, Aggregation::pick_center}) {
        SignificanceConfig cfg{2, a};
        Tensor acts = random_tensor(rng, {5, 4, 3});
        std::vector<double> cot = rng.gaussian_vector(3);
        Tensor g = aggregate_vjp(acts, cfg, cot);
        auto f = [&](const std::vector<double>& p) {
            FeatureResponse y = aggregate(Tensor(acts.shape, p), cfg);
            return dot(y.y, cot);
        };
        std::vector<double> fd = fd_gradient(f, acts.data);
        CAPTURE(aggregation_name(a));
        REQUIRE(rel_err(g.data, fd) < 1e-6);
    }
}

TEST_CASE("significance closed forms", "[objective]") {
    FeatureResponse y{{3.0, 4.0}};
    SECTION("x aligned with y gives the norm") {
        FeatureObjective x = FeatureObjective::unit({3.0, 4.0});
        for (int k : {0, 1, 2, 7})
            REQUIRE(significance(x, y, k) == Catch::Approx(5.0).margin(1e-12));
    }
    SECTION("orthogonal x with k = 0 gives zero") {
        FeatureObjective x = FeatureObjective::unit({4.0, -3.0});
        REQUIRE(significance(x, y, 0) == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("worked example") {
        FeatureObjective x{{1.0, 0.0}};
        REQUIRE(significance(x, y, 2) == Catch::Approx(1.08).margin(1e-12));
    }
    SECTION("zero response is an error") {
        FeatureResponse zero{{0.0, 0.0}};
        REQUIRE_THROWS_AS(significance(FeatureObjective{{1.0, 0.0}}, zero, 2), std::domain_error);
    }
}

TEST_CASE("Z_0 is the identity", "[objective]") {
    Rng rng(73);
    FeatureResponse y{rng.gaussian_vector(5)};
    Matrix z = z_matrix(y, 0);
    REQUIRE(z.data == Matrix::identity(5).data);
}

TEST_CASE("Z_2 on a canonical response", "[objective]") {
    FeatureResponse y{{1.0, 0.0, 0.0}};
    Matrix z = z_matrix(y, 2);
    REQUIRE(z(0, 0) == Catch::Approx(1.0 / 3.0).margin(1e-15));
    REQUIRE(z(1, 1) == 1.0);
    REQUIRE(z(2, 2) == 1.0);
    REQUIRE(z(0, 1) == 0.0);
}

TEST_CASE("Z_k is exactly symmetric and Sherman-Morrison inverts it", "[objective]") {
    Rng rng(79);
    for (int k : {0, 1, 2, 5, 50}) {
        FeatureResponse y{rng.gaussian_vector(6)};
        Matrix z = z_matrix(y, k);
        Matrix zi = z_inverse(y, k);
        for (std::size_t r = 0; r < 6; ++r)
            for (std::size_t c = 0; c < 6; ++c) REQUIRE(z(r, c) == z(c, r));
        Matrix prod = matmul(z, zi);
        for (std::size_t r = 0; r < 6; ++r)
            for (std::size_t c = 0; c < 6; ++c)
                REQUIRE(prod(r, c) == Catch::Approx(r == c ? 1.0 : 0.0).margin(1e-12));
    }
}

TEST_CASE("closed-form gradient with k = 0 is x^T Dy exactly", "[objective]") {
    Rng rng(83);
    FeatureResponse y{rng.gaussian_vector(4)};
    FeatureObjective x{rng.unit_vector(4)};
    Matrix jac = testsupport::random_matrix(rng, 4, 9);
    SignificanceEval eval = closed_form_gradient(x, y, jac, 0);
    std::vector<double> expect = vecmat(x.x, jac);
    REQUIRE(rel_err(eval.grad_row, expect) < 1e-15);
    REQUIRE(eval.q == Catch::Approx(dot(x.x, y.unit())).margin(1e-15));
}

TEST_CASE("closed-form gradient vanishes for orthogonal x with k = 2", "[objective]") {
    FeatureResponse y{{3.0, 4.0, 0.0}};
    FeatureObjective x = FeatureObjective::unit({4.0, -3.0, 0.0});
    Rng rng(89);
    Matrix jac = testsupport::random_matrix(rng, 3, 7);
    SignificanceEval eval = closed_form_gradient(x, y, jac, 2);
    REQUIRE(norm2(eval.grad_row) < 1e-14);
}

TEST_CASE("closed-form gradient equals the reverse-mode gradient", "[objective][keystone]") {
    Rng rng(97);
    int checked = 0;
    for (ParamKind pk : {ParamKind::rgb, ParamKind::fft, ParamKind::ffte}) {
        for (Aggregation agg :
             {Aggregation::maxpool_mean, Aggregation::mean, Aggregation::pick_center}) {
            for (int k : {0, 2}) {
                FeaturePipeline pipe;
                pipe.net = make_toy_conv(8, 8, 2, {3}, 4, 1000 + checked);
                pipe.param = make_parametrization(pk, 8, 8, 2);
                pipe.cfg = SignificanceConfig{k, agg};
                Tensor v = random_tensor(rng, {pipe.param_count()}, 0.5);
                FeatureObjective x{rng.unit_vector(4)};

                Tensor autodiff;
                pipe.value_and_grad(x, v, &autodiff);
                FeatureResponse y = pipe.response(v);
                JacobianMatrix jac = pipe.jacobian(v);
                SignificanceEval eval = closed_form_gradient(x, y, jac, k);

                CAPTURE(param_kind_name(pk), aggregation_name(agg), k);
                REQUIRE(rel_err(eval.grad_row, autodiff.data) < 1e-8);
                REQUIRE(eval.value ==
                        Catch::Approx(significance(x, y, k)).margin(1e-12));
                ++checked;
            }
        }
    }
    REQUIRE(checked == 18);
}

TEST_CASE("dropping the scalar factor preserves the gradient direction", "[objective]") {
    // ||grad_row|| == |(k+1) q^k| * ||x^T Z_k Dy||, so for q != 0 the zero
    // sets coincide
    Rng rng(103);
    for (int k : {1, 2, 5}) {
        FeatureResponse y{rng.gaussian_vector(5)};
        FeatureObjective x{rng.unit_vector(5)};
        Matrix jac = testsupport::random_matrix(rng, 5, 11);
        SignificanceEval eval = closed_form_gradient(x, y, jac, k);
        std::vector<double> dropped = vecmat(matvec(z_matrix(y, k), x.x), jac);
        double factor = std::abs(double(k + 1) * std::pow(eval.q, k));
        REQUIRE(eval.q != 0.0);
        REQUIRE(norm2(eval.grad_row) ==
                Catch::Approx(factor * norm2(dropped)).epsilon(1e-12));
    }
}
