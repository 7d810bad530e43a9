#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "dynnet/rng.hpp"
#include "dynnet/tape.hpp"

using namespace dynnet;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -2.0, double hi = 2.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

}  // namespace

TEST_CASE("parameter leaves") {
    Tape tape;
    NodeId p = tape.parameter({1.0, 2.0});
    CHECK(tape.value(p)[0] == 1.0);
    CHECK(tape.value(p)[1] == 2.0);
    CHECK(tape.requires_grad(p));
    CHECK_THROWS_AS(tape.grad(p), Error);  // no backward yet

    SUBCASE("backward from a bare parameter seeds grad 1") {
        Tape t2;
        NodeId x = t2.parameter({0.0});
        t2.backward(x);
        CHECK(t2.grad(x)[0] == 1.0);
    }
    SUBCASE("non-finite input is rejected") {
        Tape t2;
        CHECK_THROWS_AS(t2.parameter({1.0, std::numeric_limits<double>::quiet_NaN()}),
                        NonFiniteInput);
        CHECK_THROWS_AS(t2.parameter({std::numeric_limits<double>::infinity()}),
                        NonFiniteInput);
    }
}

TEST_CASE("affine examples") {
    Tape tape;
    SUBCASE("identity") {
        NodeId w = tape.parameter({1.0, 0.0, 0.0, 1.0}, Shape{2, 2});
        NodeId b = tape.parameter({0.0, 0.0});
        NodeId x = tape.parameter({3.0, -1.0});
        NodeId y = tape.affine(w, b, x);
        CHECK(tape.value(y)[0] == 3.0);
        CHECK(tape.value(y)[1] == -1.0);
    }
    SUBCASE("hand matrix-vector product") {
        NodeId w = tape.parameter({2.0, 0.0, 0.0, 2.0}, Shape{2, 2});
        NodeId b = tape.parameter({1.0, 1.0});
        NodeId x = tape.parameter({1.0, 1.0});
        NodeId y = tape.affine(w, b, x);
        CHECK(tape.value(y)[0] == doctest::Approx(3.0));
        CHECK(tape.value(y)[1] == doctest::Approx(3.0));
    }
    SUBCASE("gradient of sum w.r.t. bias is ones") {
        NodeId w = tape.parameter({0.5, -0.25, 2.0, 1.0}, Shape{2, 2});
        NodeId b = tape.parameter({0.1, 0.2});
        NodeId x = tape.parameter({1.0, -3.0});
        tape.backward(tape.sum(tape.affine(w, b, x)));
        CHECK(tape.grad(b)[0] == 1.0);
        CHECK(tape.grad(b)[1] == 1.0);
    }
    SUBCASE("shape mismatch") {
        NodeId w = tape.parameter({1.0, 2.0}, Shape{1, 2});
        NodeId b = tape.parameter({0.0});
        NodeId x = tape.parameter({1.0});  // needs length 2
        CHECK_THROWS_AS(tape.affine(w, b, x), ShapeError);
    }
}

TEST_CASE("layer_norm examples") {
    Tape tape;
    SUBCASE("hand evaluation, mu=0 sigma^2=1") {
        NodeId x = tape.parameter({1.0, -1.0});
        NodeId gain = tape.parameter({1.0, 1.0});
        NodeId bias = tape.parameter({0.0, 0.0});
        NodeId y = tape.layer_norm(x, gain, bias, 1e-5);
        const double expected = 1.0 / std::sqrt(1.0 + 1e-5);
        CHECK(tape.value(y)[0] == doctest::Approx(expected).epsilon(1e-12));
        CHECK(tape.value(y)[1] == doctest::Approx(-expected).epsilon(1e-12));
    }
    SUBCASE("zero variance maps to bias") {
        NodeId x = tape.parameter({0.7, 0.7});
        NodeId gain = tape.parameter({1.0, 1.0});
        NodeId bias = tape.parameter({0.0, 0.0});
        NodeId y = tape.layer_norm(x, gain, bias, 1e-5);
        CHECK(tape.value(y)[0] == 0.0);
        CHECK(tape.value(y)[1] == 0.0);
    }
    SUBCASE("zero gain returns bias regardless of input") {
        NodeId x = tape.parameter({3.0, -9.0, 4.0});
        NodeId gain = tape.parameter({0.0, 0.0, 0.0});
        NodeId bias = tape.parameter({0.5, -0.5, 1.5});
        NodeId y = tape.layer_norm(x, gain, bias, 1e-5);
        CHECK(tape.value(y)[0] == 0.5);
        CHECK(tape.value(y)[1] == -0.5);
        CHECK(tape.value(y)[2] == 1.5);
    }
}

TEST_CASE("silu examples") {
    Tape tape;
    NodeId x = tape.parameter({0.0, 20.0, 1.0});
    NodeId y = tape.silu(x);
    CHECK(tape.value(y)[0] == 0.0);
    CHECK(tape.value(y)[1] == doctest::Approx(20.0).epsilon(1e-7));
    CHECK(tape.value(y)[2] == doctest::Approx(0.731058578630005).epsilon(1e-12));
}

TEST_CASE("elementwise examples") {
    Tape tape;
    SUBCASE("add") {
        NodeId y = tape.add(tape.parameter({1.0, 2.0}), tape.parameter({3.0, 4.0}));
        CHECK(tape.value(y)[0] == 4.0);
        CHECK(tape.value(y)[1] == 6.0);
    }
    SUBCASE("mul values and product-rule gradient") {
        NodeId a = tape.parameter({2.0, 3.0});
        NodeId b = tape.parameter({4.0, 5.0});
        NodeId y = tape.mul(a, b);
        CHECK(tape.value(y)[0] == 8.0);
        CHECK(tape.value(y)[1] == 15.0);
        tape.backward(tape.sum(y));
        CHECK(tape.grad(a)[0] == 4.0);
        CHECK(tape.grad(a)[1] == 5.0);
    }
    SUBCASE("scale") {
        NodeId y = tape.scale(tape.parameter({1.0, -1.0}), -2.0);
        CHECK(tape.value(y)[0] == -2.0);
        CHECK(tape.value(y)[1] == 2.0);
    }
    SUBCASE("scalar broadcast") {
        NodeId s = tape.parameter({2.0}, Shape{1, 1});
        NodeId v = tape.parameter({1.0, 2.0, 3.0});
        NodeId y = tape.mul(s, v);
        CHECK(tape.value(y)[2] == 6.0);
        tape.backward(tape.sum(y));
        CHECK(tape.grad(s)[0] == 6.0);  // fan-out accumulates
    }
    SUBCASE("shape error") {
        CHECK_THROWS_AS(tape.add(tape.parameter({1.0, 2.0}), tape.parameter({1.0, 2.0, 3.0})),
                        ShapeError);
    }
}

TEST_CASE("mse examples") {
    Tape tape;
    SUBCASE("zero at the target") {
        NodeId p = tape.parameter({0.3, -0.7});
        const double target[] = {0.3, -0.7};
        CHECK(tape.scalar_value(tape.mse_loss(p, target)) == 0.0);
    }
    SUBCASE("hand value (1+9)/2") {
        NodeId p = tape.parameter({1.0, 3.0});
        const double target[] = {0.0, 0.0};
        CHECK(tape.scalar_value(tape.mse_loss(p, target)) == doctest::Approx(5.0));
    }
    SUBCASE("gradient 2(p-t)/n") {
        NodeId p = tape.parameter({1.0});
        const double target[] = {0.0};
        tape.backward(tape.mse_loss(p, target));
        CHECK(tape.grad(p)[0] == doctest::Approx(2.0));
    }
}

TEST_CASE("backward mechanics") {
    SUBCASE("closed-form least-squares gradient through affine") {
        // pred = x + b, loss = mean((x + b - t)^2), dL/db_i = 2(x_i + b_i - t_i)/n
        Tape tape;
        NodeId w = tape.constant({1.0, 0.0, 0.0, 1.0}, Shape{2, 2});
        NodeId b = tape.parameter({0.4, -0.3});
        NodeId x = tape.constant({1.5, 2.5});
        const double target[] = {1.0, 3.0};
        tape.backward(tape.mse_loss(tape.affine(w, b, x), target));
        CHECK(tape.grad(b)[0] == doctest::Approx(2.0 * (1.5 + 0.4 - 1.0) / 2.0).epsilon(1e-14));
        CHECK(tape.grad(b)[1] == doctest::Approx(2.0 * (2.5 - 0.3 - 3.0) / 2.0).epsilon(1e-14));
    }
    SUBCASE("parameter not used in loss has zero gradient") {
        Tape tape;
        NodeId unused = tape.parameter({1.0, 2.0, 3.0});
        NodeId used = tape.parameter({5.0});
        tape.backward(tape.sum(used));
        CHECK(tape.grad(unused)[0] == 0.0);
        CHECK(tape.grad(unused)[1] == 0.0);
        CHECK(tape.grad(unused)[2] == 0.0);
        CHECK(tape.grad(used)[0] == 1.0);
    }
    SUBCASE("diamond fan-out sums path gradients") {
        Tape tape;
        NodeId x = tape.parameter({1.0, -2.0});
        NodeId left = tape.scale(x, 2.0);
        NodeId right = tape.scale(x, 3.0);
        tape.backward(tape.sum(tape.add(left, right)));
        CHECK(tape.grad(x)[0] == 5.0);
        CHECK(tape.grad(x)[1] == 5.0);
    }
    SUBCASE("non-scalar loss rejected") {
        Tape tape;
        NodeId x = tape.parameter({1.0, 2.0});
        CHECK_THROWS_AS(tape.backward(x), NonScalarLoss);
    }
    SUBCASE("tape is single-use") {
        Tape tape;
        NodeId x = tape.parameter({1.0});
        NodeId loss = tape.sum(x);
        tape.backward(loss);
        CHECK_THROWS_AS(tape.backward(loss), TapeReused);
    }
    SUBCASE("clear resets the arena and re-arms backward") {
        Tape tape;
        tape.backward(tape.sum(tape.parameter({2.0})));
        CHECK(tape.node_count() == 2);
        tape.clear();
        CHECK(tape.node_count() == 0);
        NodeId y = tape.sum(tape.parameter({3.0, 4.0}));
        tape.backward(y);
        CHECK(tape.scalar_value(y) == 7.0);
    }
}

TEST_CASE("graph construction and backward are deterministic") {
    auto build = [](std::vector<double>& values, std::vector<double>& grads) {
        Tape tape;
        NodeId w = tape.parameter({0.3, -1.2, 0.8, 0.05, 2.0, -0.7}, Shape{2, 3});
        NodeId b = tape.parameter({0.1, -0.1});
        NodeId x = tape.parameter({1.0, 2.0, -0.5});
        NodeId gain = tape.parameter({1.1, 0.9});
        NodeId bias = tape.parameter({0.0, 0.2});
        NodeId h = tape.silu(tape.layer_norm(tape.affine(w, b, x), gain, bias, 1e-5));
        const double target[] = {0.25, -0.5};
        NodeId loss = tape.mse_loss(h, target);
        tape.backward(loss);
        values.assign(tape.value(h).begin(), tape.value(h).end());
        auto g = tape.grad(w);
        grads.assign(g.begin(), g.end());
    };
    std::vector<double> v1, g1, v2, g2;
    build(v1, g1);
    build(v2, g2);
    CHECK(std::memcmp(v1.data(), v2.data(), v1.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("finite_difference_check examples") {
    SUBCASE("quadratic is exact up to rounding") {
        const double theta0[] = {3.0};
        const double err = finite_difference_check(
            [](Tape& t, NodeId theta) { return t.sum(t.mul(theta, theta)); }, theta0, 1e-5);
        CHECK(err < 1e-8);
    }
    SUBCASE("constant function has zero error") {
        const double theta0[] = {1.0, 2.0};
        const double err = finite_difference_check(
            [](Tape& t, NodeId) { return t.scalar_constant(4.25); }, theta0, 1e-5);
        CHECK(err == 0.0);
    }
}

// Every exposed op agrees with central differences at h = 1e-5 to relative
// error < 1e-5 on random inputs in [-2, 2].
TEST_CASE("per-op finite-difference property") {
    constexpr double kH = 1e-5;
    constexpr double kTol = 1e-5;

    struct OpCase {
        const char* name;
        std::size_t n_theta;
        LossBuilder build;
    };
    const double target3[] = {0.3, -0.6, 1.1};
    std::vector<OpCase> cases;
    cases.push_back({"add", 6, [](Tape& t, NodeId th) {
                         return t.sum(t.add(t.slice(th, 0, 3), t.slice(th, 3, 3)));
                     }});
    cases.push_back({"sub", 6, [](Tape& t, NodeId th) {
                         return t.sum(t.sub(t.slice(th, 0, 3), t.slice(th, 3, 3)));
                     }});
    cases.push_back({"mul", 6, [](Tape& t, NodeId th) {
                         return t.sum(t.mul(t.slice(th, 0, 3), t.slice(th, 3, 3)));
                     }});
    cases.push_back({"mul_scalar_broadcast", 4, [](Tape& t, NodeId th) {
                         return t.sum(t.mul(t.slice(th, 0, 1), t.slice(th, 1, 3)));
                     }});
    cases.push_back({"axpb", 3, [](Tape& t, NodeId th) {
                         return t.sum(t.axpb(th, -1.7, 0.3));
                     }});
    cases.push_back({"add_scaled", 6, [](Tape& t, NodeId th) {
                         return t.sum(t.add_scaled(t.slice(th, 0, 3), t.slice(th, 3, 3), 0.37));
                     }});
    cases.push_back({"affine", 11, [](Tape& t, NodeId th) {
                         NodeId w = t.reshape(t.slice(th, 0, 6), Shape{2, 3});
                         NodeId b = t.slice(th, 6, 2);
                         NodeId x = t.slice(th, 8, 3);
                         return t.sum(t.affine(w, b, x));
                     }});
    cases.push_back({"layer_norm", 9, [](Tape& t, NodeId th) {
                         NodeId x = t.slice(th, 0, 3);
                         NodeId g = t.slice(th, 3, 3);
                         NodeId b = t.slice(th, 6, 3);
                         // squared sum makes the loss sensitive to every output
                         NodeId y = t.layer_norm(x, g, b, 1e-5);
                         return t.sum(t.mul(y, y));
                     }});
    cases.push_back({"silu", 3, [](Tape& t, NodeId th) { return t.sum(t.silu(th)); }});
    cases.push_back({"tanh", 3, [](Tape& t, NodeId th) { return t.sum(t.tanh(th)); }});
    cases.push_back({"slice_concat", 5, [](Tape& t, NodeId th) {
                         NodeId a = t.slice(th, 0, 2);
                         NodeId b = t.slice(th, 2, 3);
                         NodeId y = t.concat(t.silu(b), a);
                         return t.sum(t.mul(y, y));
                     }});
    cases.push_back({"mse_loss", 3, [target3](Tape& t, NodeId th) {
                         return t.mse_loss(th, target3);
                     }});

    Rng rng(20260811);
    for (const auto& c : cases) {
        CAPTURE(c.name);
        for (int rep = 0; rep < 4; ++rep) {
            const auto theta0 = random_vec(rng, c.n_theta);
            const double err = finite_difference_check(c.build, theta0, kH);
            CHECK_MESSAGE(err < kTol, c.name << " rep " << rep << " err " << err);
        }
    }
}
