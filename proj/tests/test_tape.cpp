#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "sag/errors.hpp"
#include "sag/gradcheck.hpp"
#include "sag/rng.hpp"
#include "sag/tape.hpp"
#include "sag/tensor.hpp"

using sag::Parameter;
using sag::Rng;
using sag::Tape;
using sag::Tensor;
using sag::Var;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    Tensor t(r, c);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, scale);
    return t;
}

constexpr double kGradTol = 1e-6;

}  // namespace

TEST_CASE("recorded forward values match direct computation") {
    Rng rng(31);
    const Tensor a = random_tensor(3, 2, rng);
    const Tensor b = random_tensor(3, 2, rng);
    const Tensor m = random_tensor(2, 4, rng);

    Tape t;
    const Var va = t.constant(a);
    const Var vb = t.constant(b);
    const Var vm = t.constant(m);

    SUBCASE("matmul") {
        const Tensor& got = t.value(t.matmul(va, vm));
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 4; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < 2; ++k) acc += a(i, k) * m(k, j);
                CHECK(got(i, j) == doctest::Approx(acc).epsilon(1e-14));
            }
        }
    }
    SUBCASE("add, subtract, elementwise_mul") {
        const Tensor s = t.value(t.add(va, vb));
        const Tensor d = t.value(t.subtract(va, vb));
        const Tensor p = t.value(t.elementwise_mul(va, vb));
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(s[i] == a[i] + b[i]);
            CHECK(d[i] == a[i] - b[i]);
            CHECK(p[i] == a[i] * b[i]);
        }
    }
    SUBCASE("scalar broadcast on either side") {
        const Var vs = t.constant(Tensor::scalar(0.25));
        const Tensor s = t.value(t.add(va, vs));
        const Tensor d = t.value(t.subtract(vs, va));
        const Tensor p = t.value(t.elementwise_mul(vs, va));
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(s[i] == a[i] + 0.25);
            CHECK(d[i] == 0.25 - a[i]);
            CHECK(p[i] == 0.25 * a[i]);
        }
    }
    SUBCASE("tanh, sigmoid, square") {
        const Tensor th = t.value(t.tanh(va));
        const Tensor sg = t.value(t.sigmoid(va));
        const Tensor sq = t.value(t.square(va));
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(th[i] == doctest::Approx(std::tanh(a[i])).epsilon(1e-15));
            CHECK(sg[i] ==
                  doctest::Approx(1.0 / (1.0 + std::exp(-a[i]))).epsilon(1e-15));
            CHECK(sq[i] == a[i] * a[i]);
        }
    }
    SUBCASE("concat_rows stacks blocks in order") {
        const Tensor& cat = t.value(t.concat_rows(va, vb));
        REQUIRE(cat.rows() == 6);
        REQUIRE(cat.cols() == 2);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(cat[i] == a[i]);
            CHECK(cat[a.size() + i] == b[i]);
        }
    }
    SUBCASE("sum and mean reduce to scalars") {
        double total = 0.0;
        for (double v : a.data()) total += v;
        CHECK(t.scalar_value(t.sum(va)) == doctest::Approx(total).epsilon(1e-14));
        CHECK(t.scalar_value(t.mean(va)) ==
              doctest::Approx(total / 6.0).epsilon(1e-14));
    }
}

TEST_CASE("finite differences confirm each primitive's backward rule") {
    Rng rng(57);
    Parameter a("a", random_tensor(3, 2, rng));
    Parameter b("b", random_tensor(3, 2, rng));
    Parameter w("w", random_tensor(2, 3, rng));
    Parameter s("s", Tensor::scalar(0.8));
    std::array<Parameter*, 2> ab = {&a, &b};
    std::array<Parameter*, 1> just_a = {&a};

    SUBCASE("matmul both operands") {
        std::array<Parameter*, 2> ps = {&w, &a};
        auto build = [&](Tape& t) {
            return t.sum(t.matmul(t.param(w), t.param(a)));
        };
        CHECK(sag::grad_check(build, ps).max_rel_error < kGradTol);
    }
    SUBCASE("add and subtract") {
        auto build = [&](Tape& t) {
            return t.sum(t.square(t.subtract(t.add(t.param(a), t.param(b)),
                                             t.param(b))));
        };
        CHECK(sag::grad_check(build, ab).max_rel_error < kGradTol);
    }
    SUBCASE("elementwise_mul") {
        auto build = [&](Tape& t) {
            return t.sum(t.elementwise_mul(t.param(a), t.param(b)));
        };
        CHECK(sag::grad_check(build, ab).max_rel_error < kGradTol);
    }
    SUBCASE("scalar broadcast reduces its adjoint by summation") {
        std::array<Parameter*, 2> ps = {&a, &s};
        auto build = [&](Tape& t) {
            const Var scaled = t.elementwise_mul(t.param(s), t.param(a));
            return t.sum(t.square(t.add(scaled, t.param(s))));
        };
        CHECK(sag::grad_check(build, ps).max_rel_error < kGradTol);
    }
    SUBCASE("tanh") {
        auto build = [&](Tape& t) { return t.sum(t.tanh(t.param(a))); };
        CHECK(sag::grad_check(build, just_a).max_rel_error < kGradTol);
    }
    SUBCASE("sigmoid") {
        auto build = [&](Tape& t) { return t.sum(t.sigmoid(t.param(a))); };
        CHECK(sag::grad_check(build, just_a).max_rel_error < kGradTol);
    }
    SUBCASE("concat_rows routes adjoints to the right block") {
        auto build = [&](Tape& t) {
            const Var cat = t.concat_rows(t.param(a), t.square(t.param(b)));
            return t.mean(t.square(cat));
        };
        CHECK(sag::grad_check(build, ab).max_rel_error < kGradTol);
    }
    SUBCASE("mean and square") {
        auto build = [&](Tape& t) { return t.mean(t.square(t.param(a))); };
        CHECK(sag::grad_check(build, just_a).max_rel_error < kGradTol);
    }
    SUBCASE("composite expression through every op") {
        std::array<Parameter*, 4> ps = {&a, &b, &w, &s};
        auto build = [&](Tape& t) {
            const Var mixed = t.elementwise_mul(
                t.sigmoid(t.param(a)),
                t.tanh(t.add(t.param(b), t.param(s))));
            const Var proj = t.matmul(t.param(w), mixed);
            const Var cat = t.concat_rows(proj, t.square(proj));
            return t.mean(t.square(cat));
        };
        CHECK(sag::grad_check(build, ps).max_rel_error < kGradTol);
    }
}

TEST_CASE("an injected backward skew is caught by the finite-difference check") {
    Rng rng(91);
    Parameter a("a", random_tensor(4, 1, rng));
    std::array<Parameter*, 1> ps = {&a};
    auto build = [&](Tape& t) {
        t.set_test_backward_skew(0.02);
        return t.sum(t.tanh(t.param(a)));
    };
    const auto r = sag::grad_check(build, ps);
    CHECK(r.max_rel_error > 1e-3);
    CHECK(r.worst_param == "a");
}

TEST_CASE("binding the same parameter twice returns one node and accumulates") {
    Parameter p("p", Tensor::scalar(3.0));
    Parameter x("x", Tensor::scalar(2.0));
    Tape t;
    CHECK(t.param(p) == t.param(p));

    // loss = p*x + p  ->  d/dp = x + 1 = 3, d/dx = p = 3
    const Var loss =
        t.add(t.elementwise_mul(t.param(p), t.param(x)), t.param(p));
    t.backward(loss);
    CHECK(p.grad[0] == doctest::Approx(3.0));
    CHECK(x.grad[0] == doctest::Approx(3.0));

    // A second episode without zero_grad() adds into the same slot.
    t.reset();
    const Var loss2 = t.elementwise_mul(t.param(p), t.param(x));
    t.backward(loss2);
    CHECK(p.grad[0] == doctest::Approx(3.0 + 2.0));
    p.zero_grad();
    CHECK(p.grad[0] == 0.0);
}

TEST_CASE("the tape is single-shot until reset") {
    Parameter p("p", Tensor::scalar(1.0));
    Tape t;
    const Var loss = t.square(t.param(p));
    t.backward(loss);
    CHECK_THROWS_AS((void)t.constant(Tensor::scalar(0.0)), sag::Error);
    CHECK_THROWS_AS(t.backward(loss), sag::Error);
    t.reset();
    p.zero_grad();
    const Var loss2 = t.square(t.param(p));
    t.backward(loss2);
    CHECK(p.grad[0] == doctest::Approx(2.0));
}

TEST_CASE("strict backward reports parameters that cannot reach the loss") {
    Parameter used("used", Tensor::scalar(1.5));
    Parameter orphan("orphan", Tensor::scalar(4.0));
    {
        Tape t;
        (void)t.param(orphan);
        const Var loss = t.square(t.param(used));
        CHECK_THROWS_AS(t.backward(loss, true), sag::DisconnectedParameter);
    }
    {
        Tape t;
        (void)t.param(orphan);
        const Var loss = t.square(t.param(used));
        t.backward(loss);  // default mode tolerates it
        CHECK(orphan.grad[0] == 0.0);
    }
}

TEST_CASE("shape and domain errors") {
    Tape t;
    const Var a = t.constant(Tensor(2, 3, 1.0));
    const Var b = t.constant(Tensor(3, 3, 1.0));
    CHECK_THROWS_AS((void)t.add(a, b), sag::ShapeMismatch);
    CHECK_THROWS_AS((void)t.elementwise_mul(a, b), sag::ShapeMismatch);
    CHECK_THROWS_AS((void)t.concat_rows(a, t.constant(Tensor(1, 2, 0.0))),
                    sag::ShapeMismatch);
    CHECK_THROWS_AS((void)t.matmul(a, t.constant(Tensor(2, 2, 0.0))),
                    sag::ShapeMismatch);
    CHECK_THROWS_AS(t.backward(a), sag::NotScalar);
    CHECK_THROWS_AS((void)t.tanh(Var{999}), sag::Error);
}

TEST_CASE("non-finite intermediate values are rejected eagerly") {
    Tape t;
    const Var huge = t.constant(Tensor(1, 1, 1e308));
    CHECK_THROWS_AS((void)t.add(huge, huge), sag::NonFiniteValue);
    const Var nan_in = t.constant(Tensor::scalar(std::nan("")));
    CHECK_THROWS_AS((void)t.tanh(nan_in), sag::NonFiniteValue);
}
