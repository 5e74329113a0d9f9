#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "grkan/activations.hpp"
#include "grkan/rng.hpp"

using namespace grkan;
using ad::Tensor;
using ad::Var;

TEST_CASE("fixed activation values") {
    CHECK(fixed_eval(Act::relu, -1.0) == 0.0);
    CHECK(fixed_eval(Act::swish, 0.0) == 0.0);
    CHECK(fixed_eval(Act::gelu, 0.0) == 0.0);
    CHECK(fixed_eval(Act::leaky_relu, -2.0) == doctest::Approx(-0.02).epsilon(1e-12));
    CHECK(fixed_eval(Act::identity, 1.75) == 1.75);
    // Graph version agrees with the scalar version.
    for (Act a : {Act::relu, Act::leaky_relu, Act::gelu, Act::swish, Act::identity})
        for (double x : {-2.0, -0.3, 0.0, 0.7, 3.1}) {
            Var v(Tensor::scalar(x));
            CHECK(fixed_act(a, v).value().item() ==
                  doctest::Approx(fixed_eval(a, x)).epsilon(1e-14));
        }
}

TEST_CASE("gelu tanh form tracks the error-function form") {
    for (int i = 0; i <= 1000; ++i) {
        const double x = -5.0 + 10.0 * i / 1000.0;
        const double exact = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
        CHECK(std::abs(fixed_eval(Act::gelu, x) - exact) < 3e-3);
    }
}

TEST_CASE("prelu values and parameter gradient") {
    Var a(Tensor::scalar(0.25), true);
    CHECK(prelu(Var(Tensor::scalar(-4.0)), a).value().item() == doctest::Approx(-1.0));
    CHECK(prelu(Var(Tensor::scalar(2.0)), Var(Tensor::scalar(123.0))).value().item() == 2.0);
    ad::Tape tape;
    Var y = prelu(Var(Tensor::scalar(-4.0)), a);
    tape.backward(y);
    CHECK(a.grad().item() == doctest::Approx(-4.0).epsilon(1e-12));
}

TEST_CASE("rational point values") {
    const RationalCoeffs ident = RationalCoeffs::identity();
    CHECK(std::abs(rational_eval(ident, 7.0) - 7.0) < 1e-12);
    RationalCoeffs one_over;  // a = (1,0,...), b = (1,0,0,0)
    one_over.num = {1, 0, 0, 0, 0, 0};
    one_over.den = {1, 0, 0, 0};
    CHECK(rational_eval(one_over, 2.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    const RationalCoeffs zero = RationalCoeffs::zeros();
    for (double x : {-3.0, 0.0, 11.0}) CHECK(rational_eval(zero, x) == 0.0);

    // Graph op agrees with the scalar oracle.
    Var num(Tensor::vec(one_over.num)), den(Tensor::vec(one_over.den));
    Var x(Tensor::vec({-1.5, 0.0, 2.0}));
    const Tensor y = rational(x, num, den).value();
    for (size_t i = 0; i < 3; ++i)
        CHECK(y[i] == doctest::Approx(rational_eval(one_over, x.value()[i])).epsilon(1e-14));
}

TEST_CASE("identity rational reproduces x across [-10,10]") {
    const RationalCoeffs ident = RationalCoeffs::identity();
    for (int i = 0; i <= 1000; ++i) {
        const double x = -10.0 + 20.0 * i / 1000.0;
        CHECK(std::abs(rational_eval(ident, x) - x) < 1e-12);
    }
}

TEST_CASE("safe denominator keeps |F| <= |P| on a million points") {
    Rng rng(33);
    RationalCoeffs c = RationalCoeffs::zeros();
    for (auto& a : c.num) a = rng.uniform(-2.0, 2.0);
    for (auto& b : c.den) b = rng.uniform(-2.0, 2.0);
    bool ok = true;
    for (int i = 0; i < 1000000 && ok; ++i) {
        const double x = -100.0 + 200.0 * i / 999999.0;
        double p = 0.0;
        for (size_t j = c.num.size(); j-- > 0;) p = p * x + c.num[j];
        const double f = rational_eval(c, x);
        // Denominator 1 + |Q| >= 1 means |F| <= |P|; also F must stay finite.
        if (!(std::isfinite(f) && std::abs(f) <= std::abs(p) + 1e-12)) ok = false;
    }
    CHECK(ok);
}

TEST_CASE("apl point values and relu degeneracy") {
    // S=1, slope 0.5, offset 0, x=-1 -> 0 + 0.5*max(0, 0-(-1)) = 0.5.
    Var s(Tensor::matrix(1, 1, {0.5})), o(Tensor::matrix(1, 1, {0.0}));
    CHECK(apl(Var(Tensor::matrix(1, 1, {-1.0})), s, o).value().item() == 0.5);
    CHECK(apl_eval({0.5}, {0.0}, -1.0) == 0.5);

    // All offsets below x: hinges inactive, pure relu.
    Var s2(Tensor::matrix(2, 1, {0.7, -0.3})), o2(Tensor::matrix(2, 1, {-1.0, -2.0}));
    CHECK(apl(Var(Tensor::matrix(1, 1, {10.0})), s2, o2).value().item() == 10.0);

    // Zero slopes reduce to relu exactly, bit for bit.
    Var sz(Tensor::zeros(3, 2)), oz([&] {
        Tensor t = Tensor::zeros(3, 2);
        Rng rng(5);
        for (size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, 0.5);
        return t;
    }());
    Tensor xs = Tensor::zeros(4, 2);
    Rng rng(6);
    for (size_t i = 0; i < xs.size(); ++i) xs[i] = rng.uniform(-3.0, 3.0);
    const Tensor got = apl(Var(xs), sz, oz).value();
    for (size_t i = 0; i < xs.size(); ++i) CHECK(got[i] == fixed_eval(Act::relu, xs[i]));
}

TEST_CASE("apl penalty arithmetic") {
    Var s(Tensor::matrix(1, 1, {1.0})), o(Tensor::matrix(1, 1, {2.0}));
    CHECK(apl_l2_penalty(s, o, 0.001).value().item() ==
          doctest::Approx(0.005).epsilon(1e-14));
    CHECK(apl_l2_penalty(s, o, 0.0).value().item() == 0.0);
    Var z(Tensor::zeros(2, 3));
    CHECK(apl_l2_penalty(z, z, 0.7).value().item() == 0.0);
}

TEST_CASE("learnable activations match finite differences") {
    Rng rng(44);
    double worst_x = 0.0, worst_param = 0.0;

    for (int p = 0; p < 30; ++p) {
        // PReLU w.r.t. x (away from the kink) and a.
        Tensor xs = Tensor::zeros(3);
        for (size_t i = 0; i < 3; ++i) {
            double v = rng.uniform(0.2, 3.0);
            xs[i] = rng.uniform(0.0, 1.0) < 0.5 ? -v : v;
        }
        const double a0 = rng.uniform(0.05, 0.8);
        worst_x = std::max(worst_x, ad::finite_diff_check(
            [&](const ad::Var& v) {
                return ad::sum(prelu(v, Var(Tensor::scalar(a0))));
            }, xs));
        worst_param = std::max(worst_param, ad::finite_diff_check(
            [&](const ad::Var& v) {
                return ad::sum(prelu(Var(xs), ad::segment(v, 0, 1)));
            }, Tensor::vec({a0})));

        // Rational w.r.t. x, numerator, denominator jointly.
        RationalCoeffs rc = RationalCoeffs::zeros();
        for (auto& c : rc.num) c = rng.uniform(-1.0, 1.0);
        for (auto& c : rc.den) c = rng.uniform(-1.0, 1.0);
        worst_x = std::max(worst_x, ad::finite_diff_check(
            [&](const ad::Var& v) {
                return ad::sum(rational(v, Var(Tensor::vec(rc.num)), Var(Tensor::vec(rc.den))));
            }, [&] {
                Tensor t = Tensor::zeros(4);
                for (size_t i = 0; i < 4; ++i) t[i] = rng.uniform(-2.5, 2.5);
                return t;
            }()));
        worst_param = std::max(worst_param, ad::finite_diff_check(
            [&](const ad::Var& v) {
                return ad::sum(rational(Var(xs), ad::segment(v, 0, 6), ad::segment(v, 6, 4)));
            }, [&] {
                Tensor t = Tensor::zeros(10);
                for (size_t i = 0; i < 6; ++i) t[i] = rc.num[i];
                for (size_t i = 0; i < 4; ++i) t[6 + i] = rc.den[i];
                return t;
            }()));

        // APL w.r.t. x (offsets pushed away from the sample) and both params.
        Tensor slopes = Tensor::zeros(2, 3), offsets = Tensor::zeros(2, 3);
        for (size_t i = 0; i < slopes.size(); ++i) slopes[i] = rng.normal(0.0, 0.4);
        for (size_t i = 0; i < offsets.size(); ++i) offsets[i] = rng.uniform(1.5, 2.5);
        Tensor ax = Tensor::zeros(6);
        for (size_t i = 0; i < 6; ++i) ax[i] = rng.uniform(0.2, 1.0);
        worst_x = std::max(worst_x, ad::finite_diff_check(
            [&](const ad::Var& v) {
                return ad::sum(apl(ad::reshape(v, 2, 3), Var(slopes), Var(offsets)));
            }, ax));
        worst_param = std::max(worst_param, ad::finite_diff_check(
            [&](const ad::Var& v) {
                return ad::sum(apl(Var(Tensor::matrix(2, 3, ax.data())),
                                   ad::reshape(ad::segment(v, 0, 6), 2, 3),
                                   ad::reshape(ad::segment(v, 6, 6), 2, 3))) +
                       apl_l2_penalty(ad::reshape(ad::segment(v, 0, 6), 2, 3),
                                      ad::reshape(ad::segment(v, 6, 6), 2, 3), 0.001);
            }, [&] {
                Tensor t = Tensor::zeros(12);
                for (size_t i = 0; i < 6; ++i) t[i] = slopes[i];
                for (size_t i = 0; i < 6; ++i) t[6 + i] = offsets[i];
                return t;
            }()));
    }
    CHECK(worst_x < 1e-4);
    CHECK(worst_param < 1e-4);
}

TEST_CASE("rational fit: identity target is exact") {
    const RationalFit fit = rational_fit_init(Act::identity, -3.0, 3.0, 200);
    CHECK(fit.max_abs_error < 1e-9);
    CHECK(std::abs(fit.coeffs.num[0]) < 1e-7);
    CHECK(fit.coeffs.num[1] == doctest::Approx(1.0).epsilon(1e-6));
    for (size_t i = 2; i < fit.coeffs.num.size(); ++i)
        CHECK(std::abs(fit.coeffs.num[i]) < 1e-7);
}

TEST_CASE("rational fit: swish and relu targets") {
    const RationalFit swish_fit = rational_fit_init(Act::swish, -3.0, 3.0, 1000);
    CHECK(swish_fit.max_abs_error < 0.05);
    const RationalFit relu_fit = rational_fit_init(Act::relu, -3.0, 3.0, 1000);
    CHECK(relu_fit.max_abs_error > 0.0);
    CHECK_THROWS_AS(rational_fit_init(Act::swish, -3.0, 3.0, 89), std::invalid_argument);
}

TEST_CASE("cached fit is deterministic and shared") {
    const RationalFit& a = rational_fit_cached(Act::swish, -3.0, 3.0, 1000);
    const RationalFit& b = rational_fit_cached(Act::swish, -3.0, 3.0, 1000);
    CHECK(&a == &b);
    const RationalFit fresh = rational_fit_init(Act::swish, -3.0, 3.0, 1000);
    for (size_t i = 0; i < a.coeffs.num.size(); ++i)
        CHECK(a.coeffs.num[i] == fresh.coeffs.num[i]);
    for (size_t i = 0; i < a.coeffs.den.size(); ++i)
        CHECK(a.coeffs.den[i] == fresh.coeffs.den[i]);
}

TEST_CASE("second moment of the identity rational is 1") {
    CHECK(rational_second_moment(RationalCoeffs::identity()) ==
          doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("grouped rational splits columns by group") {
    RationalCoeffs ident = RationalCoeffs::identity();
    RationalCoeffs doubler = RationalCoeffs::zeros();
    doubler.num[1] = 2.0;
    std::vector<Var> nums = {Var(Tensor::vec(ident.num)), Var(Tensor::vec(doubler.num))};
    std::vector<Var> dens = {Var(Tensor::vec(ident.den)), Var(Tensor::vec(doubler.den))};
    Var x(Tensor::matrix(2, 4, {1, 2, 3, 4, 5, 6, 7, 8}));
    const Tensor y = grouped_rational(x, nums, dens).value();
    CHECK(y.at(0, 0) == doctest::Approx(1.0));
    CHECK(y.at(0, 1) == doctest::Approx(2.0));
    CHECK(y.at(0, 2) == doctest::Approx(6.0));
    CHECK(y.at(0, 3) == doctest::Approx(8.0));
    CHECK(y.at(1, 0) == doctest::Approx(5.0));
    CHECK(y.at(1, 3) == doctest::Approx(16.0));
}
