#include <cmath>

#include "ddlab/errors.hpp"
#include "ddlab/numerics.hpp"
#include "ddlab/utilities.hpp"
#include "doctest.h"

using namespace ddlab;

TEST_CASE("power and log utilities") {
    auto u = UtilitySpec::power(0.5);
    CHECK(u(4.0) == doctest::Approx(4.0));
    CHECK(u.deriv(4.0) == doctest::Approx(0.5));
    CHECK(u.sign() == 1);
    CHECK(u.log_abs(1e300) == doctest::Approx(std::log(2.0 * 1e150)));
    auto n = UtilitySpec::power(-1.0);
    CHECK(n(2.0) == doctest::Approx(-0.5));
    CHECK(n.sign() == -1);
    CHECK_THROWS_AS(UtilitySpec::power(1.0), DomainError);
    CHECK_THROWS_AS(UtilitySpec::power(0.0), DomainError);
    CHECK(UtilitySpec::log().sign() == 0);
}

TEST_CASE("utilities are nondecreasing and concave on a grid") {
    for (const auto& u : {UtilitySpec::power(0.5), UtilitySpec::power(-2.0), UtilitySpec::log()}) {
        auto g = numerics::log_grid(1.0, 1e4, 200);
        for (std::size_t i = 1; i + 1 < g.size(); ++i) {
            CHECK(u(g[i]) >= u(g[i - 1]));
            // Concavity: the chord lies below the function.
            const double t = (g[i] - g[i - 1]) / (g[i + 1] - g[i - 1]);
            const double chord = (1 - t) * u(g[i - 1]) + t * u(g[i + 1]);
            CHECK(u(g[i]) >= chord - 1e-12 * std::abs(chord));
        }
    }
}

TEST_CASE("elasticities") {
    for (double x : {0.1, 1.0, 7.0, 1e5}) {
        CHECK(elasticity(UtilitySpec::power(0.5), x) == doctest::Approx(0.5));
        CHECK(elasticity(UtilitySpec::power(-1.0), x) == doctest::Approx(1.0));
    }
    CHECK_THROWS_AS(elasticity(UtilitySpec::log(), 1.0), DomainError);
    // Probe: 1/2 - 1/((1 + L)(2 + L)), L = log x.
    auto p = UtilitySpec::sandwich_probe();
    for (double x : {1.0, 3.0, 100.0, 1e6}) {
        const double L = std::log(x);
        CHECK(elasticity(p, x) == doctest::Approx(0.5 - 1.0 / ((1 + L) * (2 + L))).epsilon(1e-12));
    }
}

TEST_CASE("composition with a power map") {
    auto U = UtilitySpec::power(0.5);
    auto F = MonotoneMap::power(1.0, 0.5, 0.0);
    auto c = compose(U, F, 0.25);
    CHECK(c.kind() == UtilityKind::composed);
    for (double x : {1.0, 2.0, 16.0}) {
        CHECK(c(x) == doctest::Approx(2.0 * std::pow(x, 0.25)));
        CHECK(elasticity(c, x) == doctest::Approx(0.25));
    }
    CHECK(*c.exponent() == 0.25);
    auto l = compose(UtilitySpec::log(), MonotoneMap::power(1.0, 0.5, 0.0));
    CHECK(l(9.0) == doctest::Approx(0.5 * std::log(9.0)));
    CHECK(composed_risk_aversion(2.0, 0.5) == doctest::Approx(1.5));
}

TEST_CASE("composition with a drawdown transform") {
    auto pair = make_transform_pair(DrawdownSpec::linear(0.5), 1.0);
    auto c = compose(UtilitySpec::power(0.5), pair);
    REQUIRE(c.exponent());
    CHECK(*c.exponent() == doctest::Approx(0.25));
    for (double x : {1.0, 3.0, 50.0}) CHECK(elasticity(c, x) == doctest::Approx(0.25));
    CHECK(c(0.0) == doctest::Approx(2.0 * std::sqrt(0.5)));
}

TEST_CASE("composition elasticity bound") {
    auto w = DrawdownSpec::piecewise_linear({{2.0, 0.8}, {5.0, 1.5}}, 0.2);
    auto pair = make_transform_pair(w, 1.0);
    for (const auto& U : {UtilitySpec::power(0.3), UtilitySpec::power(-3.0), UtilitySpec::sandwich_probe()}) {
        auto c = compose(U, pair);
        for (double x : numerics::log_grid(1.0, 1e5, 64)) {
            const double fx = pair.F(x);
            if (fx < 1.0 && U.name() == "sandwich-probe") continue;
            CHECK(elasticity(c, x) <= elasticity(U, fx) * (1 + 1e-10));
        }
    }
}

TEST_CASE("assumption preservation for composed power utilities") {
    // U = x^eps / eps dominates x^eps; U o F_w should dominate x^delta for
    // delta < eps (1 - alpha1).
    auto w = DrawdownSpec::piecewise_linear({{2.0, 0.6}}, 0.4);
    auto pair = make_transform_pair(w, 1.0);
    const double eps = 0.5, alpha1 = w.alpha1(1.0);
    const double delta = 0.99 * eps * (1 - alpha1);
    auto c = compose(UtilitySpec::power(eps), pair);
    const auto g = numerics::log_grid(10.0, 1e6, 100);
    double prev = 0.0;
    for (double x : g) {
        const double ratio = c(x) / std::pow(x, delta);
        if (x > 1e3) CHECK(ratio >= prev * (1 - 1e-9));
        prev = ratio;
    }
}

TEST_CASE("scaling lemma on power, composed and log utilities") {
    auto grids = ScalingGrids::defaults(1.0);
    auto r = verify_scaling_lemma(UtilitySpec::power(0.5), 1.0, grids);
    CHECK(r.gamma == doctest::Approx(0.5));
    CHECK(r.violations == 0);
    auto rn = verify_scaling_lemma(UtilitySpec::power(-2.0), 1.0, grids);
    CHECK(rn.gamma == doctest::Approx(-2.0));
    CHECK(rn.violations == 0);
    auto pair = make_transform_pair(DrawdownSpec::linear(0.5), 1.0);
    auto rc = verify_scaling_lemma(compose(UtilitySpec::power(0.5), pair), 1.0, grids);
    CHECK(rc.gamma == doctest::Approx(0.25));
    CHECK(rc.violations == 0);
    auto rl = verify_scaling_lemma(UtilitySpec::log(), 1.0, grids);
    CHECK(rl.gamma == doctest::Approx(1.0));
    CHECK(rl.violations == 0);
    auto rld = verify_scaling_lemma(compose(UtilitySpec::log(), pair), 1.0, grids);
    CHECK(rld.gamma == doctest::Approx(0.5));
    CHECK(rld.violations == 0);
}

TEST_CASE("exponential utility fails the asymptotic elasticity bound") {
    auto r = verify_scaling_lemma(UtilitySpec::exponential(), 1.0, ScalingGrids::defaults(1.0));
    CHECK_FALSE(r.asymptotic_elasticity_ok);
    CHECK_FALSE(r.note.empty());
}

TEST_CASE("sandwich of a power utility") {
    for (double g : {0.5, -1.0}) {
        for (double eps : {0.0, 0.1}) {
            auto b = power_sandwich(UtilitySpec::power(g), g, eps, 2.0);
            CHECK(b.c_minus == doctest::Approx((1 - eps) * std::pow(2.0, g * eps)).epsilon(1e-10));
            CHECK(b.c_plus == doctest::Approx((1 + eps) * std::pow(2.0, -g * eps)).epsilon(1e-10));
        }
    }
    auto b0 = power_sandwich(UtilitySpec::power(0.5), 0.5, 0.0, 1.0);
    CHECK(b0.c_minus == doctest::Approx(1.0));
    CHECK(b0.c_plus == doctest::Approx(1.0));
    CHECK_THROWS_AS(power_sandwich(UtilitySpec::log(), 0.0, 0.1, 1.0), DomainError);
}

TEST_CASE("sandwich of the probe utility against a dense grid oracle") {
    auto U = UtilitySpec::sandwich_probe();
    const double g = 0.5, eps = 0.1;
    auto b = power_sandwich(U, g, eps, 1.0);
    const double gm = g * (1 - eps), gp = g * (1 + eps);
    double lo = INFINITY, hi = -INFINITY;
    for (double x : numerics::log_grid(1.0, 1e6, 200000)) {
        lo = std::min(lo, U(x) / (std::pow(x, gm) / gm));
        hi = std::max(hi, U(x) / (std::pow(x, gp) / gp));
    }
    CHECK(b.c_minus == doctest::Approx(lo).epsilon(1e-9));
    CHECK(b.c_plus == doctest::Approx(hi).epsilon(1e-9));
    for (double x : numerics::log_grid(1.0, 1e6, 5000)) {
        CHECK(b.c_minus * std::pow(x, gm) / gm <= U(x) * (1 + 1e-12));
        CHECK(U(x) <= b.c_plus * std::pow(x, gp) / gp * (1 + 1e-12));
    }
}
