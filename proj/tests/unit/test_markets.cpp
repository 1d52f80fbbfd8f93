#include <cmath>
#include <random>

#include "ddlab/errors.hpp"
#include "ddlab/markets.hpp"
#include "doctest.h"

using namespace ddlab;

TEST_CASE("market price of risk") {
    auto m = CompleteMarketSpec::constant(0.08, 0.02, 0.2);
    CHECK(market_price_of_risk(m, 0.0)(0) == doctest::Approx(0.3));
    CHECK(market_price_of_risk(CompleteMarketSpec::constant(0.02, 0.02, 0.2), 1.0)(0) == 0.0);
    MarketPiece p;
    p.r = 0.01;
    p.mu = Eigen::Vector2d(0.05, 0.09);
    p.sigma = Eigen::Matrix2d{{0.2, 0.0}, {0.0, 0.4}};
    CompleteMarketSpec two({p});
    auto th = market_price_of_risk(two, 0.0);
    CHECK(th(0) == doctest::Approx(0.2));
    CHECK(th(1) == doctest::Approx(0.2));
    CHECK(two.theta_sq_star() == doctest::Approx(0.08));
    CHECK(two.condition_numbers()[0] == doctest::Approx(2.0));
    p.sigma = Eigen::Matrix2d{{0.2, 0.4}, {0.1, 0.2}};
    CHECK_THROWS_AS(CompleteMarketSpec({p}), DomainError);
}

TEST_CASE("piecewise curves and running averages") {
    MarketPiece a, b;
    a.r = 0.0;
    a.mu = Eigen::VectorXd::Constant(1, 0.1);
    a.sigma = Eigen::MatrixXd::Constant(1, 1, 0.2);
    b = a;
    b.t_start = 5.0;
    b.mu(0) = 0.06;
    CompleteMarketSpec m({a, b});
    CHECK(m.theta_sq_star() == doctest::Approx(0.09));
    CHECK(m.theta_sq_average(10.0) == doctest::Approx(0.5 * 0.25 + 0.5 * 0.09));
    CHECK(m.theta_sq_average(2.0) == doctest::Approx(0.25));
    CHECK(m.r(7.0) == 0.0);
}

TEST_CASE("merton fractions") {
    auto m = CompleteMarketSpec::constant(0.06, 0.0, 0.2);
    CHECK(merton_fraction(m, 0.5, 0.0)(0) == doctest::Approx(3.0));
    CHECK(merton_fraction(m, -99.0, 0.0)(0) == doctest::Approx(0.015));
    CHECK(merton_fraction(CompleteMarketSpec::constant(0.0, 0.0, 0.2), 0.5, 0.0)(0) == 0.0);
    CHECK_THROWS_AS(merton_fraction(m, 1.0, 0.0), DomainError);
    // Constrained exposure multiplier is the Merton fraction at gamma (1 - alpha).
    CHECK(merton_fraction(m, 0.25, 0.0)(0) == doctest::Approx(1.5 / 0.75));
}

TEST_CASE("closed-form rates") {
    CHECK(cer_power_unconstrained(0.02, 0.09, 0.5) == doctest::Approx(0.055));
    CHECK(cer_drawdown_constrained(0.02, 0.09, 0.5, 0.5) == doctest::Approx(0.025));
    CHECK(cer_power_unconstrained(0.0, 0.0, 0.5) == 0.0);
    CHECK(cer_drawdown_constrained(0.0, 0.0, 0.5, 0.5) == 0.0);
    CHECK(cer_power_unconstrained(0.0, 0.09, 0.25) == doctest::Approx(0.015));
    CHECK(cer_power_unconstrained(0.0, 0.09, 0.5) == doctest::Approx(0.045));
    CHECK_THROWS_AS(cer_power_unconstrained(0.0, 0.09, 0.0), DomainError);
}

TEST_CASE("dollars offset identity across a parameter grid") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const double gamma = i % 2 ? -5.0 * u(rng) - 1e-3 : 0.999 * u(rng) + 1e-4;
        const double alpha = 0.95 * u(rng);
        const double r = 0.05 * u(rng), th = 0.5 * u(rng);
        const double lhs = cer_drawdown_constrained(r, th, gamma, alpha);
        const double rhs = cer_power_unconstrained(r, th, gamma * (1 - alpha)) + std::abs(gamma) * alpha * r;
        CHECK(std::abs(lhs - rhs) <= 1e-12);
        CHECK(cer_drawdown_constrained(r, th, gamma, 0.0) ==
              doctest::Approx(cer_power_unconstrained(r, th, gamma)).epsilon(1e-15));
    }
}

TEST_CASE("constrained policy step") {
    auto m = CompleteMarketSpec::constant(0.06, 0.0, 0.2);
    auto w = DrawdownSpec::linear(0.5);
    const double ret[] = {0.01};
    // Gap 1, Merton fraction at 0.25 is 2, so the step adds 0.02.
    CHECK(constrained_policy_step(m, 0.5, 0.5, w, 3.0, 4.0, ret, 0.0) == doctest::Approx(3.02));
    auto flat = CompleteMarketSpec::constant(0.0, 0.0, 0.2);
    CHECK(constrained_policy_step(flat, 0.5, 0.5, w, 3.0, 4.0, ret, 0.0) == 3.0);
}

TEST_CASE("factor model hand instance") {
    FactorModelSpec f{0.02, 0.08, 0.0, 0.2, 0.2, -1.0};
    auto v = fleming_sheu_value(f, -1.0);
    CHECK(std::abs(v.E - 0.75) <= 1e-12);
    CHECK(std::abs(v.K) <= 1e-12);
    CHECK(std::abs(v.D + 1.0) <= 1e-12);
    CHECK(std::abs(v.eta) <= 1e-12);
    CHECK(std::abs(v.value - 0.00875) <= 1e-12);
    // The printed K keeps 1/(sigma^2 + rho^2) without mu2 sigma and differs
    // even at mu2 = 0, where its validity condition then fails.
    CHECK_THROWS_AS(fleming_sheu_value(f, -1.0, KVariant::printed), DomainError);
    auto tiny = fleming_sheu_value(f, -1e-9);
    CHECK(std::abs(tiny.value) <= 1e-8);
}

TEST_CASE("factor model rejection paths") {
    // gamma in (0, 1) with a large mu2 drives the radicand negative.
    FactorModelSpec f{0.02, 0.08, 1.0, 0.2, 0.2, 0.0};
    CHECK_THROWS_AS(fleming_sheu_value(f, 0.5), DomainError);
    // Validity condition mu2^2 >= sigma^2 K^2 violated.
    FactorModelSpec g{0.02, 0.08, 0.01, 0.2, 0.2, 1.0};
    CHECK_THROWS_AS(fleming_sheu_value(g, -1.0), DomainError);
    CHECK_THROWS_AS(fleming_sheu_value(g, 1.0), DomainError);
}

TEST_CASE("factor model constrained value follows the dollars offset") {
    FactorModelSpec f{0.02, 0.08, 0.0, 0.2, 0.2, -1.0};
    auto c = fleming_sheu_constrained_value(f, -2.0, 0.5);
    auto u = fleming_sheu_value(f, -1.0);
    CHECK(c.value == doctest::Approx(u.value + 2.0 * 0.5 * 0.02));
}

TEST_CASE("deflator bounds") {
    const double th = 0.09;
    auto b = deflator_finiteness_check(lognormal_deflator_moment_rate(th, 0.0, -1.0), 0.5);
    CHECK(b.q == doctest::Approx(-1.0));
    CHECK(b.finite);
    CHECK(b.cer_upper == doctest::Approx(cer_power_unconstrained(0.0, th, 0.5)));
    auto n = deflator_finiteness_check(lognormal_deflator_moment_rate(th, 0.0, 0.5), -1.0);
    CHECK(n.q == doctest::Approx(0.5));
    CHECK(lognormal_deflator_moment_rate(th, 0.0, 0.5) == doctest::Approx(-th / 8));
    CHECK(n.cer_upper == doctest::Approx(cer_power_unconstrained(0.0, th, -1.0)));
    auto rr = deflator_finiteness_check(lognormal_deflator_moment_rate(th, 0.02, -1.0), 0.5);
    CHECK(rr.cer_upper == doctest::Approx(cer_power_unconstrained(0.02, th, 0.5)));
    auto z = deflator_finiteness_check(lognormal_deflator_moment_rate(0.0, 0.0, -1.0), 0.5);
    CHECK(z.bound == 0.0);
    CHECK(lognormal_deflator_moment_rate(th, 0.0, 1.0) == 0.0);
}

TEST_CASE("empirical deflator moments against the lognormal oracle") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> z;
    const double theta = 0.3, T = 2.0;
    std::vector<double> lz(200000);
    for (auto& l : lz) l = -theta * std::sqrt(T) * z(rng) - 0.5 * theta * theta * T;
    const double est = empirical_deflator_moment_rate(lz, T, 0.5);
    CHECK(est == doctest::Approx(lognormal_deflator_moment_rate(0.09, 0.0, 0.5)).epsilon(0.02));
    double mean = 0.0;
    for (double l : lz) mean += l / lz.size();
    CHECK(mean == doctest::Approx(-0.5 * 0.09 * T).epsilon(0.05));
}
