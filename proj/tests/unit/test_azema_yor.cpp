#include <cmath>
#include <random>
#include <sstream>

#include "ddlab/azema_yor.hpp"
#include "ddlab/errors.hpp"
#include "doctest.h"

using namespace ddlab;

namespace {

SamplePath gbm(std::uint64_t seed, std::size_t steps, double dt, double mu, double sigma,
               double v0 = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    std::vector<double> t(steps + 1), v(steps + 1);
    v[0] = v0;
    for (std::size_t i = 1; i <= steps; ++i) {
        t[i] = i * dt;
        v[i] = v[i - 1] * std::exp((mu - 0.5 * sigma * sigma) * dt + sigma * std::sqrt(dt) * z(rng));
    }
    return SamplePath(t, v);
}

}  // namespace

TEST_CASE("sample path invariants") {
    SamplePath p({0.0, 1.0, 2.0}, {1.0, 3.0, 2.0});
    CHECK(p.runmax() == std::vector<double>{1.0, 3.0, 3.0});
    CHECK_THROWS_AS(SamplePath({0.0, 1.0}, {1.0, -1.0}), DomainError);
    CHECK_THROWS_AS(SamplePath({0.5, 1.0}, {1.0, 1.0}), DomainError);
    CHECK_THROWS_AS(SamplePath({0.0, 0.0}, {1.0, 1.0}), DomainError);
    CHECK_THROWS_AS(SamplePath({0.0, 1.0}, {1.0, 2.0}, {1.0, 1.5}), DomainError);
}

TEST_CASE("transform of a single point against its closed form") {
    auto pair = make_transform_pair(DrawdownSpec::linear(0.5), 1.0);
    SamplePath p({0.0, 1.0, 2.0}, {1.0, 4.0, 2.0});
    auto m = ay_transform(pair.F, p);
    CHECK(m.values()[2] == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(m.values()[1] == doctest::Approx(2.0).epsilon(1e-14));
    // v0^a (a Vbar^{1-a} + (1-a) Vbar^{-a} V)
    CHECK(m.values()[2] == doctest::Approx(0.5 * 2.0 + 0.5 * 0.5 * 2.0));
}

TEST_CASE("constant drawdown transform is affine and inverts algebraically") {
    auto pair = make_transform_pair(DrawdownSpec::constant(0.5), 1.0);
    auto v = gbm(3, 500, 1e-2, 0.05, 0.3);
    auto m = ay_transform(pair.F, v);
    for (std::size_t i = 0; i < v.size(); ++i) {
        CHECK(m.values()[i] == doctest::Approx(0.5 + 0.5 * v.values()[i]).epsilon(1e-14));
    }
    auto back = ay_inverse(pair.K, m);
    for (std::size_t i = 0; i < v.size(); ++i) {
        CHECK(back.values()[i] == doctest::Approx((m.values()[i] - 0.5) / 0.5).epsilon(1e-13));
    }
    // Mixing with the floor keeps V above eps v0.
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(m.values()[i] >= 0.5);
}

TEST_CASE("transform identities on GBM paths") {
    auto w = DrawdownSpec::linear(0.5);
    auto pair = make_transform_pair(w, 1.0);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto v = gbm(seed, 1000, 1e-3, 0.1, 0.4);
        auto m = ay_transform(pair.F, v);
        auto back = ay_inverse(pair.K, m);
        double worst = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            worst = std::max(worst, std::abs(back.values()[i] / v.values()[i] - 1.0));
            const double fmax = pair.F(v.runmax()[i]);
            CHECK(std::abs(m.runmax()[i] - fmax) <= 1e-12 * fmax);
            CHECK(m.values()[i] >= pair.F(v.values()[i]) * (1 - 1e-15));
        }
        CHECK(worst <= 1e-9);
        auto rep = check_drawdown(m, w);
        CHECK(rep.satisfied);
        CHECK(rep.min_margin >= 0.0);
    }
}

TEST_CASE("round trip through random piecewise drawdowns with tabulated K") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<std::pair<double, double>> knots;
        double x = 1.0 + u(rng), wv = 0.1 + 0.4 * u(rng);
        for (int k = 0; k < 4; ++k) {
            knots.push_back({x, wv * x});
            x *= 1.5 + u(rng);
            wv = std::min(0.8, wv + 0.1 * u(rng));
        }
        auto w = DrawdownSpec::piecewise_linear(knots, 0.5 * u(rng));
        auto pair = tabulated_pair(make_transform_pair(w, 1.0), 50.0);
        auto v = gbm(100 + trial, 1000, 1e-3, 0.3, 0.5);
        auto m = ay_transform(pair.F, v);
        auto back = ay_inverse(pair.K, m);
        for (std::size_t i = 0; i < v.size(); ++i) {
            CHECK(std::abs(back.values()[i] / v.values()[i] - 1.0) <= 1e-6);
        }
        CHECK(check_drawdown(m, w).satisfied);
    }
}

TEST_CASE("drawdown reports") {
    auto w = DrawdownSpec::linear(0.5);
    SamplePath flat({0.0, 1.0, 2.0}, {2.0, 2.0, 2.0});
    auto r = check_drawdown(flat, w);
    CHECK(r.satisfied);
    CHECK(r.min_margin == doctest::Approx(1.0));
    SamplePath dip({0.0, 1.0, 2.0, 3.0}, {1.0, 2.0, 0.8, 1.5});
    auto d = check_drawdown(dip, w);
    CHECK_FALSE(d.satisfied);
    CHECK(d.argmin_time == 2.0);
    CHECK(d.min_margin == doctest::Approx(-0.2));
}

TEST_CASE("euler step") {
    auto w = DrawdownSpec::linear(0.5);
    CHECK(sde_euler_step(3.0, 4.0, w, 0.01) == doctest::Approx(3.01));
    CHECK_THROWS_AS(sde_euler_step(1.5, 4.0, w, 0.01), DomainError);
}

TEST_CASE("euler integration approaches the transform as dt shrinks") {
    auto w = DrawdownSpec::linear(0.5);
    auto pair = make_transform_pair(w, 1.0);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z;
    const std::size_t fine = 1 << 14;
    std::vector<double> dw(fine);
    for (auto& d : dw) d = z(rng) * std::sqrt(1.0 / fine);
    double prev_gap = INFINITY;
    for (std::size_t steps : {std::size_t{256}, std::size_t{4096}}) {
        const std::size_t agg = fine / steps;
        std::vector<double> t(steps + 1), v(steps + 1);
        v[0] = 1.0;
        for (std::size_t i = 0; i < steps; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < agg; ++k) s += dw[i * agg + k];
            t[i + 1] = double(i + 1) / steps;
            v[i + 1] = v[i] * std::exp(-0.5 * 0.16 / steps + 0.4 * s);
        }
        SamplePath vp(t, v);
        auto x = sde_integrate(vp, w);
        auto m = ay_transform(pair.F, vp);
        double gap = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) gap = std::max(gap, std::abs(x.values()[i] - m.values()[i]));
        CHECK(gap < prev_gap);
        prev_gap = gap;
    }
    CHECK(prev_gap < 0.05);
}

TEST_CASE("csv and binary round trips") {
    auto v = gbm(9, 50, 0.01, 0.0, 0.2);
    std::stringstream ss;
    write_csv(ss, v);
    auto back = read_csv(ss);
    CHECK(back.values() == v.values());
    CHECK(back.times() == v.times());
    std::stringstream bs;
    write_batch(bs, {v, gbm(10, 7, 0.1, 0.0, 0.2)});
    auto batch = read_batch(bs);
    REQUIRE(batch.size() == 2);
    CHECK(batch[0].runmax() == v.runmax());
    CHECK(batch[1].size() == 8);
    std::stringstream bad("t,v\n");
    CHECK_THROWS_AS(read_csv(bad), DomainError);
}
