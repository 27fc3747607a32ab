#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fbsde/conditions.hpp"
#include "fbsde/errors.hpp"

using namespace fbsde;

namespace {

// Independent evaluations used as oracles.
double series_gamma0(double x)
{
    // sum_k x^k / (k+1)!
    double term = 1.0, sum = 0.0;
    for (int k = 0; k < 200; ++k)
    {
        sum += term;
        term *= x / (k + 2);
    }
    return sum;
}

double dense_gamma1(double x, double y, int points = 200000)
{
    double best = 0;
    for (int k = 1; k <= points; ++k)
    {
        double const t = static_cast<double>(k) / points;
        best = std::max(best, t * std::exp(t * x) * series_gamma0(t * y));
    }
    return best;
}

CoefficientBounds counterexample_bounds()
{
    CoefficientBounds b;
    b.b_y = 1;
    b.f_x = 1;
    b.g_x = 1;
    b.K = 1;
    return b;
}

CoefficientBounds random_bounds(std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    CoefficientBounds b;
    b.K = 2.0 * u(rng);
    auto part = [&] { return u(rng) < 0.3 ? 0.0 : b.K * u(rng); };
    b.k_b = b.K * (2 * u(rng) - 1);
    b.k_f = b.K * (2 * u(rng) - 1);
    b.b_y = part();
    b.sigma_x = part();
    b.sigma_y = part();
    b.f_x = part();
    b.f_z = part();
    b.g_x = part();
    b.b_0 = part();
    b.sigma_0 = part();
    b.f_0 = part();
    b.g_0 = part();
    return b;
}

}  // namespace

TEST_CASE("gamma0 values")
{
    CHECK(gamma0(0.0) == 1.0);
    CHECK(gamma0(1.0) == doctest::Approx(std::numbers::e - 1).epsilon(1e-15));
    CHECK(gamma0(-50.0) == doctest::Approx((1 - std::exp(-50.0)) / 50).epsilon(1e-15));
    for (double x : {-3.0, -1e-3, -1e-7, 1e-9, 1e-7, 1e-5, 0.3, 2.0})
        CHECK(gamma0(x) == doctest::Approx(series_gamma0(x)).epsilon(1e-14));
    CHECK(gamma0(-1e8) < 2e-8);
    CHECK(std::isinf(gamma0(1e4)));
}

TEST_CASE("gamma0 is strictly increasing")
{
    double prev = gamma0(-60.0);
    for (double x = -59.9; x < 60; x += 0.1)
    {
        double const v = gamma0(x);
        CHECK(v > prev);
        prev = v;
    }
}

TEST_CASE("gamma1 values")
{
    CHECK(gamma1(0.0, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    double const e = std::numbers::e;
    CHECK(gamma1(1.0, 1.0) == doctest::Approx(e * e - e).epsilon(1e-9));
    CHECK(gamma1(0.0, -1e6) < 2e-6);
    CHECK(gamma1(0.0, -1e3) < gamma1(0.0, -1e2));
    // interior maximum: x negative, y moderate
    for (auto [x, y] : {std::pair{-3.0, 1.0}, {-10.0, 2.0}, {2.0, -5.0}, {-1.0, -1.0}})
        CHECK(gamma1(x, y) == doctest::Approx(dense_gamma1(x, y)).epsilon(1e-7));
}

TEST_CASE("gamma1 dominates the integrand and is monotone")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> arg(-8.0, 4.0), theta(1e-6, 1.0 - 1e-6);
    for (int k = 0; k < 200; ++k)
    {
        double const x = arg(rng), y = arg(rng);
        double const g = gamma1(x, y);
        for (int j = 0; j < 20; ++j)
        {
            double const t = theta(rng);
            CHECK(g >= t * std::exp(t * x) * gamma0(t * y) * (1 - 1e-14));
        }
        double const dx = std::abs(arg(rng)) * 0.1;
        CHECK(gamma1(x + dx, y) >= g * (1 - 1e-12));
        CHECK(gamma1(x, y + dx) >= g * (1 - 1e-12));
    }
}

TEST_CASE("discrete gamma functions")
{
    CHECK(gamma0_discrete(0, 3.0, 0.1) == 0.0);
    CHECK(gamma0_discrete(7, 0.0, 0.1) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(gamma0_discrete(2, 1.0, 0.5) == doctest::Approx(1.25).epsilon(1e-15));
    CHECK(gamma0_discrete(5, 1e-9, 0.2) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(gamma1_discrete(0, 1.0, 2.0, 0.1) == 0.0);
    CHECK(gamma1_discrete(20, 0.0, 0.0, 0.05) == doctest::Approx(1.0).epsilon(1e-14));
    // (1 + x h)^i gamma0^i(y) by direct enumeration
    double best = 0;
    for (int i = 0; i <= 30; ++i)
        best = std::max(best, std::pow(1 - 4.0 * 0.1, i) * (std::pow(1 + 2.0 * 0.1, i) - 1) / 2.0);
    CHECK(gamma1_discrete(30, -4.0, 2.0, 0.1) == doctest::Approx(best).epsilon(1e-13));
}

TEST_CASE("discrete gammas approach their continuous limits")
{
    double const T = 1.0;
    for (double x : {-2.0, 0.5, 1.7})
    {
        double prev = INFINITY;
        for (int n : {100, 1000, 10000})
        {
            double const err = std::abs(gamma0_discrete(n, x, T / n) / (T * gamma0(x * T)) - 1);
            CHECK(err < 5.0 * prev / 10.0 + 1e-15);  // roughly tenfold per decade
            prev = err;
        }
        CHECK(prev < 1e-3);
    }
    for (auto [x, y] : {std::pair{1.0, 1.0}, {-3.0, 2.0}, {0.5, -1.0}})
    {
        int const n = 10000;
        CHECK(gamma1_discrete(n, x, y, T / n) ==
              doctest::Approx(T * gamma1(x * T, y * T)).epsilon(1e-3));
    }
}

TEST_CASE("lambda schedule")
{
    auto s = lambda_schedule(1.0, 0.01);
    CHECK(s.lambda1 == 0.0);
    CHECK(s.lambda2 == doctest::Approx(0.1));
    CHECK(s.lambda3 == doctest::Approx(0.79));
    s = lambda_schedule(0.0, 0.25);
    CHECK(s.lambda2 == doctest::Approx(0.5));
    CHECK(s.lambda3 == doctest::Approx(0.5));
    try
    {
        lambda_schedule(1.0, 0.25);
        FAIL("expected ScheduleInfeasible");
    }
    catch (ScheduleInfeasible const& e)
    {
        double const hmax = e.max_feasible_step();
        CHECK(hmax == doctest::Approx(std::pow(std::sqrt(2.0) - 1, 2)).epsilon(1e-12));
        CHECK_NOTHROW(lambda_schedule(1.0, 0.999 * hmax));
    }
}

TEST_CASE("A constants")
{
    CoefficientBounds zero;
    LambdaSchedule s{0, 0.3, 0.4};
    auto a = a_constants(zero, s, 0.1);
    CHECK(a.a1 == 1.0);
    CHECK(a.a2 == 0.0);
    CHECK(a.a3 == doctest::Approx(0.7));
    CHECK(a.a4 == 1.0);
    CHECK(a.a5 == 0.0);

    CoefficientBounds b;
    b.sigma_x = 1;
    b.K = 1;
    CHECK(a_constants(b, s, 0.01).a1 == doctest::Approx(2.01));
    CHECK_THROWS_AS(a_constants(b, LambdaSchedule{0, 0, 1}, 0.01), InvalidArgument);

    for (double K : {0.0, 0.3, 1.0, 5.0})
        for (double h : {1e-6, 1e-4, 1e-3, 0.01})
        {
            if (h >= max_feasible_step(K))
                continue;
            CoefficientBounds bk;
            bk.K = K;
            CHECK(std::abs(a_constants(bk, lambda_schedule(K, h), h).a3 - 1.0) <= 1e-14);
        }
}

TEST_CASE("B constants")
{
    CoefficientBounds b;
    CHECK(b_constants(b, 0.1).b1 == 0.0);
    CHECK(b_constants(b, 0.1).b2 == 0.0);
    b.b_0 = 1;
    b.sigma_0 = 2;
    b.K = 1;
    CHECK(b_constants(b, 0.1).b1 == doctest::Approx(3.1));
    CoefficientBounds c;
    c.f_0 = 4;
    c.K = 1;
    CHECK(b_constants(c, 0.1).b2 == doctest::Approx(4.4));
}

TEST_CASE("L0 and L1")
{
    CoefficientBounds decoupled;
    decoupled.g_x = 1;
    decoupled.f_x = 1;
    decoupled.K = 1;
    CHECK(l0_l1(decoupled, 1.0).l0 == 0.0);

    auto const b = counterexample_bounds();
    double const T = 0.75 * std::numbers::pi;
    double const back = 1 + T;
    double const expo = back * T + 2 * T;
    auto const l = l0_l1(b, T);
    CHECK(l.l0 == doctest::Approx(back * T * std::exp(expo)).epsilon(1e-13));
    CHECK(back * T == doctest::Approx(7.91).epsilon(1e-3));
    CHECK(expo == doctest::Approx(12.62).epsilon(1e-3));
    CHECK(l.l0 > 1e6);
    CHECK(l.l1 == doctest::Approx(back * std::exp(expo)).epsilon(1e-13));

    CHECK(l0_l1(b, 1e-8).l0 < 1e-7);
}

TEST_CASE("growth constants")
{
    CoefficientBounds b;
    b.b_y = 0.5;
    b.K = 1;
    auto g = c0_c1_l2(b, 1.0, 3.0);
    CHECK(g.c0 == 0.0);
    CHECK(g.c1 == 0.0);

    CoefficientBounds d;
    d.g_x = 1;
    d.f_x = 1;
    d.K = 1;
    CHECK(c0_c1_l2(d, 1.0, 3.0).c1 == 0.0);

    // sine bounds, D = 1, sigma = 0.1, r = 0, evaluated by hand from dense oracles
    auto const s = sine_example_bounds(1, 0.1, 0.0);
    double const L1 = l0_l1(s, 1.0).l1;
    double const xb = (2 * s.k_f + 1 + s.f_z);
    double const xf = (2 * s.k_b + 1 + s.sigma_x) + (s.b_y + s.sigma_y) * L1;
    double const c0 = s.g_x * dense_gamma1(xb, xf) + s.f_x * series_gamma0(xb) * series_gamma0(xf);
    auto const got = c0_c1_l2(s, 1.0, L1);
    CHECK(got.c0 == doctest::Approx(c0).epsilon(1e-8));
    CHECK(got.c1 == doctest::Approx(s.sigma_y * c0).epsilon(1e-8));
    CHECK(got.c1 < 1);
    double const l2 = std::exp(xb) * s.g_0 + s.f_0 * series_gamma0(xb) + (s.b_0 + s.sigma_0) * c0;
    CHECK(got.l2 == doctest::Approx(l2).epsilon(1e-8));
}

TEST_CASE("contraction constant c2")
{
    CoefficientBounds dec;
    dec.g_x = 1;
    dec.f_x = 1;
    dec.K = 1;
    CHECK(c2(dec, 1.0, 2.0, 2.0) == 0.0);
    CoefficientBounds weak;
    weak.b_y = 1;
    weak.K = 1;
    CHECK(c2(weak, 1.0, 2.0, 2.0) == 0.0);

    auto const s = sine_example_bounds(1, 0.1, 0.0);
    double const L1 = l0_l1(s, 1.0).l1;
    double const v = c2(s, 1.0, L1, L1);
    CHECK(v < 1);
    // infimum never above any probed lambda1
    for (double lam = 1e-3; lam < 1e3; lam *= 1.37)
        CHECK(v <= c2_at(s, 1.0, lam, L1, L1) * (1 + 1e-12));
    // and close to a dense scan
    double best = INFINITY;
    for (double e = -4; e <= 4; e += 1e-3)
        best = std::min(best, c2_at(s, 1.0, std::pow(10.0, e), L1, L1));
    CHECK(v == doctest::Approx(best).epsilon(1e-6));
}

TEST_CASE("discrete contraction constant")
{
    CoefficientBounds dec;
    CHECK(c2_discrete(dec, 50, 1.0, 1.0, 3.0, 3.0) == 0.0);
    CoefficientBounds heavy;
    heavy.K = 5;
    heavy.b_y = 5;
    CHECK_THROWS_AS(c2_discrete(heavy, 2, 1.0, 1.0, 1.0, 1.0), ScheduleInfeasible);

    // Regression lock for the sine bounds at n = 50 (self-oracle).
    auto const s = sine_example_bounds(1, 0.1, 0.0);
    double const L1 = l0_l1(s, 1.0).l1;
    double const v50 = c2_discrete(s, 50, 1.0, 1.0, L1, L1);
    CHECK(std::isfinite(v50));
    CHECK(v50 > c2_at(s, 1.0, 1.0, L1, L1));
}

TEST_CASE("discrete contraction constant converges at the square-root rate")
{
    // The schedule term (1 + 1/lambda2) K h = K (sqrt(h) + h) makes the gap O(sqrt(h)):
    // each decade in n should shrink the relative gap by about sqrt(10).
    auto const s = sine_example_bounds(1, 0.1, 0.0);
    double const L1 = l0_l1(s, 1.0).l1;
    double const limit = c2_at(s, 1.0, 1.0, L1, L1);
    double prev = NAN;
    for (int n : {1000, 10000, 100000})
    {
        double const gap = std::abs(c2_discrete(s, n, 1.0, 1.0, L1, L1) / limit - 1);
        if (!std::isnan(prev))
        {
            double const ratio = prev / gap;
            CHECK(ratio > 2.5);
            CHECK(ratio < 10.0);
        }
        prev = gap;
    }
    auto const g = c0_c1_l2(s, 1.0, L1);
    auto const gd = c0_c1_l2_discrete(s, 100000, 1.0, L1);
    CHECK(gd.c0 == doctest::Approx(g.c0).epsilon(1e-2));
    CHECK(gd.l2 == doctest::Approx(g.l2).epsilon(1e-2));
}

TEST_CASE("check_conditions")
{
    auto const zero = check_conditions(CoefficientBounds{}, 1.0);
    CHECK(zero.all_hold());
    CHECK(zero.c2_at_l1 == 0.0);
    CHECK(zero.predicted_rate == doctest::Approx(0.5));

    auto const ce = check_conditions(counterexample_bounds(), 0.75 * std::numbers::pi);
    CHECK_FALSE(ce.condition_3_2_holds);
    CHECK_FALSE(ce.all_hold());

    auto const s = check_conditions(sine_example_bounds(1, 0.1, 0.0), 1.0, {0.01, 50});
    CHECK(s.all_hold());
    CHECK(s.bound_l_bar == doctest::Approx(1.01 * s.l1));
    CHECK(s.bound_h_bar == doctest::Approx(s.l2_at_l1 / (1 - s.c1_at_l1)));
    CHECK(s.predicted_rate == doctest::Approx(0.5 * (1 + s.c2_at_l1)));
    REQUIRE(s.schedule_feasible.has_value());
    CHECK(*s.schedule_feasible);

    auto const big = check_conditions(sine_example_bounds(10, 0.1, 0.0), 1.0);
    CHECK_FALSE(big.condition_3_2_holds);
}

TEST_CASE("contraction condition implies the growth condition on random bound sets")
{
    std::mt19937_64 rng(2024);
    int implied = 0;
    for (int k = 0; k < 300; ++k)
    {
        auto const b = random_bounds(rng);
        auto const r = check_conditions(b, 1.0);
        if (r.condition_5_1_holds)
        {
            ++implied;
            CHECK(r.condition_4_2_holds);
        }
    }
    CHECK(implied > 15);
}

TEST_CASE("stronger driver monotonicity never hurts")
{
    std::mt19937_64 rng(77);
    for (int k = 0; k < 100; ++k)
    {
        auto b = random_bounds(rng);
        auto const r1 = check_conditions(b, 1.0);
        b.k_f -= 1;
        b.K = std::max(b.K, std::abs(b.k_f));
        auto const r2 = check_conditions(b, 1.0);
        CHECK(r2.l0 <= r1.l0 * (1 + 1e-12));
        CHECK(r2.c1_at_l1 <= r1.c1_at_l1 * (1 + 1e-9) + 1e-300);
        CHECK(r2.c2_at_l1 <= r1.c2_at_l1 * (1 + 1e-9) + 1e-300);
        if (r1.all_hold())
            CHECK(r2.all_hold());
    }
}

TEST_CASE("overflow saturates")
{
    CoefficientBounds b;
    b.K = 1e6;
    b.b_y = 1e6;
    b.g_x = 1e6;
    b.k_b = 1e6;
    auto const r = check_conditions(b, 10.0);
    CHECK(std::isinf(r.l0));
    CHECK_FALSE(r.condition_3_2_holds);
    CHECK_FALSE(r.all_hold());
}
