#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fbsde/errors.hpp"
#include "fbsde/model.hpp"

using namespace fbsde;

namespace {

FbsdeProblem zero_problem()
{
    FbsdeProblem p;
    p.name = "zero";
    p.x0 = {0.0};
    p.drift = [](double, std::span<double const>, double, std::span<double> out) { out[0] = 0; };
    p.diffusion = [](double, std::span<double const>, double, std::span<double> out) {
        out[0] = 0;
    };
    p.driver = [](double, std::span<double const>, double, std::span<double const>) {
        return 0.0;
    };
    p.terminal = [](std::span<double const>) { return 0.0; };
    return p;
}

}  // namespace

TEST_CASE("grid endpoints")
{
    for (int n : {1, 3, 7, 50, 1000})
    {
        Grid const g(n, 1.3);
        CHECK(g.time(0) == 0.0);
        CHECK(g.time(n) == 1.3);
        CHECK(std::abs(g.step_size() * n - 1.3) <= 4 * std::numeric_limits<double>::epsilon());
    }
    CHECK_THROWS_AS(Grid(0, 1.0), InvalidArgument);
    CHECK_THROWS_AS(Grid(10, 0.0), InvalidArgument);
}

TEST_CASE("problem validation rejects bad shapes")
{
    auto p = zero_problem();
    CHECK_NOTHROW(p.validate());
    p.x0 = {0.0, 1.0};
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p = zero_problem();
    p.horizon = -1;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p = zero_problem();
    p.driver = nullptr;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
}

TEST_CASE("bounds consistency")
{
    CoefficientBounds b;
    CHECK(b.inconsistencies().empty());
    b.f_x = 2;
    b.K = 1;
    CHECK(b.inconsistencies().size() == 1);
    CHECK_THROWS_AS(b.validate(), InvalidArgument);
    b.K = 2;
    b.k_f = -3;
    CHECK_THROWS_AS(b.validate(), InvalidArgument);
    b.K = 3;
    CHECK_NOTHROW(b.validate());
}

TEST_CASE("zero problem with zero bounds passes the probes")
{
    auto const report = validate_problem(zero_problem(), CoefficientBounds{});
    CHECK(report.passed());
    CHECK(report.probes == 1000);
}

TEST_CASE("sine problem passes its probes, including f_z = 0")
{
    for (int dim : {1, 3})
        for (double rate : {0.0, 0.7})
        {
            auto const p = sine_example(dim, 0.1, rate, std::numbers::pi / 2);
            auto const b = sine_example_bounds(dim, 0.1, rate);
            CHECK(b.sigma_y == doctest::Approx(0.01 * dim));
            CHECK(b.f_z == 0.0);
            CHECK(b.g_x == dim);
            auto const report = validate_problem(p, b);
            CHECK(report.passed());
            for (auto const& v : report.violations)
                MESSAGE(v.inequality << ": " << v.lhs << " > " << v.rhs);
        }
}

TEST_CASE("quadratic terminal violates a linear growth bound")
{
    CatalogParams params;
    params.sigma = 1.0;
    auto const p = make_catalog_problem("quadratic_terminal", params);
    CoefficientBounds b;
    b.sigma_0 = 1;
    b.g_x = 1;
    b.g_0 = 1;
    b.K = 1;
    auto const report = validate_problem(p, b);
    CHECK_FALSE(report.passed());
    bool growth = false;
    for (auto const& v : report.violations)
        growth = growth || v.inequality == "terminal growth";
    CHECK(growth);
}

TEST_CASE("non-finite coefficient output is a hard violation")
{
    auto p = zero_problem();
    p.terminal = [](std::span<double const> x) { return x[0] > 0 ? 1.0 / 0.0 : 0.0; };
    auto const report = validate_problem(p, CoefficientBounds{});
    CHECK(report.hard_violations() > 0);
}

TEST_CASE("sine example values")
{
    double const half_pi = std::numbers::pi / 2;
    std::vector<double> x4(4, half_pi), x10(10, half_pi), x1(1, half_pi);

    auto const p4 = sine_example(4, 0.4, 0.0, half_pi);
    CHECK(p4.terminal(x4) == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(sine_exact_value(0.0, 1.0, 0.0, x4) == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(sine_exact_value(0.0, 1.0, 0.0, x1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(sine_exact_value(1.0, 1.0, 0.0, x10) == doctest::Approx(3.678794).epsilon(1e-6));

    // diffusion degenerates at y = 0
    std::vector<double> s(16, 1.0);
    p4.diffusion(0.3, x4, 0.0, s);
    for (double v : s)
        CHECK(v == 0.0);
    p4.diffusion(0.3, x4, 2.0, s);
    CHECK(s[0] == doctest::Approx(0.8));
    CHECK(s[1] == 0.0);
    CHECK(s[5] == doctest::Approx(0.8));

    CHECK_THROWS_AS(sine_example(0, 0.1, 0.0, half_pi), InvalidArgument);
}

TEST_CASE("sine driver makes the closed form consistent")
{
    // With u = e^{-r(T-t)} S(x), the backward equation's drift term satisfies
    // u_t + 1/2 sigma^2 u^2 Laplacian u = -f; check at a few points.
    double const sigma = 0.3, r = 0.4, T = 1.0;
    auto const p = sine_example(2, sigma, r, 0.0, T);
    for (double t : {0.0, 0.5, 0.9})
        for (double a : {0.2, 1.1})
        {
            std::vector<double> x{a, 0.7 - a};
            double const S = std::sin(x[0]) + std::sin(x[1]);
            double const u = std::exp(-r * (T - t)) * S;
            double const u_t = r * u;
            double const lap = -std::exp(-r * (T - t)) * S;
            double const generator = u_t + 0.5 * sigma * sigma * u * u * lap;
            std::vector<double> z(2, 0.0);
            CHECK(p.driver(t, x, u, z) == doctest::Approx(-generator).epsilon(1e-12));
        }
}

TEST_CASE("catalog problems")
{
    CatalogParams params;
    params.dim = 2;
    for (auto const& name : catalog_names())
    {
        auto const p = make_catalog_problem(name, params);
        CHECK_NOTHROW(p.validate());
        auto const b = catalog_bounds(name, params);
        if (name == "quadratic_terminal")
        {
            CHECK_FALSE(b.has_value());
            continue;
        }
        REQUIRE(b.has_value());
        CHECK(b->inconsistencies().empty());
        CHECK(validate_problem(p, *b).passed());
    }
    CHECK_THROWS_AS(make_catalog_problem("nope", params), InvalidArgument);

    auto const ce = make_catalog_problem("counterexample", params);
    CHECK(ce.dim_x == 1);
    CHECK(ce.horizon == doctest::Approx(0.75 * std::numbers::pi));
}
