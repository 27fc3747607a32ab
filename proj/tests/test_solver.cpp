#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fbsde/errors.hpp"
#include "fbsde/solver.hpp"

using namespace fbsde;

namespace {

FbsdeProblem decoupled(TerminalFn terminal)
{
    FbsdeProblem p;
    p.name = "decoupled";
    p.x0 = {0.3};
    p.drift = [](double, std::span<double const>, double, std::span<double> out) { out[0] = 0; };
    p.diffusion = [](double, std::span<double const>, double, std::span<double> out) {
        out[0] = 1;
    };
    p.driver = [](double, std::span<double const>, double, std::span<double const>) {
        return 0.0;
    };
    p.terminal = std::move(terminal);
    return p;
}

SolverConfig small_config(std::size_t paths = 4000)
{
    SolverConfig c;
    c.paths = paths;
    c.seed = 17;
    return c;
}

}  // namespace

TEST_CASE("constant terminal value is reproduced exactly")
{
    auto const p = decoupled([](std::span<double const>) { return 2.5; });
    Grid const grid(10, 1.0);
    auto const r = solve(p, grid, small_config());
    CHECK(r.report.converged());
    CHECK(r.report.m_stop == 2);
    CHECK(r.estimate.y0() == doctest::Approx(2.5).epsilon(1e-12));
    double mean_dw = 0;
    for (std::size_t q = 0; q < 4000; ++q)
        mean_dw += (*r.increments)(q, 1, 0);
    mean_dw /= 4000;
    CHECK(r.estimate.z0()[0] == doctest::Approx(2.5 * mean_dw / grid.step_size()).epsilon(1e-9));
    std::vector<double> x{0.9};
    CHECK(r.estimate.value(5, x) == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("decoupled problem stops after the second iteration with identical fits")
{
    auto const p = decoupled([](std::span<double const> x) { return x[0]; });
    Grid const grid(10, 1.0);
    auto const r = solve(p, grid, small_config());
    REQUIRE(r.report.iterations.size() == 2);
    CHECK(r.report.m_stop == 2);
    CHECK(r.report.iterations[1].delta_y0 == 0.0);
    CHECK(std::isnan(r.report.iterations[0].delta_y0));

    // u(t, x) = x, v = 1 lie in the span: fits recover them up to sampling error
    for (int i = 1; i < 10; ++i)
    {
        auto const& c = r.estimate.u_fit(i).coefficients;
        CHECK(std::abs(c[0]) < 0.1);
        CHECK(std::abs(c[1] - 1.0) < 0.1);
        CHECK(std::abs(c[2]) < 0.1);
        std::vector<double> x{-0.4};
        auto const v = r.estimate.evaluate(i, x);
        CHECK(std::abs(v.u + 0.4) < 0.05);
        CHECK(std::abs(v.v[0] - 1.0) < 0.25);
    }
    double const h = grid.step_size();
    CHECK(std::abs(r.estimate.y0() - 0.3) < 5 * std::sqrt(h / 4000));

    // a second backward pass on the same ensemble is bit-identical
    auto const again =
        backward_pass(p, grid, *r.paths, *r.increments, r.estimate.basis_ptr(), 0.0, 1);
    CHECK(again.y0() == r.estimate.y0());
    for (int i = 1; i < 10; ++i)
        CHECK(again.u_fit(i).coefficients == r.estimate.u_fit(i).coefficients);
}

TEST_CASE("first sine iteration sees a degenerate ensemble")
{
    auto const p = sine_example(2, 0.4, 0.0, std::numbers::pi / 2);
    Grid const grid(10, 1.0);
    auto const inc = IncrementSet::generate(10, 2, 1000, grid.step_size(), 3);
    auto const zero = [](int, std::span<double const>) { return 0.0; };
    auto const paths = forward_paths(p, grid, zero, inc);
    auto const basis = std::make_shared<BasisSet const>(2, 10.0);
    auto const est = backward_pass(p, grid, paths, inc, basis);
    REQUIRE(est.diagnostics().size() == 9);
    for (auto const& d : est.diagnostics())
    {
        CHECK(d.rank == 1);
        CHECK(d.rank_deficient);
    }
    CHECK(std::isfinite(est.y0()));
    // the states never move, so u follows y_i = y_{i+1} + f(t_i, x0, y_{i+1}, 0) h
    std::vector<double> x{std::numbers::pi / 2, std::numbers::pi / 2};
    std::vector<double> const z(2, 0.0);
    double y = p.terminal(x);
    for (int i = 9; i >= 1; --i)
    {
        y += p.driver(grid.time(i), x, y, z) * grid.step_size();
        CHECK(est.value(i, x) == doctest::Approx(y).epsilon(1e-12));
    }
    y += p.driver(0.0, x, y, z) * grid.step_size();
    CHECK(est.y0() == doctest::Approx(y).epsilon(1e-12));
}

TEST_CASE("estimate boundaries")
{
    auto const g = [](std::span<double const> x) { return std::sin(x[0]) + x[1]; };
    Grid const grid(5, 1.0);
    auto const basis = std::make_shared<BasisSet const>(2, 10.0);
    auto const z = ValueFunctionEstimate::zero(grid, 2, g, basis);
    CHECK(z.is_zero());
    std::vector<double> x{0.4, -1.0};
    auto const end = z.evaluate(5, x);
    CHECK(end.u == g(x));
    CHECK(end.v == std::vector<double>{0.0, 0.0});
    CHECK(z.value(3, x) == 0.0);
    CHECK_THROWS_AS(z.evaluate(6, x), InvalidArgument);
    CHECK_THROWS_AS(z.evaluate(-1, x), InvalidArgument);

    auto const r = solve(sine_example(1, 0.1, 0.0, 1.0), Grid(5, 1.0), small_config(500));
    std::vector<double> x1{0.2};
    CHECK(r.estimate.evaluate(5, x1).u == std::sin(0.2));
    CHECK(r.estimate.evaluate(0, x1).u == r.estimate.y0());
    CHECK(r.estimate.evaluate(0, x1).v == r.estimate.z0());
}

TEST_CASE("results do not depend on the worker count")
{
    auto const p = sine_example(2, 0.3, 0.2, std::numbers::pi / 2);
    Grid const grid(10, 1.0);
    auto c1 = small_config(3001);
    c1.workers = 1;
    c1.max_iterations = 4;
    auto c4 = c1;
    c4.workers = 4;
    auto const a = solve(p, grid, c1);
    auto const b = solve(p, grid, c4);
    CHECK(a.report.y0_per_iteration == b.report.y0_per_iteration);
    CHECK(a.report.z0_final == b.report.z0_final);
    for (int i = 1; i < 10; ++i)
    {
        CHECK(a.estimate.u_fit(i).coefficients == b.estimate.u_fit(i).coefficients);
        CHECK(a.estimate.v_fits(i)[1].coefficients == b.estimate.v_fits(i)[1].coefficients);
    }
    auto ja = a.report.to_json();
    auto jb = b.report.to_json();
    for (auto* j : {&ja, &jb})
        for (auto& it : (*j)["iterations"])
            it.erase("seconds");
    CHECK(ja == jb);

    auto c_other = c1;
    c_other.seed = 18;
    CHECK(solve(p, grid, c_other).report.y0_per_iteration != a.report.y0_per_iteration);
}

TEST_CASE("sine benchmark converges near the closed form")
{
    auto const p = sine_example(1, 0.1, 0.0, std::numbers::pi / 2);
    Grid const grid(20, 1.0);
    auto const r = solve(p, grid, small_config(20000), sine_example_bounds(1, 0.1, 0.0));
    CHECK(r.report.converged());
    CHECK(r.report.m_stop <= 10);
    CHECK(r.estimate.y0() == doctest::Approx(1.0).epsilon(0.02));
    REQUIRE(r.report.conditions.has_value());
    CHECK(r.report.conditions->all_hold());
    auto const j = r.report.to_json();
    CHECK(j.contains("y0_per_iteration"));
    CHECK(j["stop_reason"] == "tolerance");
    CHECK(j.contains("conditions"));
}

TEST_CASE("Y0 changes shrink over the iterations")
{
    auto const p = sine_example(4, 0.4, 0.0, std::numbers::pi / 2);
    Grid const grid(10, 1.0);
    auto c = small_config(5000);
    c.tol = 0;
    c.max_iterations = 6;
    auto const r = solve(p, grid, c);
    CHECK(r.report.stop_reason == StopReason::max_iterations);
    CHECK(r.report.iterations.size() == 6);
    auto const& it = r.report.iterations;
    CHECK(it[5].delta_y0 < it[1].delta_y0);
    CHECK(it[4].delta_y0 < it[2].delta_y0);
}

TEST_CASE("problem without a solution does not converge")
{
    auto const p = make_catalog_problem("counterexample", CatalogParams{});
    Grid const grid(30, p.horizon);
    auto c = small_config(200);
    c.max_iterations = 20;
    try
    {
        auto const r = solve(p, grid, c);
        CHECK_FALSE(r.report.converged());
        CHECK(r.report.m_stop == 20);
    }
    catch (BlowUp const&)
    {
        CHECK(true);
    }
}

TEST_CASE("solution paths under a known estimate")
{
    auto const p = decoupled([](std::span<double const> x) { return x[0]; });
    Grid const grid(4, 1.0);
    auto const r = solve(p, grid, small_config(500));
    auto const zero_inc = IncrementSet::from_data(4, 1, 3, 0.25, std::vector<double>(12, 0.0));
    auto const sol = simulate_solution_paths(p, grid, r.estimate, zero_inc);
    for (std::size_t q = 0; q < 3; ++q)
    {
        CHECK(sol.y_at(q, 0) == r.estimate.y0());
        CHECK(sol.y_at(q, 4) == 0.3);
        for (int i = 0; i <= 4; ++i)
            CHECK(sol.states.state(q, i)[0] == 0.3);
    }
}

TEST_CASE("configuration validation")
{
    auto const p = decoupled([](std::span<double const> x) { return x[0]; });
    Grid const grid(4, 1.0);
    auto c = small_config(10);
    c.paths = 0;
    CHECK_THROWS_AS(solve(p, grid, c), InvalidArgument);
    c = small_config(10);
    c.max_iterations = 0;
    CHECK_THROWS_AS(solve(p, grid, c), InvalidArgument);
    c = small_config(10);
    c.ridge = -1;
    CHECK_THROWS_AS(solve(p, grid, c), InvalidArgument);
    CHECK_THROWS_AS(solve(p, Grid(4, 2.0), small_config(10)), InvalidArgument);
}
