#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "fbsde/errors.hpp"
#include "fbsde/paths.hpp"
#include "fbsde/random.hpp"

using namespace fbsde;

namespace {

FbsdeProblem one_dim(double drift, double vol)
{
    FbsdeProblem p;
    p.name = "test";
    p.x0 = {0.5};
    p.drift = [drift](double, std::span<double const>, double, std::span<double> out) {
        out[0] = drift;
    };
    p.diffusion = [vol](double, std::span<double const>, double, std::span<double> out) {
        out[0] = vol;
    };
    p.driver = [](double, std::span<double const>, double, std::span<double const>) {
        return 0.0;
    };
    p.terminal = [](std::span<double const> x) { return x[0]; };
    return p;
}

ValueEvaluator constant(double c)
{
    return [c](int, std::span<double const>) { return c; };
}

}  // namespace

TEST_CASE("increment determinism")
{
    auto const a = IncrementSet::generate(1, 1, 1, 1.0, 77);
    auto const b = IncrementSet::generate(1, 1, 1, 1.0, 77);
    CHECK(a.data() == b.data());

    auto const c = IncrementSet::generate(8, 3, 500, 0.1, 5, {1, std::size_t{1} << 30});
    auto const d = IncrementSet::generate(8, 3, 500, 0.1, 5, {4, std::size_t{1} << 30});
    CHECK(c.data() == d.data());
    // any entry is the keyed draw for (seed, path, step, component)
    CHECK(c(123, 4, 2) == std::sqrt(0.1) * keyed_normal(5, 123, 4, 2));
}

TEST_CASE("increment statistics")
{
    int const n = 50, dw = 4;
    std::size_t const L = 50000;
    double const h = 0.02;
    auto const inc = IncrementSet::generate(n, dw, L, h, 7);
    for (int i = 1; i <= n; ++i)
        for (int d = 0; d < dw; ++d)
        {
            double s = 0, s2 = 0;
            for (std::size_t p = 0; p < L; ++p)
            {
                double const v = inc(p, i, d);
                s += v;
                s2 += v * v;
            }
            double const mean = s / L;
            double const var = s2 / L - mean * mean;
            CHECK(std::abs(mean) < 5 * std::sqrt(h / L));
            CHECK(std::abs(var / h - 1) < 0.05);
        }

    auto const other = IncrementSet::generate(n, dw, L, h, 8);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t k = 0; k < inc.data().size(); ++k)
    {
        sxy += inc.data()[k] * other.data()[k];
        sxx += inc.data()[k] * inc.data()[k];
        syy += other.data()[k] * other.data()[k];
    }
    CHECK(std::abs(sxy / std::sqrt(sxx * syy)) < 0.01);
}

TEST_CASE("increment capacity and arguments")
{
    CHECK_THROWS_AS(IncrementSet::generate(100, 10, 1000000, 0.01, 1, {0, std::size_t{1} << 20}),
                    CapacityError);
    CHECK_THROWS_AS(IncrementSet::generate(0, 1, 1, 0.1, 1), InvalidArgument);
    CHECK_THROWS_AS(IncrementSet::generate(1, 1, 1, -0.1, 1), InvalidArgument);
    CHECK_THROWS_AS(IncrementSet::from_data(2, 1, 2, 0.5, {1.0, 2.0, 3.0}), InvalidArgument);
}

TEST_CASE("forward paths: trivial coefficients")
{
    Grid const grid(10, 1.0);
    auto const inc = IncrementSet::generate(10, 1, 20, 0.1, 3);

    auto const still = forward_paths(one_dim(0, 0), grid, constant(0), inc, 1);
    CHECK(still.iteration() == 1);
    for (std::size_t p = 0; p < 20; ++p)
        for (int i = 0; i <= 10; ++i)
            CHECK(still.state(p, i)[0] == 0.5);

    auto const ramp = forward_paths(one_dim(1, 0), grid, constant(0), inc);
    for (std::size_t p = 0; p < 20; ++p)
        for (int i = 0; i <= 10; ++i)
            CHECK(ramp.state(p, i)[0] == doctest::Approx(0.5 + i * 0.1).epsilon(1e-14));
}

TEST_CASE("forward paths: sine problem under u = 0 stays at x0")
{
    int const D = 3;
    auto const p = sine_example(D, 0.4, 0.0, std::numbers::pi / 2);
    Grid const grid(20, 1.0);
    auto const inc = IncrementSet::generate(20, D, 100, grid.step_size(), 1);
    auto const paths = forward_paths(p, grid, constant(0), inc);
    for (std::size_t q = 0; q < 100; ++q)
        for (int i = 0; i <= 20; ++i)
            for (int d = 0; d < D; ++d)
                CHECK(paths.state(q, i)[d] == std::numbers::pi / 2);
}

TEST_CASE("forward paths: decoupled coefficients ignore u")
{
    Grid const grid(10, 1.0);
    auto const inc = IncrementSet::generate(10, 1, 200, 0.1, 9);
    auto const a = forward_paths(one_dim(0.3, 1.0), grid, constant(0), inc);
    auto const b = forward_paths(one_dim(0.3, 1.0), grid, constant(1e6), inc);
    CHECK(a.data() == b.data());
}

TEST_CASE("forward paths are independent of the worker count")
{
    auto const p = sine_example(2, 0.4, 0.0, std::numbers::pi / 2);
    Grid const grid(15, 1.0);
    auto const inc = IncrementSet::generate(15, 2, 1001, grid.step_size(), 4);
    ValueEvaluator const u = [](int, std::span<double const> x) {
        return std::sin(x[0]) + std::sin(x[1]);
    };
    auto const a = forward_paths(p, grid, u, inc, 0, 1);
    auto const b = forward_paths(p, grid, u, inc, 0, 3);
    auto const c = forward_paths(p, grid, u, inc, 0, 8);
    CHECK(a.data() == b.data());
    CHECK(a.data() == c.data());
}

TEST_CASE("Euler weak error sanity")
{
    Grid const grid(20, 1.0);
    std::size_t const L = 100000;
    auto const inc = IncrementSet::generate(20, 1, L, grid.step_size(), 31);
    auto const paths = forward_paths(one_dim(0, 1), grid, constant(0), inc);
    double s = 0, s2 = 0;
    for (std::size_t p = 0; p < L; ++p)
    {
        double const x = paths.state(p, 20)[0];
        s += x * x;
        s2 += x * x * x * x;
    }
    double const mean = s / L;
    double const se = std::sqrt((s2 / L - mean * mean) / L);
    CHECK(std::abs(mean - (0.25 + 1.0)) < 5 * se);
}

TEST_CASE("forward blow-up names path and step")
{
    auto p = one_dim(0, 0);
    p.drift = [](double, std::span<double const> x, double, std::span<double> out) {
        out[0] = x[0] * 1e200;
    };
    Grid const grid(10, 1.0);
    auto const inc = IncrementSet::generate(10, 1, 5, 0.1, 1);
    try
    {
        forward_paths(p, grid, constant(0), inc, 4);
        FAIL("expected BlowUp");
    }
    catch (BlowUp const& e)
    {
        CHECK(e.path() == 0);
        CHECK(e.step() == 2);
        CHECK(std::string(e.what()).find("iteration 4") != std::string::npos);
    }
}

TEST_CASE("zero increments give the drift-only recursion")
{
    Grid const grid(4, 1.0);
    auto const inc = IncrementSet::from_data(4, 1, 2, 0.25, std::vector<double>(8, 0.0));
    auto const paths = forward_paths(one_dim(2.0, 5.0), grid, constant(0), inc);
    for (int i = 0; i <= 4; ++i)
        CHECK(paths.state(1, i)[0] == doctest::Approx(0.5 + 2.0 * 0.25 * i));
}

TEST_CASE("ensemble dump round trip")
{
    auto const p = sine_example(2, 0.4, 0.0, 1.0);
    Grid const grid(5, 1.0);
    auto const inc = IncrementSet::generate(5, 2, 7, grid.step_size(), 12);
    auto const paths = forward_paths(p, grid, constant(1.0), inc);
    auto const file = std::filesystem::temp_directory_path() / "fbsde_dump_test.bin";
    write_ensemble(file, paths, inc);
    auto const d = read_ensemble(file);
    CHECK(d.steps == 5);
    CHECK(d.paths == 7);
    CHECK(d.dim_x == 2);
    CHECK(d.dim_w == 2);
    CHECK(d.h == grid.step_size());
    CHECK(d.seed == 12);
    CHECK(d.states == paths.data());
    CHECK(std::filesystem::file_size(file) == 8 + 4 + 8 * 6 + 8 * paths.data().size());
    std::filesystem::remove(file);
    CHECK_THROWS_AS(read_ensemble(file), Error);
}
