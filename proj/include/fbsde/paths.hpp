#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "fbsde/model.hpp"

namespace fbsde {

/*!
 * Brownian increments dW_{i}^lambda, i = 1..n, stored path-major as
 * (path, step, component).
 *
 * Generated entries are N(0, h) draws keyed on (seed, path, step,
 * component), so regenerating with the same seed reproduces every bit
 * irrespective of the worker count.
 */
class IncrementSet
{
  public:
    struct Options
    {
        int workers = 0;
        std::size_t memory_budget_bytes = std::size_t{2} << 30;
    };

    static IncrementSet generate(int steps, int dim_w, std::size_t paths, double h,
                                 std::uint64_t seed, Options const& options);
    static IncrementSet generate(int steps, int dim_w, std::size_t paths, double h,
                                 std::uint64_t seed)
    {
        return generate(steps, dim_w, paths, h, seed, Options{});
    }

    //! Wrap explicit increments (e.g. all zeros); data is (path, step, component).
    static IncrementSet from_data(int steps, int dim_w, std::size_t paths, double h,
                                  std::vector<double> data, std::uint64_t seed = 0);

    int steps() const noexcept { return steps_; }
    int dim_w() const noexcept { return dim_w_; }
    std::size_t paths() const noexcept { return paths_; }
    double step_size() const noexcept { return h_; }
    std::uint64_t seed() const noexcept { return seed_; }

    //! dW_{step} for one path; step in 1..n.
    std::span<double const> at(std::size_t path, int step) const noexcept
    {
        return {data_.data() + (path * steps_ + (step - 1)) * dim_w_,
                static_cast<std::size_t>(dim_w_)};
    }
    double operator()(std::size_t path, int step, int component) const noexcept
    {
        return at(path, step)[component];
    }

    std::vector<double> const& data() const noexcept { return data_; }

  private:
    IncrementSet() = default;

    int steps_ = 0;
    int dim_w_ = 0;
    std::size_t paths_ = 0;
    double h_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<double> data_;
};

/// Forward Euler states X_i^lambda, i = 0..n, stored as (path, step, component).
class PathEnsemble
{
  public:
    PathEnsemble(int steps, int dim_x, std::size_t paths, int iteration);

    int steps() const noexcept { return steps_; }
    int dim_x() const noexcept { return dim_x_; }
    std::size_t paths() const noexcept { return paths_; }
    //! Iteration index m of the Markovian iteration that produced the ensemble.
    int iteration() const noexcept { return iteration_; }

    std::span<double const> state(std::size_t path, int step) const noexcept
    {
        return {states_.data() + (path * (steps_ + 1) + step) * dim_x_,
                static_cast<std::size_t>(dim_x_)};
    }
    std::span<double> state(std::size_t path, int step) noexcept
    {
        return {states_.data() + (path * (steps_ + 1) + step) * dim_x_,
                static_cast<std::size_t>(dim_x_)};
    }

    std::vector<double> const& data() const noexcept { return states_; }

  private:
    int steps_;
    int dim_x_;
    std::size_t paths_;
    int iteration_;
    std::vector<double> states_;
};

/// Value-function evaluator u(i, x) used in the forward coefficients.
using ValueEvaluator = std::function<double(int step, std::span<double const> x)>;

/*!
 * One forward Euler pass of the Markovian iteration:
 *
 *   X_{i+1} = X_i + b(t_i, X_i, y) h + sigma(t_i, X_i, y) dW_{i+1},  y = u_prev(i, X_i).
 *
 * Throws BlowUp naming the first (path, step) in path order whose state is
 * non-finite.
 */
PathEnsemble forward_paths(FbsdeProblem const& problem, Grid const& grid,
                           ValueEvaluator const& u_prev, IncrementSet const& increments,
                           int iteration = 0, int workers = 0);

//---------------------------------------------------------------------------//
// Binary dump: "FBSDEPTH", u32 version, u64 n, u64 paths, u64 dim_x,
// u64 dim_w, f64 h, u64 seed, then the states in (path, step, component)
// order. All little-endian.
//---------------------------------------------------------------------------//
struct EnsembleDump
{
    std::uint64_t steps = 0;
    std::uint64_t paths = 0;
    std::uint64_t dim_x = 0;
    std::uint64_t dim_w = 0;
    double h = 0;
    std::uint64_t seed = 0;
    std::vector<double> states;
};

inline constexpr std::uint32_t kEnsembleFormatVersion = 1;

void write_ensemble(std::filesystem::path const& file, PathEnsemble const& ensemble,
                    IncrementSet const& increments);
EnsembleDump read_ensemble(std::filesystem::path const& file);

}  // namespace fbsde
