#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbsde/conditions.hpp"
#include "fbsde/model.hpp"
#include "fbsde/paths.hpp"
#include "fbsde/regression.hpp"

namespace fbsde {

struct SolverConfig
{
    std::size_t paths = 50000;
    std::uint64_t seed = 1;
    //! Truncation R of the clamped products.
    double truncation = 10.0;
    //! Append the terminal function g to the basis.
    bool include_terminal = false;
    double ridge = 0.0;
    //! Stop when |Y0^m - Y0^{m-1}| < tol.
    double tol = 1e-4;
    int max_iterations = 50;
    //! Draw fresh increments for every iteration instead of reusing one sample.
    bool resample_per_iteration = false;
    //! Additionally require sup |u^m - u^{m-1}| < tol over a probe set of states.
    bool stop_on_function_change = false;
    //! Paths (from the front of the ensemble) whose states form the probe set.
    int function_probe_paths = 64;
    int workers = 0;
    std::size_t memory_budget_bytes = std::size_t{2} << 30;

    bool operator==(SolverConfig const&) const = default;
};

struct StepDiagnostics
{
    int step = 0;
    int rank = 0;
    bool rank_deficient = false;
    double u_residual_rms = 0;
    double v_residual_rms = 0;  // largest over components
};

/*!
 * Regression estimate of (u_i, v_i), i = 0..n.
 *
 * At i = n the terminal rule u = g, v = 0 applies exactly. Interior steps
 * hold one fit for u and one per Brownian component for v on a shared
 * basis. At i = 0 the estimate is the pair of sample means (Y0, Z0) and does
 * not depend on x.
 */
class ValueFunctionEstimate
{
  public:
    //! The starting point u = 0 (v = 0) for i < n.
    static ValueFunctionEstimate zero(Grid const& grid, int dim_w, TerminalFn terminal,
                                      std::shared_ptr<BasisSet const> basis);

    struct Value
    {
        double u = 0;
        std::vector<double> v;
    };

    //! (u_i(x), v_i(x)). Throws InvalidArgument if i is outside 0..n.
    Value evaluate(int i, std::span<double const> x) const;
    //! u_i(x) only; no range check, no allocation.
    double value(int i, std::span<double const> x) const;

    Grid const& grid() const noexcept { return grid_; }
    int dim_w() const noexcept { return dim_w_; }
    BasisSet const& basis() const noexcept { return *basis_; }
    std::shared_ptr<BasisSet const> const& basis_ptr() const noexcept { return basis_; }
    double y0() const noexcept { return y0_; }
    std::vector<double> const& z0() const noexcept { return z0_; }
    bool is_zero() const noexcept { return zero_; }

    //! Fits at interior step i (1..n-1).
    RegressionFit const& u_fit(int i) const { return u_fits_.at(static_cast<std::size_t>(i)); }
    std::vector<RegressionFit> const& v_fits(int i) const
    {
        return v_fits_.at(static_cast<std::size_t>(i));
    }
    std::vector<StepDiagnostics> const& diagnostics() const noexcept { return diagnostics_; }

    nlohmann::json to_json() const;

  private:
    friend ValueFunctionEstimate backward_pass(FbsdeProblem const&, Grid const&,
                                               PathEnsemble const&, IncrementSet const&,
                                               std::shared_ptr<BasisSet const>, double, int);
    friend ValueFunctionEstimate make_estimate(Grid const&, int, TerminalFn,
                                               std::shared_ptr<BasisSet const>,
                                               std::vector<RegressionFit>,
                                               std::vector<std::vector<RegressionFit>>, double,
                                               std::vector<double>);

    ValueFunctionEstimate(Grid grid, int dim_w, TerminalFn terminal,
                          std::shared_ptr<BasisSet const> basis);

    Grid grid_;
    int dim_w_;
    TerminalFn terminal_;
    std::shared_ptr<BasisSet const> basis_;
    bool zero_ = false;
    std::vector<RegressionFit> u_fits_;                // index 1..n-1
    std::vector<std::vector<RegressionFit>> v_fits_;   // index 1..n-1, then component
    double y0_ = 0;
    std::vector<double> z0_;
    std::vector<StepDiagnostics> diagnostics_;
};

/// Assemble an estimate from explicit fits (index 1..n-1; entry 0 unused).
ValueFunctionEstimate make_estimate(Grid const& grid, int dim_w, TerminalFn terminal,
                                    std::shared_ptr<BasisSet const> basis,
                                    std::vector<RegressionFit> u_fits,
                                    std::vector<std::vector<RegressionFit>> v_fits, double y0,
                                    std::vector<double> z0);

/*!
 * Backward regression sweep over one forward ensemble.
 *
 * For i = n-1 down to 1, with Y_{i+1} = u_{i+1}(X_{i+1}):
 *   v_i  <- regress Y_{i+1} dW_{i+1} / h on the basis at X_i   (per component)
 *   Z_i  =  v_i(X_i)
 *   u_i  <- regress Y_{i+1} + f(t_i, X_i, Y_{i+1}, Z_i) h on the same design
 * and at i = 0 the sample means
 *   Z0 = mean(Y_1 dW_1) / h,   Y0 = mean(Y_1 + f(0, x0, Y_1, Z0) h).
 *
 * Rank-deficient designs are not an error; they are recorded in the step
 * diagnostics. A non-finite target throws BlowUp naming (step, path).
 */
ValueFunctionEstimate backward_pass(FbsdeProblem const& problem, Grid const& grid,
                                    PathEnsemble const& paths, IncrementSet const& increments,
                                    std::shared_ptr<BasisSet const> basis, double ridge = 0.0,
                                    int workers = 0);

enum class StopReason
{
    tolerance,
    max_iterations
};

char const* to_string(StopReason reason);

struct IterationRecord
{
    int m = 0;
    double y0 = 0;
    //! |Y0^m - Y0^{m-1}|; NaN for m = 1.
    double delta_y0 = std::numeric_limits<double>::quiet_NaN();
    //! sup over the probe set of |u^m - u^{m-1}|; NaN when not computed.
    double function_change = std::numeric_limits<double>::quiet_NaN();
    int rank_deficient_steps = 0;
    double max_u_residual_rms = 0;
    double seconds = 0;
};

struct IterationReport
{
    std::vector<double> y0_per_iteration;
    std::vector<IterationRecord> iterations;
    std::vector<double> z0_final;
    int m_stop = 0;
    StopReason stop_reason = StopReason::max_iterations;

    int steps = 0;
    double horizon = 0;
    std::size_t paths = 0;
    int basis_count = 0;
    std::uint64_t seed = 0;
    double ridge = 0;
    double tol = 0;
    int max_iterations = 0;
    bool resample_per_iteration = false;
    std::optional<ConditionReport> conditions;

    bool converged() const noexcept { return stop_reason == StopReason::tolerance; }
    nlohmann::json to_json() const;
};

struct SolveResult
{
    ValueFunctionEstimate estimate;
    IterationReport report;
    //! Increments of the last iteration.
    std::shared_ptr<IncrementSet const> increments;
    //! Forward ensemble the final estimate was regressed on.
    std::shared_ptr<PathEnsemble const> paths;
};

/*!
 * Markovian iteration with least-squares Monte Carlo regression.
 *
 * Starts from u^0 = 0; each iteration runs the forward pass under u^{m-1}
 * and a backward regression sweep producing u^m. Stops on the Y0 criterion
 * (optionally also on the function-change criterion) or at max_iterations,
 * which is reported, not thrown. Forward blow-ups propagate as BlowUp.
 *
 * When bounds are given the condition report is attached; the solver runs
 * whether or not the conditions hold.
 */
SolveResult solve(FbsdeProblem const& problem, Grid const& grid, SolverConfig const& config,
                  std::optional<CoefficientBounds> const& bounds = std::nullopt);

/// Build the regression basis a solver config describes.
std::shared_ptr<BasisSet const> make_solver_basis(FbsdeProblem const& problem,
                                                  SolverConfig const& config,
                                                  std::optional<CoefficientBounds> const& bounds);

struct SolutionPaths
{
    PathEnsemble states;
    //! Y_i^lambda = u_i(X_i^lambda), stored (path, i = 0..n).
    std::vector<double> y;
    //! Z_i^lambda = v_i(X_i^lambda), stored (path, i = 0..n-1, component).
    std::vector<double> z;

    double y_at(std::size_t path, int step) const noexcept
    {
        return y[path * (states.steps() + 1) + step];
    }
};

/// Forward pass under the estimate, tabulating (X, u(X), v(X)) along every path.
SolutionPaths simulate_solution_paths(FbsdeProblem const& problem, Grid const& grid,
                                      ValueFunctionEstimate const& estimate,
                                      IncrementSet const& increments, int workers = 0);

}  // namespace fbsde
