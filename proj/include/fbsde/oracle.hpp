#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "fbsde/model.hpp"
#include "fbsde/paths.hpp"
#include "fbsde/solver.hpp"

namespace fbsde {

//---------------------------------------------------------------------------//
// Gauss-Hermite quadrature for E{phi(xi)}, xi ~ N(0, 1)
//---------------------------------------------------------------------------//
struct GaussHermite
{
    std::vector<double> nodes;
    std::vector<double> weights;  // sum to one
};

/// Order-point rule for the standard normal (Golub-Welsch).
GaussHermite gauss_hermite(int order);

//---------------------------------------------------------------------------//
// Quadrature fixed point for one-dimensional problems
//---------------------------------------------------------------------------//
/*!
 * u_i and v_i, i = 0..n, tabulated on a uniform node grid. Between nodes
 * the functions are interpolated by a cubic B-spline (linearly with fewer
 * than five nodes); outside [x_lo, x_hi] the boundary value is held constant.
 */
struct GridFunction
{
    std::vector<double> x_nodes;
    Eigen::MatrixXd u;  // (n + 1) x nodes
    Eigen::MatrixXd v;  // (n + 1) x nodes
    double horizon = 1;

    int steps() const noexcept { return static_cast<int>(u.rows()) - 1; }
    double u_at(int i, double x) const;
    double v_at(int i, double x) const;

    /// True for nodes at least `margin` inside both ends of the domain.
    std::vector<bool> interior_mask(double margin) const;

    /// CSV with columns i,t_i,x,u,v.
    void write_csv(std::filesystem::path const& file) const;
};

struct QuadratureOptions
{
    double x_lo = 0;
    double x_hi = 1;
    int nodes = 401;
    int quad_order = 32;
    double inner_tol = 1e-12;
    int inner_max = 200;
    int workers = 0;
};

/*!
 * One application of the operator that maps phi to Phi: with phi frozen in
 * the forward coefficients,
 *
 *   X' = x + b(t_i, x, phi_i(x)) h + sigma(t_i, x, phi_i(x)) sqrt(h) xi,
 *   Phi_n = g,
 *   psi_i(x) = E{Phi_{i+1}(X') sqrt(h) xi} / h,
 *   Phi_i(x) = E{Phi_{i+1}(X') + f(t_i, x, Phi_{i+1}(X'), psi_i(x)) h},
 *
 * with exact Gauss-Hermite expectations; Phi_{i+1} is interpolated, except
 * at i + 1 = n where g is evaluated directly.
 */
GridFunction apply_quadrature_map(FbsdeProblem const& problem, Grid const& grid,
                                  GridFunction const& phi, GaussHermite const& rule,
                                  int workers = 0);

/*!
 * Iterates the map from phi = 0 until the sup-over-nodes change of u is
 * below inner_tol. Throws NonConvergence carrying the last change after
 * inner_max maps, or on non-finite values.
 */
GridFunction quadrature_fixed_point(FbsdeProblem const& problem, Grid const& grid,
                                    QuadratureOptions const& options);

//---------------------------------------------------------------------------//
// Sine benchmark
//---------------------------------------------------------------------------//
struct ReferencePaths
{
    PathEnsemble states;
    //! Y_i = exp(-r(T - t_i)) sum_d sin(X_{d,i}), stored (path, i = 0..n).
    std::vector<double> y;

    double y_at(std::size_t path, int step) const noexcept
    {
        return y[path * (states.steps() + 1) + step];
    }
};

/*!
 * Euler scheme of the decoupled forward equation obtained by substituting
 * the closed-form Y into the diffusion, on the given increments:
 *
 *   X_{d,i+1} = X_{d,i} + sigma exp(-r(T - t_i)) (sum_q sin X_{q,i}) dW_{d,i+1}.
 *
 * Uses the same arithmetic as forward_paths with the exact value function
 * plugged in, so the two agree bit for bit.
 */
ReferencePaths sine_reference_paths(int dim, double sigma, double rate, Grid const& grid,
                                    IncrementSet const& increments, double x0_component,
                                    int workers = 0);

struct BenchmarkResult
{
    double y0_estimate = 0;
    double y0_exact = 0;
    double abs_error = 0;
    //! (1/Lambda) sum |Y_i - Y_ref_i|^2 for i = 0..n.
    std::vector<double> mse;
    int m_stop = 0;
    StopReason stop_reason = StopReason::max_iterations;
    //! |Y0^m - D exp(-rT)| for m = 1..m_stop.
    std::vector<double> errors_per_iteration;
    IterationReport report;
};

struct SineSetup
{
    int dim = 1;
    double sigma = 0.1;
    double rate = 0;
    double x0_component = 1.5707963267948966;
    double horizon = 1;
};

BenchmarkResult run_sine_benchmark(SineSetup const& setup, Grid const& grid,
                                   SolverConfig const& config);

struct ConvergenceRow
{
    int steps = 0;
    //! Mean over seeds of |Y0 - D exp(-rT)|.
    double abs_error = 0;
    //! Mean over seeds of m_stop.
    double m_stop = 0;
    //! Log-log slope fitted over the rows so far; absent for the first row.
    std::optional<double> slope_so_far;
};

struct ConvergenceStudy
{
    std::vector<ConvergenceRow> rows;
    std::optional<double> slope;
};

/// Least-squares slope of log(y) against log(x); absent with fewer than two points.
std::optional<double> log_log_slope(std::vector<double> const& x, std::vector<double> const& y);

/*!
 * Runs the sine benchmark for each n and each seed (seeds are
 * config.seed, config.seed + 1, ...), averaging the absolute Y0 error.
 */
ConvergenceStudy convergence_study_n(SineSetup const& setup, std::vector<int> const& n_list,
                                     SolverConfig const& config, int seeds = 1);

}  // namespace fbsde
