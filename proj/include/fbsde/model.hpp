#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fbsde {

//---------------------------------------------------------------------------//
// Coefficient callables
//
// All vectors are passed as spans so the hot loops never allocate. Matrices
// are row-major: the diffusion writes dim_x rows of dim_w entries.
//---------------------------------------------------------------------------//
using DriftFn = std::function<void(double t, std::span<double const> x, double y,
                                   std::span<double> out)>;
using DiffusionFn = std::function<void(double t, std::span<double const> x, double y,
                                       std::span<double> out)>;
using DriverFn = std::function<double(double t, std::span<double const> x, double y,
                                      std::span<double const> z)>;
using TerminalFn = std::function<double(std::span<double const> x)>;

/*!
 * Coupled forward-backward system
 *
 *   X_t = x0 + int_0^t b(s, X, Y) ds + int_0^t sigma(s, X, Y) dW_s
 *   Y_t = g(X_T) + int_t^T f(s, X, Y, Z) ds - int_t^T Z dW_s
 *
 * with X in R^dim_x, W in R^dim_w and scalar Y. The callables must be
 * re-entrant; the problem is shared read-only across workers.
 */
struct FbsdeProblem
{
    std::string name;
    int dim_x = 1;
    int dim_w = 1;
    double horizon = 1.0;
    std::vector<double> x0;
    DriftFn drift;
    DiffusionFn diffusion;
    DriverFn driver;
    TerminalFn terminal;

    //! Throws InvalidArgument if dimensions, horizon, x0 or callables are bad.
    void validate() const;
};

/*!
 * Squared Lipschitz, growth and monotonicity constants.
 *
 * Multi-dimensional quantities are measured with the Euclidean norm for
 * vectors and the Frobenius norm for the diffusion matrix. K is a common
 * upper bound for every other constant (and for |k_b|, |k_f|).
 */
struct CoefficientBounds
{
    double K = 0;
    double k_b = 0;
    double k_f = 0;
    double b_y = 0;
    double sigma_x = 0;
    double sigma_y = 0;
    double f_x = 0;
    double f_z = 0;
    double g_x = 0;
    double b_0 = 0;
    double sigma_0 = 0;
    double f_0 = 0;
    double g_0 = 0;

    //! Names of fields that are negative where they must not be or exceed K.
    std::vector<std::string> inconsistencies() const;
    //! Throws InvalidArgument listing inconsistencies().
    void validate() const;

    bool operator==(CoefficientBounds const&) const = default;
};

/// Uniform time grid t_i = i * T / n.
class Grid
{
  public:
    Grid(int steps, double horizon);

    int steps() const noexcept { return steps_; }
    double horizon() const noexcept { return horizon_; }
    double step_size() const noexcept { return h_; }
    //! t_i; t_0 = 0 and t_n = T exactly.
    double time(int i) const noexcept
    {
        return i == steps_ ? horizon_ : static_cast<double>(i) * h_;
    }

  private:
    int steps_;
    double horizon_;
    double h_;
};

//---------------------------------------------------------------------------//
// Falsification probes
//---------------------------------------------------------------------------//
struct ProbeOptions
{
    int probe_pairs = 1000;
    std::uint64_t seed = 12345;
    //! Probes are drawn componentwise from [-s, s] with s cycling through these.
    std::vector<double> scales{0.5, 2.0, 10.0};
    //! Relative slack absorbing floating rounding in the inequalities.
    double rel_tol = 1e-9;
};

struct Violation
{
    std::string inequality;
    double lhs = 0;
    double rhs = 0;
    //! Non-finite coefficient output.
    bool hard = false;
};

struct ValidationReport
{
    int probes = 0;
    std::vector<Violation> violations;

    bool passed() const noexcept { return violations.empty(); }
    int hard_violations() const noexcept;
};

/// Sample the bound inequalities at random points. A pass is evidence, not proof.
ValidationReport validate_problem(FbsdeProblem const& problem,
                                  CoefficientBounds const& bounds,
                                  ProbeOptions const& options = {});

//---------------------------------------------------------------------------//
// Catalog
//---------------------------------------------------------------------------//
struct CatalogParams
{
    int dim = 1;
    double sigma = 0.1;
    double rate = 0.0;
    //! Per-component initial state; pi/2 when absent.
    std::optional<double> x0;
    double horizon = 1.0;
};

/*!
 * Coupled sine benchmark:
 *   b = 0, sigma(t,x,y) = sigma*y*I, g(x) = sum_d sin(x_d),
 *   f(t,x,y,z) = -r*y + 1/2 exp(-3r(T-t)) sigma^2 (sum_d sin x_d)^3,
 * whose solution is Y_t = exp(-r(T-t)) sum_d sin(X_{d,t}).
 */
FbsdeProblem sine_example(int dim, double sigma, double rate, double x0_component,
                          double horizon = 1.0);

/// Constants that hold for sine_example (see the .cpp for the derivation).
CoefficientBounds sine_example_bounds(int dim, double sigma, double rate, double horizon = 1.0);

/// Exact Y_t(x) = exp(-r(T-t)) sum_d sin(x_d) of the sine benchmark.
double sine_exact_value(double rate, double horizon, double t, std::span<double const> x);

/*!
 * Named problems:
 *   sine               - the coupled benchmark above
 *   constant_drift     - b = 1, sigma = 0, f = 0, g = sum x
 *   brownian_terminal  - b = 0, sigma = sigma*I (decoupled), f = 0, g = sum x
 *   quadratic_terminal - b = 0, sigma = sigma*I, f = 0, g = |x|^2 (not Lipschitz)
 *   counterexample     - dX = Y dt, dY = -X dt + Z dW, Y_T = -X_T on [0, 3pi/4]
 */
FbsdeProblem make_catalog_problem(std::string const& name, CatalogParams const& params);

/// Bounds for a catalog problem; empty when no finite bounds exist.
std::optional<CoefficientBounds> catalog_bounds(std::string const& name,
                                                CatalogParams const& params);

std::vector<std::string> const& catalog_names();

}  // namespace fbsde
