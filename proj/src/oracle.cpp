#include "fbsde/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include "fbsde/errors.hpp"
#include "fbsde/parallel.hpp"

namespace fbsde {

GaussHermite gauss_hermite(int order)
{
    if (order < 1)
        throw InvalidArgument("gauss_hermite: order must be >= 1");
    // Jacobi matrix of the probabilists' Hermite polynomials.
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(order, order);
    for (int k = 1; k < order; ++k)
        J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
    if (eig.info() != Eigen::Success)
        throw Error("gauss_hermite: eigenvalue solver failed");

    GaussHermite rule;
    rule.nodes.resize(order);
    rule.weights.resize(order);
    for (int k = 0; k < order; ++k)
    {
        rule.nodes[k] = eig.eigenvalues()[k];
        double const v = eig.eigenvectors()(0, k);
        rule.weights[k] = v * v;
    }
    // Exact symmetry keeps odd moments at zero.
    for (int k = 0; k < order / 2; ++k)
    {
        double const x = 0.5 * (rule.nodes[order - 1 - k] - rule.nodes[k]);
        double const w = 0.5 * (rule.weights[k] + rule.weights[order - 1 - k]);
        rule.nodes[k] = -x;
        rule.nodes[order - 1 - k] = x;
        rule.weights[k] = rule.weights[order - 1 - k] = w;
    }
    if (order % 2 == 1)
        rule.nodes[order / 2] = 0.0;
    return rule;
}

//---------------------------------------------------------------------------//
// GridFunction
//---------------------------------------------------------------------------//
namespace {

// Cubic B-spline through one row of node values, held constant outside the node range.
class RowSpline
{
  public:
    RowSpline(std::vector<double> const& xs, Eigen::MatrixXd const& values, int row)
        : lo_(xs.front()), hi_(xs.back()), first_(values(row, 0)),
          last_(values(row, values.cols() - 1))
    {
        std::vector<double> y(static_cast<std::size_t>(values.cols()));
        for (Eigen::Index k = 0; k < values.cols(); ++k)
            y[static_cast<std::size_t>(k)] = values(row, k);
        double const dx = (hi_ - lo_) / static_cast<double>(y.size() - 1);
        if (y.size() >= 5)
            spline_.emplace(y.begin(), y.end(), lo_, dx);
        else
            linear_ = std::move(y);
    }

    double operator()(double x) const
    {
        if (x <= lo_)
            return first_;
        if (x >= hi_)
            return last_;
        if (spline_)
            return (*spline_)(x);
        auto const n = static_cast<int>(linear_.size());
        double const dx = (hi_ - lo_) / (n - 1);
        int const k = std::clamp(static_cast<int>((x - lo_) / dx), 0, n - 2);
        double const w = (x - lo_) / dx - k;
        return (1.0 - w) * linear_[k] + w * linear_[k + 1];
    }

  private:
    double lo_, hi_, first_, last_;
    std::optional<boost::math::interpolators::cardinal_cubic_b_spline<double>> spline_;
    std::vector<double> linear_;
};

double interpolate(std::vector<double> const& xs, Eigen::MatrixXd const& values, int row, double x)
{
    return RowSpline(xs, values, row)(x);
}

}  // namespace

double GridFunction::u_at(int i, double x) const
{
    return interpolate(x_nodes, u, i, x);
}

double GridFunction::v_at(int i, double x) const
{
    return interpolate(x_nodes, v, i, x);
}

std::vector<bool> GridFunction::interior_mask(double margin) const
{
    std::vector<bool> mask(x_nodes.size());
    for (std::size_t k = 0; k < x_nodes.size(); ++k)
        mask[k] = x_nodes[k] - x_nodes.front() >= margin && x_nodes.back() - x_nodes[k] >= margin;
    return mask;
}

void GridFunction::write_csv(std::filesystem::path const& file) const
{
    std::ofstream os(file);
    if (!os)
        throw Error("cannot open '" + file.string() + "' for writing");
    os << std::setprecision(17);
    os << "i,t_i,x,u,v\n";
    int const n = steps();
    Grid const grid(n, horizon);
    for (int i = 0; i <= n; ++i)
        for (std::size_t k = 0; k < x_nodes.size(); ++k)
            os << i << ',' << grid.time(i) << ',' << x_nodes[k] << ','
               << u(i, static_cast<Eigen::Index>(k)) << ',' << v(i, static_cast<Eigen::Index>(k))
               << '\n';
    if (!os)
        throw Error("write to '" + file.string() + "' failed");
}

//---------------------------------------------------------------------------//
// Fixed point
//---------------------------------------------------------------------------//
namespace {

void require_one_dimensional(FbsdeProblem const& problem)
{
    if (problem.dim_x != 1 || problem.dim_w != 1)
        throw InvalidArgument("quadrature oracle: only dim_x = d_w = 1 is supported");
}

GridFunction zero_function(FbsdeProblem const& problem, Grid const& grid,
                           QuadratureOptions const& o)
{
    GridFunction phi;
    phi.horizon = grid.horizon();
    phi.x_nodes.resize(o.nodes);
    for (int k = 0; k < o.nodes; ++k)
        phi.x_nodes[k] = k == o.nodes - 1
                             ? o.x_hi
                             : o.x_lo + (o.x_hi - o.x_lo) * static_cast<double>(k) / (o.nodes - 1);
    phi.u = Eigen::MatrixXd::Zero(grid.steps() + 1, o.nodes);
    phi.v = Eigen::MatrixXd::Zero(grid.steps() + 1, o.nodes);
    for (int k = 0; k < o.nodes; ++k)
    {
        double const x = phi.x_nodes[k];
        phi.u(grid.steps(), k) = problem.terminal(std::span<double const>(&x, 1));
    }
    return phi;
}

}  // namespace

GridFunction apply_quadrature_map(FbsdeProblem const& problem, Grid const& grid,
                                  GridFunction const& phi, GaussHermite const& rule, int workers)
{
    require_one_dimensional(problem);
    int const n = grid.steps();
    if (phi.steps() != n)
        throw InvalidArgument("quadrature map: grid function has the wrong number of steps");

    double const h = grid.step_size();
    double const sqrt_h = std::sqrt(h);
    auto const nodes = phi.x_nodes.size();
    auto const q = rule.nodes.size();

    GridFunction out = phi;
    for (std::size_t k = 0; k < nodes; ++k)
    {
        double const x = phi.x_nodes[k];
        out.u(n, static_cast<Eigen::Index>(k)) = problem.terminal(std::span<double const>(&x, 1));
        out.v(n, static_cast<Eigen::Index>(k)) = 0.0;
    }

    for (int i = n - 1; i >= 0; --i)
    {
        double const t = grid.time(i);
        std::optional<RowSpline> next_u;
        if (i + 1 < n)
            next_u.emplace(phi.x_nodes, out.u, i + 1);
        parallel_for(nodes, workers, [&](std::size_t begin, std::size_t end) {
            std::vector<double> y(q);
            for (std::size_t k = begin; k < end; ++k)
            {
                auto const col = static_cast<Eigen::Index>(k);
                double const x = phi.x_nodes[k];
                std::span<double const> xs(&x, 1);
                double const frozen = phi.u(i, col);
                double b = 0, s = 0;
                problem.drift(t, xs, frozen, std::span<double>(&b, 1));
                problem.diffusion(t, xs, frozen, std::span<double>(&s, 1));

                double z = 0;
                for (std::size_t j = 0; j < q; ++j)
                {
                    double const xi = rule.nodes[j];
                    double const next = x + b * h + s * sqrt_h * xi;
                    y[j] = i + 1 == n ? problem.terminal(std::span<double const>(&next, 1))
                                      : (*next_u)(next);
                    z += rule.weights[j] * y[j] * sqrt_h * xi;
                }
                z /= h;
                double u = 0;
                for (std::size_t j = 0; j < q; ++j)
                    u += rule.weights[j] *
                         (y[j] + problem.driver(t, xs, y[j], std::span<double const>(&z, 1)) * h);
                out.u(i, col) = u;
                out.v(i, col) = z;
            }
        });
    }
    return out;
}

GridFunction quadrature_fixed_point(FbsdeProblem const& problem, Grid const& grid,
                                    QuadratureOptions const& options)
{
    require_one_dimensional(problem);
    if (!(options.x_lo < options.x_hi))
        throw InvalidArgument("quadrature oracle: x_lo must be below x_hi");
    if (options.nodes < 2)
        throw InvalidArgument("quadrature oracle: need at least two nodes");
    if (options.quad_order < 8)
        throw InvalidArgument("quadrature oracle: quad_order must be >= 8");
    if (options.inner_max < 1 || !(options.inner_tol >= 0))
        throw InvalidArgument("quadrature oracle: inner_max >= 1 and inner_tol >= 0 required");

    auto const rule = gauss_hermite(options.quad_order);
    GridFunction phi = zero_function(problem, grid, options);
    double change = std::numeric_limits<double>::infinity();
    for (int it = 0; it < options.inner_max; ++it)
    {
        GridFunction next = apply_quadrature_map(problem, grid, phi, rule, options.workers);
        if (!next.u.allFinite() || !next.v.allFinite())
            throw NonConvergence("quadrature oracle: non-finite values after map " +
                                     std::to_string(it + 1),
                                 change);
        change = (next.u - phi.u).cwiseAbs().maxCoeff();
        phi = std::move(next);
        if (change < options.inner_tol)
            return phi;
    }
    std::ostringstream os;
    os << "quadrature oracle: no fixed point after " << options.inner_max
       << " maps (last change " << change << ")";
    throw NonConvergence(os.str(), change);
}

//---------------------------------------------------------------------------//
// Sine benchmark
//---------------------------------------------------------------------------//
ReferencePaths sine_reference_paths(int dim, double sigma, double rate, Grid const& grid,
                                    IncrementSet const& increments, double x0_component,
                                    int workers)
{
    if (dim < 1 || increments.dim_w() != dim)
        throw InvalidArgument("sine_reference_paths: increments must have d_w = D");
    if (increments.steps() != grid.steps())
        throw InvalidArgument("sine_reference_paths: increments do not match the grid");

    int const n = grid.steps();
    double const h = grid.step_size();
    double const T = grid.horizon();
    std::size_t const L = increments.paths();
    ReferencePaths out{PathEnsemble(n, dim, L, 0), std::vector<double>(L * (n + 1))};

    parallel_for(L, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p)
        {
            auto x0 = out.states.state(p, 0);
            std::fill(x0.begin(), x0.end(), x0_component);
            for (int i = 0; i <= n; ++i)
            {
                auto const x = out.states.state(p, i);
                double const y = sine_exact_value(rate, T, grid.time(i), x);
                out.y[p * (n + 1) + i] = y;
                if (i == n)
                    break;
                // Same operation order as forward_paths: x + b h, then sigma dW row by row.
                auto next = out.states.state(p, i + 1);
                auto const dW = increments.at(p, i + 1);
                double const diag = sigma * y;
                for (int d = 0; d < dim; ++d)
                {
                    double v = x[d] + 0.0 * h;
                    for (int q = 0; q < dim; ++q)
                        v += (q == d ? diag : 0.0) * dW[q];
                    next[d] = v;
                }
            }
        }
    });
    return out;
}

BenchmarkResult run_sine_benchmark(SineSetup const& setup, Grid const& grid,
                                   SolverConfig const& config)
{
    auto const problem =
        sine_example(setup.dim, setup.sigma, setup.rate, setup.x0_component, setup.horizon);
    auto const bounds = sine_example_bounds(setup.dim, setup.sigma, setup.rate, setup.horizon);
    auto result = solve(problem, grid, config, bounds);

    BenchmarkResult out;
    std::vector<double> const x0(static_cast<std::size_t>(setup.dim), setup.x0_component);
    out.y0_exact = sine_exact_value(setup.rate, setup.horizon, 0.0, x0);
    out.y0_estimate = result.estimate.y0();
    out.abs_error = std::abs(out.y0_estimate - out.y0_exact);
    out.m_stop = result.report.m_stop;
    out.stop_reason = result.report.stop_reason;
    for (double y : result.report.y0_per_iteration)
        out.errors_per_iteration.push_back(std::abs(y - out.y0_exact));

    auto const reference = sine_reference_paths(setup.dim, setup.sigma, setup.rate, grid,
                                                *result.increments, setup.x0_component,
                                                config.workers);
    int const n = grid.steps();
    std::size_t const L = result.paths->paths();
    out.mse.assign(static_cast<std::size_t>(n + 1), 0.0);
    for (int i = 0; i <= n; ++i)
    {
        double s = 0;
        for (std::size_t p = 0; p < L; ++p)
        {
            double const d =
                result.estimate.value(i, result.paths->state(p, i)) - reference.y_at(p, i);
            s += d * d;
        }
        out.mse[static_cast<std::size_t>(i)] = s / static_cast<double>(L);
    }
    out.report = std::move(result.report);
    return out;
}

std::optional<double> log_log_slope(std::vector<double> const& x, std::vector<double> const& y)
{
    if (x.size() != y.size())
        throw InvalidArgument("log_log_slope: size mismatch");
    if (x.size() < 2)
        return std::nullopt;
    for (std::size_t k = 0; k < x.size(); ++k)
        if (!(x[k] > 0 && y[k] > 0 && std::isfinite(x[k]) && std::isfinite(y[k])))
            return std::nullopt;
    double const m = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t k = 0; k < x.size(); ++k)
    {
        sx += std::log(x[k]);
        sy += std::log(y[k]);
    }
    double const mx = sx / m, my = sy / m;
    double sxy = 0, sxx = 0;
    for (std::size_t k = 0; k < x.size(); ++k)
    {
        double const dx = std::log(x[k]) - mx;
        sxy += dx * (std::log(y[k]) - my);
        sxx += dx * dx;
    }
    if (!(sxx > 0))
        return std::nullopt;
    return sxy / sxx;
}

ConvergenceStudy convergence_study_n(SineSetup const& setup, std::vector<int> const& n_list,
                                     SolverConfig const& config, int seeds)
{
    if (n_list.empty())
        throw InvalidArgument("convergence study: n_list must not be empty");
    if (seeds < 1)
        throw InvalidArgument("convergence study: seeds must be >= 1");

    ConvergenceStudy study;
    std::vector<double> xs, ys;
    for (int n : n_list)
    {
        Grid const grid(n, setup.horizon);
        ConvergenceRow row;
        row.steps = n;
        for (int s = 0; s < seeds; ++s)
        {
            SolverConfig c = config;
            c.seed = config.seed + static_cast<std::uint64_t>(s);
            auto const r = run_sine_benchmark(setup, grid, c);
            row.abs_error += r.abs_error;
            row.m_stop += r.m_stop;
        }
        row.abs_error /= seeds;
        row.m_stop /= seeds;
        xs.push_back(n);
        ys.push_back(row.abs_error);
        row.slope_so_far = log_log_slope(xs, ys);
        study.rows.push_back(row);
    }
    study.slope = log_log_slope(xs, ys);
    return study;
}

}  // namespace fbsde
