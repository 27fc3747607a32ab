#include "fbsde/solver.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "fbsde/errors.hpp"
#include "fbsde/parallel.hpp"
#include "fbsde/random.hpp"

namespace fbsde {

//---------------------------------------------------------------------------//
// ValueFunctionEstimate
//---------------------------------------------------------------------------//
ValueFunctionEstimate::ValueFunctionEstimate(Grid grid, int dim_w, TerminalFn terminal,
                                             std::shared_ptr<BasisSet const> basis)
    : grid_(std::move(grid)), dim_w_(dim_w), terminal_(std::move(terminal)),
      basis_(std::move(basis)), z0_(static_cast<std::size_t>(dim_w), 0.0)
{
    if (!basis_)
        throw InvalidArgument("value function estimate: basis is required");
    if (!terminal_)
        throw InvalidArgument("value function estimate: terminal function is required");
    if (dim_w < 1)
        throw InvalidArgument("value function estimate: d_w must be >= 1");
}

ValueFunctionEstimate ValueFunctionEstimate::zero(Grid const& grid, int dim_w, TerminalFn terminal,
                                                  std::shared_ptr<BasisSet const> basis)
{
    ValueFunctionEstimate e(grid, dim_w, std::move(terminal), std::move(basis));
    e.zero_ = true;
    return e;
}

ValueFunctionEstimate make_estimate(Grid const& grid, int dim_w, TerminalFn terminal,
                                    std::shared_ptr<BasisSet const> basis,
                                    std::vector<RegressionFit> u_fits,
                                    std::vector<std::vector<RegressionFit>> v_fits, double y0,
                                    std::vector<double> z0)
{
    ValueFunctionEstimate e(grid, dim_w, std::move(terminal), std::move(basis));
    auto const n = static_cast<std::size_t>(grid.steps());
    if (u_fits.size() != n || v_fits.size() != n)
        throw InvalidArgument("make_estimate: expected n fit slots (index 0 unused)");
    if (z0.size() != static_cast<std::size_t>(dim_w))
        throw InvalidArgument("make_estimate: z0 must have d_w entries");
    auto const K = static_cast<std::size_t>(e.basis_->count());
    for (std::size_t i = 1; i < n; ++i)
    {
        if (u_fits[i].coefficients.size() != K || v_fits[i].size() != z0.size())
            throw InvalidArgument("make_estimate: fit shape does not match basis or d_w");
        for (auto const& f : v_fits[i])
            if (f.coefficients.size() != K)
                throw InvalidArgument("make_estimate: fit shape does not match basis");
    }
    e.u_fits_ = std::move(u_fits);
    e.v_fits_ = std::move(v_fits);
    e.y0_ = y0;
    e.z0_ = std::move(z0);
    return e;
}

double ValueFunctionEstimate::value(int i, std::span<double const> x) const
{
    if (i == grid_.steps())
        return terminal_(x);
    if (zero_)
        return 0.0;
    if (i == 0)
        return y0_;
    return basis_->combine(u_fits_[static_cast<std::size_t>(i)].coefficients, x);
}

ValueFunctionEstimate::Value ValueFunctionEstimate::evaluate(int i, std::span<double const> x) const
{
    if (i < 0 || i > grid_.steps())
    {
        std::ostringstream os;
        os << "evaluate_solution: step " << i << " outside 0.." << grid_.steps();
        throw InvalidArgument(os.str());
    }
    if (static_cast<int>(x.size()) != basis_->dim())
        throw InvalidArgument("evaluate_solution: state dimension does not match basis");

    Value out;
    out.v.assign(static_cast<std::size_t>(dim_w_), 0.0);
    out.u = value(i, x);
    if (zero_ || i == grid_.steps())
        return out;
    if (i == 0)
    {
        out.v = z0_;
        return out;
    }
    auto const& fits = v_fits_[static_cast<std::size_t>(i)];
    for (int d = 0; d < dim_w_; ++d)
        out.v[d] = basis_->combine(fits[d].coefficients, x);
    return out;
}

nlohmann::json ValueFunctionEstimate::to_json() const
{
    nlohmann::json j;
    j["grid"] = {{"n", grid_.steps()}, {"T", grid_.horizon()}, {"h", grid_.step_size()}};
    j["basis"] = {{"dim", basis_->dim()},
                  {"truncation", basis_->truncation()},
                  {"include_terminal", basis_->include_terminal()},
                  {"count", basis_->count()}};
    j["dim_w"] = dim_w_;
    j["zero"] = zero_;
    j["y0"] = y0_;
    j["z0"] = z0_;
    auto u = nlohmann::json::array();
    auto v = nlohmann::json::array();
    if (!zero_)
    {
        for (int i = 1; i < grid_.steps(); ++i)
        {
            u.push_back(fit_to_json(u_fits_[static_cast<std::size_t>(i)], i));
            auto comps = nlohmann::json::array();
            for (auto const& f : v_fits_[static_cast<std::size_t>(i)])
                comps.push_back(fit_to_json(f, i));
            v.push_back(std::move(comps));
        }
    }
    j["u_fits"] = std::move(u);
    j["v_fits"] = std::move(v);
    return j;
}

//---------------------------------------------------------------------------//
// Backward pass
//---------------------------------------------------------------------------//
namespace {

[[noreturn]] void target_blow_up(int step, std::size_t path, char const* what)
{
    std::ostringstream os;
    os << "backward pass: non-finite " << what << " target at step " << step << ", path " << path;
    throw BlowUp(os.str(), static_cast<long>(path), step);
}

}  // namespace

ValueFunctionEstimate backward_pass(FbsdeProblem const& problem, Grid const& grid,
                                    PathEnsemble const& paths, IncrementSet const& increments,
                                    std::shared_ptr<BasisSet const> basis, double ridge,
                                    int workers)
{
    int const n = grid.steps();
    int const dw = problem.dim_w;
    std::size_t const L = paths.paths();
    if (paths.steps() != n || increments.steps() != n)
        throw InvalidArgument("backward_pass: ensemble or increments do not match the grid");
    if (increments.paths() != L)
        throw InvalidArgument("backward_pass: ensemble and increments differ in path count");
    if (paths.dim_x() != problem.dim_x || increments.dim_w() != dw)
        throw InvalidArgument("backward_pass: dimensions do not match the problem");
    if (!basis || basis->dim() != problem.dim_x)
        throw InvalidArgument("backward_pass: basis dimension does not match the problem");

    double const h = grid.step_size();
    auto const Li = static_cast<Eigen::Index>(L);

    ValueFunctionEstimate est(grid, dw, problem.terminal, basis);
    est.u_fits_.resize(static_cast<std::size_t>(n));
    est.v_fits_.resize(static_cast<std::size_t>(n));

    // Y_{i+1} at every path, starting from the terminal rule.
    Eigen::VectorXd y_next(Li);
    parallel_for(L, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p)
        {
            double const y = problem.terminal(paths.state(p, n));
            if (!std::isfinite(y))
                target_blow_up(n, p, "terminal");
            y_next[static_cast<Eigen::Index>(p)] = y;
        }
    });

    Eigen::MatrixXd v_targets(Li, dw);
    Eigen::VectorXd u_targets(Li);
    for (int i = n - 1; i >= 1; --i)
    {
        double const t = grid.time(i);
        LeastSquares ls(design_matrix(*basis, paths, i, workers), ridge);

        parallel_for(L, workers, [&](std::size_t begin, std::size_t end) {
            for (std::size_t p = begin; p < end; ++p)
            {
                auto const dW = increments.at(p, i + 1);
                auto const r = static_cast<Eigen::Index>(p);
                for (int d = 0; d < dw; ++d)
                {
                    double const v = y_next[r] * dW[d] / h;
                    if (!std::isfinite(v))
                        target_blow_up(i, p, "Z");
                    v_targets(r, d) = v;
                }
            }
        });
        auto v_fits = ls.solve_columns(v_targets);

        Eigen::MatrixXd coef(basis->count(), dw);
        for (int d = 0; d < dw; ++d)
            coef.col(d) = Eigen::Map<Eigen::VectorXd const>(v_fits[d].coefficients.data(),
                                                            basis->count());
        // Z_i at every path, row-major so each path's vector is contiguous.
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> z =
            ls.design() * coef;

        parallel_for(L, workers, [&](std::size_t begin, std::size_t end) {
            for (std::size_t p = begin; p < end; ++p)
            {
                auto const r = static_cast<Eigen::Index>(p);
                std::span<double const> zp(z.data() + r * dw, static_cast<std::size_t>(dw));
                double const u =
                    problem.driver(t, paths.state(p, i), y_next[r], zp) * h + y_next[r];
                if (!std::isfinite(u))
                    target_blow_up(i, p, "Y");
                u_targets[r] = u;
            }
        });
        auto u_fit = ls.solve(u_targets);
        y_next = ls.fitted(u_fit);

        StepDiagnostics diag;
        diag.step = i;
        diag.rank = ls.rank();
        diag.rank_deficient = ls.rank_deficient();
        diag.u_residual_rms = u_fit.residual_rms;
        for (auto const& f : v_fits)
            diag.v_residual_rms = std::max(diag.v_residual_rms, f.residual_rms);
        est.diagnostics_.push_back(diag);

        est.u_fits_[static_cast<std::size_t>(i)] = std::move(u_fit);
        est.v_fits_[static_cast<std::size_t>(i)] = std::move(v_fits);
    }

    // i = 0: sample means with the common Z0 inside the driver.
    std::vector<double> z0(static_cast<std::size_t>(dw), 0.0);
    for (std::size_t p = 0; p < L; ++p)
    {
        auto const dW = increments.at(p, 1);
        for (int d = 0; d < dw; ++d)
            z0[d] += y_next[static_cast<Eigen::Index>(p)] * dW[d];
    }
    for (auto& z : z0)
        z /= static_cast<double>(L) * h;

    std::vector<double> y0_terms(L);
    parallel_for(L, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p)
        {
            double const y1 = y_next[static_cast<Eigen::Index>(p)];
            double const v = y1 + problem.driver(0.0, problem.x0, y1, z0) * h;
            if (!std::isfinite(v))
                target_blow_up(0, p, "Y");
            y0_terms[p] = v;
        }
    });
    double y0 = 0;
    for (double v : y0_terms)
        y0 += v;
    est.y0_ = y0 / static_cast<double>(L);
    est.z0_ = std::move(z0);
    return est;
}

//---------------------------------------------------------------------------//
// Iteration
//---------------------------------------------------------------------------//
char const* to_string(StopReason reason)
{
    return reason == StopReason::tolerance ? "tolerance" : "max_iterations";
}

namespace {

nlohmann::json finite_or_null(double v)
{
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

nlohmann::json condition_json(ConditionReport const& c)
{
    nlohmann::json j;
    j["l0"] = finite_or_null(c.l0);
    j["l1"] = finite_or_null(c.l1);
    j["c1"] = finite_or_null(c.c1_at_l1);
    j["l2"] = finite_or_null(c.l2_at_l1);
    j["c2"] = finite_or_null(c.c2_at_l1);
    j["cond_3_2"] = c.condition_3_2_holds;
    j["cond_4_2"] = c.condition_4_2_holds;
    j["cond_5_1"] = c.condition_5_1_holds;
    j["rate"] = finite_or_null(c.predicted_rate);
    j["l_bar"] = finite_or_null(c.bound_l_bar);
    j["g_bar"] = finite_or_null(c.bound_g_bar);
    j["h_bar"] = finite_or_null(c.bound_h_bar);
    j["max_feasible_step"] = finite_or_null(c.max_feasible_step);
    if (c.schedule_feasible)
        j["schedule_feasible"] = *c.schedule_feasible;
    j["all_hold"] = c.all_hold();
    return j;
}

}  // namespace

nlohmann::json IterationReport::to_json() const
{
    nlohmann::json j;
    j["y0_per_iteration"] = y0_per_iteration;
    j["z0_final"] = z0_final;
    j["m_stop"] = m_stop;
    j["stop_reason"] = to_string(stop_reason);
    j["n"] = steps;
    j["T"] = horizon;
    j["paths"] = paths;
    j["basis_count"] = basis_count;
    j["seed"] = seed;
    j["ridge"] = ridge;
    j["tol"] = tol;
    j["m_max"] = max_iterations;
    j["resample_per_iteration"] = resample_per_iteration;
    auto its = nlohmann::json::array();
    for (auto const& r : iterations)
        its.push_back({{"m", r.m},
                       {"y0", r.y0},
                       {"delta_y0", finite_or_null(r.delta_y0)},
                       {"function_change", finite_or_null(r.function_change)},
                       {"rank_deficient_steps", r.rank_deficient_steps},
                       {"max_u_residual_rms", r.max_u_residual_rms},
                       {"seconds", r.seconds}});
    j["iterations"] = std::move(its);
    if (conditions)
        j["conditions"] = condition_json(*conditions);
    return j;
}

std::shared_ptr<BasisSet const> make_solver_basis(FbsdeProblem const& problem,
                                                  SolverConfig const& config,
                                                  std::optional<CoefficientBounds> const& bounds)
{
    if (!config.include_terminal)
        return std::make_shared<BasisSet const>(problem.dim_x, config.truncation);
    double const lip = bounds ? std::sqrt(bounds->g_x) : std::numeric_limits<double>::infinity();
    return std::make_shared<BasisSet const>(problem.dim_x, config.truncation, problem.terminal,
                                            lip);
}

SolveResult solve(FbsdeProblem const& problem, Grid const& grid, SolverConfig const& config,
                  std::optional<CoefficientBounds> const& bounds)
{
    problem.validate();
    if (config.paths < 1)
        throw InvalidArgument("solve: paths must be >= 1");
    if (config.max_iterations < 1)
        throw InvalidArgument("solve: m_max must be >= 1");
    if (!(config.tol >= 0))
        throw InvalidArgument("solve: tol must be >= 0");
    if (std::abs(grid.horizon() - problem.horizon) > 1e-12 * problem.horizon)
        throw InvalidArgument("solve: grid horizon differs from the problem horizon");

    IterationReport report;
    report.steps = grid.steps();
    report.horizon = grid.horizon();
    report.paths = config.paths;
    report.seed = config.seed;
    report.ridge = config.ridge;
    report.tol = config.tol;
    report.max_iterations = config.max_iterations;
    report.resample_per_iteration = config.resample_per_iteration;
    if (bounds)
    {
        CheckOptions opts;
        opts.steps = grid.steps();
        report.conditions = check_conditions(*bounds, grid.horizon(), opts);
    }

    auto basis = make_solver_basis(problem, config, bounds);
    report.basis_count = basis->count();

    IncrementSet::Options const inc_opts{config.workers, config.memory_budget_bytes};
    auto increments = std::make_shared<IncrementSet const>(IncrementSet::generate(
        grid.steps(), problem.dim_w, config.paths, grid.step_size(), config.seed, inc_opts));

    auto prev = ValueFunctionEstimate::zero(grid, problem.dim_w, problem.terminal, basis);
    std::shared_ptr<PathEnsemble const> ensemble;

    for (int m = 1; m <= config.max_iterations; ++m)
    {
        auto const start = std::chrono::steady_clock::now();
        if (config.resample_per_iteration && m > 1)
            increments = std::make_shared<IncrementSet const>(
                IncrementSet::generate(grid.steps(), problem.dim_w, config.paths,
                                       grid.step_size(), mix_seed(config.seed + m), inc_opts));

        ValueEvaluator const u_prev = [&prev](int i, std::span<double const> x) {
            return prev.value(i, x);
        };
        ensemble = std::make_shared<PathEnsemble const>(
            forward_paths(problem, grid, u_prev, *increments, m, config.workers));
        auto next =
            backward_pass(problem, grid, *ensemble, *increments, basis, config.ridge, config.workers);

        IterationRecord rec;
        rec.m = m;
        rec.y0 = next.y0();
        if (m > 1)
            rec.delta_y0 = std::abs(next.y0() - prev.y0());
        for (auto const& d : next.diagnostics())
        {
            rec.rank_deficient_steps += d.rank_deficient ? 1 : 0;
            rec.max_u_residual_rms = std::max(rec.max_u_residual_rms, d.u_residual_rms);
        }
        if (config.stop_on_function_change)
        {
            double change = std::abs(next.y0() - prev.y0());
            std::size_t const probes =
                std::min(ensemble->paths(), static_cast<std::size_t>(config.function_probe_paths));
            for (std::size_t p = 0; p < probes; ++p)
                for (int i = 1; i < grid.steps(); ++i)
                {
                    auto const x = ensemble->state(p, i);
                    change = std::max(change, std::abs(next.value(i, x) - prev.value(i, x)));
                }
            rec.function_change = change;
        }
        rec.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        report.y0_per_iteration.push_back(rec.y0);
        report.iterations.push_back(rec);
        prev = std::move(next);

        bool stop = m > 1 && rec.delta_y0 < config.tol;
        if (stop && config.stop_on_function_change)
            stop = rec.function_change < config.tol;
        if (stop)
        {
            report.stop_reason = StopReason::tolerance;
            break;
        }
    }

    report.m_stop = static_cast<int>(report.y0_per_iteration.size());
    report.z0_final = prev.z0();
    return SolveResult{std::move(prev), std::move(report), std::move(increments),
                       std::move(ensemble)};
}

SolutionPaths simulate_solution_paths(FbsdeProblem const& problem, Grid const& grid,
                                      ValueFunctionEstimate const& estimate,
                                      IncrementSet const& increments, int workers)
{
    if (estimate.grid().steps() != grid.steps() ||
        std::abs(estimate.grid().step_size() - grid.step_size()) > 1e-12 * grid.step_size())
        throw InvalidArgument("simulate_solution_paths: estimate was built on a different grid");

    ValueEvaluator const u = [&estimate](int i, std::span<double const> x) {
        return estimate.value(i, x);
    };
    SolutionPaths out{forward_paths(problem, grid, u, increments, 0, workers), {}, {}};

    int const n = grid.steps();
    int const dw = problem.dim_w;
    std::size_t const L = increments.paths();
    out.y.resize(L * (n + 1));
    out.z.resize(L * n * dw);
    parallel_for(L, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p)
        {
            for (int i = 0; i <= n; ++i)
            {
                auto const value = estimate.evaluate(i, out.states.state(p, i));
                out.y[p * (n + 1) + i] = value.u;
                if (i < n)
                    std::copy(value.v.begin(), value.v.end(),
                              out.z.begin() + static_cast<std::ptrdiff_t>((p * n + i) * dw));
            }
        }
    });
    return out;
}

}  // namespace fbsde
