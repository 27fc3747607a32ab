#include "fbsde/experiment.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "fbsde/conditions.hpp"
#include "fbsde/oracle.hpp"
#include "fbsde/solver.hpp"

namespace fbsde {

std::string format_double(double v)
{
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

CsvWriter::CsvWriter(std::filesystem::path file, std::vector<std::string> header)
    : file_(std::move(file))
{
    row(header);
}

void CsvWriter::row(std::vector<std::string> const& values)
{
    for (std::size_t k = 0; k < values.size(); ++k)
        text_ += (k ? "," : "") + values[k];
    text_ += '\n';
}

void CsvWriter::finish(ExperimentConfig const& config)
{
    std::istringstream lines(serialize_config(config));
    std::string line;
    while (std::getline(lines, line))
    {
        auto const eq = line.find(" = ");
        text_ += "# " + line.substr(0, eq) + ": " + line.substr(eq + 3) + '\n';
    }
    std::ofstream os(file_);
    if (!os || !(os << text_))
        throw Error("cannot write '" + file_.string() + "'");
}

namespace {

nlohmann::json real_or_null(double v)
{
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

void write_json(std::filesystem::path const& file, nlohmann::json const& j)
{
    std::ofstream os(file);
    if (!os || !(os << std::setprecision(17) << j.dump(2) << '\n'))
        throw Error("cannot write '" + file.string() + "'");
}

std::filesystem::path prepare_out(ExperimentConfig const& config)
{
    std::filesystem::path dir(config.out);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw Error("cannot create output directory '" + dir.string() + "'");
    return dir;
}

SineSetup sine_setup(ExperimentConfig const& config)
{
    if (config.problem != "sine")
        throw InvalidArgument(std::string(to_string(*config.command)) +
                              " requires problem = sine");
    SineSetup s;
    s.dim = config.D;
    s.sigma = config.sigma;
    s.rate = config.r;
    s.x0_component = config.x0.value_or(std::numbers::pi / 2);
    s.horizon = config.T;
    return s;
}

//---------------------------------------------------------------------------//
int run_check(ExperimentConfig const& config, std::ostream& summary, std::ostream& log)
{
    auto const bounds = make_bounds(config);
    if (!bounds)
        throw InvalidArgument("problem '" + config.problem +
                              "' has no catalog bounds; set them explicitly (K, b_y, ...)");
    auto const problem = make_problem(config);
    CheckOptions opts;
    opts.slack = config.slack;
    opts.steps = config.n;
    auto const rep = check_conditions(*bounds, problem.horizon, opts);

    nlohmann::json j;
    j["l0"] = real_or_null(rep.l0);
    j["l1"] = real_or_null(rep.l1);
    j["c1"] = real_or_null(rep.c1_at_l1);
    j["l2"] = real_or_null(rep.l2_at_l1);
    j["c2"] = real_or_null(rep.c2_at_l1);
    j["cond_3_2"] = rep.condition_3_2_holds;
    j["cond_4_2"] = rep.condition_4_2_holds;
    j["cond_5_1"] = rep.condition_5_1_holds;
    j["rate"] = real_or_null(rep.predicted_rate);
    j["l_bar"] = real_or_null(rep.bound_l_bar);
    j["g_bar"] = real_or_null(rep.bound_g_bar);
    j["h_bar"] = real_or_null(rep.bound_h_bar);
    j["max_feasible_step"] = real_or_null(rep.max_feasible_step);
    j["n"] = config.n;
    if (rep.schedule_feasible)
        j["schedule_feasible"] = *rep.schedule_feasible;
    if (config.lambda1)
    {
        try
        {
            j["c2_discrete"] = real_or_null(
                c2_discrete(*bounds, config.n, problem.horizon, *config.lambda1, rep.l1, rep.l1));
        }
        catch (ScheduleInfeasible const& e)
        {
            j["c2_discrete"] = nullptr;
            log << "c2_discrete: " << e.what() << '\n';
        }
    }

    std::vector<std::pair<std::string, std::string>> const rows{
        {"L0", format_double(rep.l0)},
        {"L1", format_double(rep.l1)},
        {"c1(L1)", format_double(rep.c1_at_l1)},
        {"L2(L1)", format_double(rep.l2_at_l1)},
        {"c2(L1,L1)", format_double(rep.c2_at_l1)},
        {"L0 < 1/e", rep.condition_3_2_holds ? "yes" : "no"},
        {"c1 < 1", rep.condition_4_2_holds ? "yes" : "no"},
        {"c2 < 1", rep.condition_5_1_holds ? "yes" : "no"},
        {"rate", format_double(rep.predicted_rate)},
        {"L_bar", format_double(rep.bound_l_bar)},
        {"G_bar", format_double(rep.bound_g_bar)},
        {"H_bar", format_double(rep.bound_h_bar)},
        {"max step", format_double(rep.max_feasible_step)},
    };
    for (auto const& [k, v] : rows)
        log << "  " << std::left << std::setw(12) << k << v << '\n';

    auto const dir = prepare_out(config);
    j["config"] = serialize_config(config);
    write_json(dir / "check.json", j);
    summary << "check: " << (rep.all_hold() ? "all conditions hold" : "conditions fail")
            << " (L0 = " << format_double(rep.l0) << ", c1 = " << format_double(rep.c1_at_l1)
            << ", c2 = " << format_double(rep.c2_at_l1) << ")\n";
    return exit_ok;
}

int run_solve(ExperimentConfig const& config, std::ostream& summary, std::ostream&)
{
    auto const problem = make_problem(config);
    auto const bounds = make_bounds(config);
    Grid const grid(config.n, problem.horizon);
    auto const dir = prepare_out(config);
    auto const result = solve(problem, grid, make_solver_config(config), bounds);

    nlohmann::json j;
    j["report"] = result.report.to_json();
    j["estimate"] = result.estimate.to_json();
    j["config"] = serialize_config(config);
    write_json(dir / "solve.json", j);

    summary << "solve: Y0 = " << format_double(result.estimate.y0())
            << ", m_stop = " << result.report.m_stop
            << ", stop_reason = " << to_string(result.report.stop_reason) << '\n';
    return result.report.converged() ? exit_ok : exit_divergence;
}

int run_bench_sine(ExperimentConfig const& config, std::ostream& summary, std::ostream&)
{
    auto const setup = sine_setup(config);
    Grid const grid(config.n, setup.horizon);
    auto const dir = prepare_out(config);
    auto const r = run_sine_benchmark(setup, grid, make_solver_config(config));

    CsvWriter csv(dir / "bench_sine.csv", {"i", "t_i", "mse"});
    for (int i = 0; i <= grid.steps(); ++i)
        csv.row({std::to_string(i), format_double(grid.time(i)),
                 format_double(r.mse[static_cast<std::size_t>(i)])});
    csv.finish(config);

    nlohmann::json j;
    j["y0_estimate"] = r.y0_estimate;
    j["y0_exact"] = r.y0_exact;
    j["abs_error"] = r.abs_error;
    j["m_stop"] = r.m_stop;
    j["errors_per_iteration"] = r.errors_per_iteration;
    j["mse"] = r.mse;
    j["report"] = r.report.to_json();
    j["config"] = serialize_config(config);
    write_json(dir / "bench_sine.json", j);

    summary << "bench-sine: Y0 = " << format_double(r.y0_estimate)
            << " (exact " << format_double(r.y0_exact) << ", error " << format_double(r.abs_error)
            << "), m_stop = " << r.m_stop << ", stop_reason = " << to_string(r.stop_reason)
            << '\n';
    return r.stop_reason == StopReason::tolerance ? exit_ok : exit_divergence;
}

int run_sweep_n(ExperimentConfig const& config, std::ostream& summary, std::ostream& log)
{
    auto const setup = sine_setup(config);
    auto const dir = prepare_out(config);
    auto const study =
        convergence_study_n(setup, config.n_list, make_solver_config(config), config.seeds);

    CsvWriter csv(dir / "sweep_n.csv", {"n", "abs_error", "m_stop", "slope_so_far"});
    for (auto const& row : study.rows)
    {
        csv.row({std::to_string(row.steps), format_double(row.abs_error),
                 format_double(row.m_stop),
                 row.slope_so_far ? format_double(*row.slope_so_far) : ""});
        log << "  n = " << row.steps << ": abs_error = " << format_double(row.abs_error)
            << ", m_stop = " << row.m_stop << '\n';
    }
    csv.finish(config);

    summary << "sweep-n: slope = "
            << (study.slope ? format_double(*study.slope) : std::string("absent")) << '\n';
    return exit_ok;
}

int run_sweep_m(ExperimentConfig const& config, std::ostream& summary, std::ostream&)
{
    auto const setup = sine_setup(config);
    Grid const grid(config.n, setup.horizon);
    auto const dir = prepare_out(config);

    // Average over seeds on the common prefix of iterations.
    std::vector<double> y0_sum, err_sum, delta_sum;
    std::size_t common = 0;
    bool all_converged = true;
    for (int s = 0; s < config.seeds; ++s)
    {
        auto solver = make_solver_config(config);
        solver.seed = config.seed + static_cast<std::uint64_t>(s);
        auto const r = run_sine_benchmark(setup, grid, solver);
        all_converged = all_converged && r.stop_reason == StopReason::tolerance;
        auto const& ys = r.report.y0_per_iteration;
        common = s == 0 ? ys.size() : std::min(common, ys.size());
        y0_sum.resize(std::max(y0_sum.size(), ys.size()), 0.0);
        err_sum.resize(y0_sum.size(), 0.0);
        delta_sum.resize(y0_sum.size(), 0.0);
        for (std::size_t m = 0; m < ys.size(); ++m)
        {
            y0_sum[m] += ys[m];
            err_sum[m] += r.errors_per_iteration[m];
            delta_sum[m] += m ? std::abs(ys[m] - ys[m - 1]) : 0.0;
        }
    }

    CsvWriter csv(dir / "sweep_m.csv", {"m", "y0", "abs_error", "delta_y0"});
    double const k = config.seeds;
    for (std::size_t m = 0; m < common; ++m)
        csv.row({std::to_string(m + 1), format_double(y0_sum[m] / k), format_double(err_sum[m] / k),
                 m ? format_double(delta_sum[m] / k) : ""});
    csv.finish(config);

    summary << "sweep-m: " << common << " iterations, final abs_error = "
            << (common ? format_double(err_sum[common - 1] / k) : std::string("n/a")) << '\n';
    return all_converged || config.tol == 0 ? exit_ok : exit_divergence;
}

int run_oracle_compare(ExperimentConfig const& config, std::ostream& summary, std::ostream& log)
{
    auto const problem = make_problem(config);
    if (problem.dim_x != 1 || problem.dim_w != 1)
        throw InvalidArgument("oracle-compare requires D = 1");
    Grid const grid(config.n, problem.horizon);
    double const x0 = problem.x0[0];
    auto const dir = prepare_out(config);

    QuadratureOptions q;
    q.x_lo = config.oracle_x_lo.value_or(x0 - 2.0);
    q.x_hi = config.oracle_x_hi.value_or(x0 + 2.0);
    q.nodes = config.oracle_nodes;
    q.quad_order = config.quad_order;
    q.inner_tol = config.inner_tol;
    q.inner_max = config.inner_max;
    q.workers = config.workers;
    auto const oracle = quadrature_fixed_point(problem, grid, q);
    oracle.write_csv(dir / "oracle_grid.csv");
    double const u0 = oracle.u_at(0, x0);
    auto doubled = q;
    doubled.quad_order = 2 * q.quad_order;
    double const order_change =
        std::abs(quadrature_fixed_point(problem, grid, doubled).u_at(0, x0) - u0);
    if (!(order_change < 1e-8))
        log << "warning: doubling the quadrature order moves u0 by " << format_double(order_change)
            << '\n';

    auto const bounds = make_bounds(config);
    std::vector<double> y0s;
    for (int s = 0; s < config.seeds; ++s)
    {
        auto solver = make_solver_config(config);
        solver.seed = config.seed + static_cast<std::uint64_t>(s);
        auto const r = solve(problem, grid, solver, bounds);
        y0s.push_back(r.estimate.y0());
        log << "  seed " << solver.seed << ": Y0 = " << format_double(y0s.back())
            << ", m_stop = " << r.report.m_stop << '\n';
    }
    double const mean = std::accumulate(y0s.begin(), y0s.end(), 0.0) / y0s.size();
    double var = 0;
    for (double y : y0s)
        var += (y - mean) * (y - mean);
    double const sd = y0s.size() > 1 ? std::sqrt(var / (y0s.size() - 1)) : 0.0;
    double const diff = std::abs(mean - u0);
    double const budget = 3.0 * sd + 1e-4;

    CsvWriter csv(dir / "oracle_compare.csv", {"seed", "y0"});
    for (std::size_t s = 0; s < y0s.size(); ++s)
        csv.row({std::to_string(config.seed + s), format_double(y0s[s])});
    csv.finish(config);

    nlohmann::json j;
    j["oracle_u0"] = u0;
    j["order_doubling_change"] = order_change;
    j["solver_y0"] = y0s;
    j["solver_mean"] = mean;
    j["solver_sd"] = sd;
    j["abs_difference"] = diff;
    j["budget"] = budget;
    j["agree"] = diff <= budget;
    j["config"] = serialize_config(config);
    write_json(dir / "oracle_compare.json", j);

    summary << "oracle-compare: oracle u0 = " << format_double(u0) << ", solver mean Y0 = "
            << format_double(mean) << ", |diff| = " << format_double(diff) << " vs budget "
            << format_double(budget) << (diff <= budget ? " (agree)" : " (disagree)") << '\n';
    return exit_ok;
}

}  // namespace

int run_experiment(ExperimentConfig const& config, std::ostream& summary, std::ostream& log)
{
    try
    {
        if (!config.command)
            throw InvalidArgument("no command given");
        switch (*config.command)
        {
        case Command::check: return run_check(config, summary, log);
        case Command::solve: return run_solve(config, summary, log);
        case Command::bench_sine: return run_bench_sine(config, summary, log);
        case Command::sweep_n: return run_sweep_n(config, summary, log);
        case Command::sweep_m: return run_sweep_m(config, summary, log);
        case Command::oracle_compare: return run_oracle_compare(config, summary, log);
        }
    }
    catch (BlowUp const& e)
    {
        summary << to_string(*config.command) << ": diverged: " << e.what() << '\n';
        return exit_divergence;
    }
    catch (NonConvergence const& e)
    {
        summary << to_string(*config.command) << ": diverged: " << e.what() << '\n';
        return exit_divergence;
    }
    catch (Error const& e)
    {
        log << "error: " << e.what() << '\n';
        return exit_invalid_input;
    }
    return exit_invalid_input;
}

}  // namespace fbsde
