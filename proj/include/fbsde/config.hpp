#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fbsde/errors.hpp"
#include "fbsde/model.hpp"
#include "fbsde/solver.hpp"

namespace fbsde {

enum class Command
{
    check,
    solve,
    bench_sine,
    sweep_n,
    sweep_m,
    oracle_compare
};

char const* to_string(Command command);
std::optional<Command> parse_command(std::string_view name);

/// Parse failure; line() is 0 for settings that did not come from a file.
class ConfigError : public InvalidArgument
{
  public:
    ConfigError(std::string const& what, int line) : InvalidArgument(what), line_(line) {}
    int line() const noexcept { return line_; }

  private:
    int line_;
};

struct ExperimentConfig
{
    std::optional<Command> command;

    // Problem
    std::string problem = "sine";
    int D = 1;
    double sigma = 0.1;
    double r = 0.0;
    std::optional<double> x0;
    double T = 1.0;

    // Grid and solver
    int n = 50;
    std::size_t paths = 50000;
    std::uint64_t seed = 1;
    double tol = 1e-4;
    int m_max = 50;
    double ridge = 0.0;
    double R = 10.0;
    bool include_terminal = false;
    bool resample_per_iteration = false;
    bool stop_on_function_change = false;
    int workers = 0;
    std::size_t memory_budget_mb = 2048;

    // Studies
    int seeds = 1;
    std::vector<int> n_list{10, 20, 40, 80};

    // Quadrature oracle (domain defaults to x0 -/+ 2)
    std::optional<double> oracle_x_lo;
    std::optional<double> oracle_x_hi;
    int oracle_nodes = 801;
    int quad_order = 32;
    double inner_tol = 1e-12;
    int inner_max = 500;

    // Condition check
    double slack = 0.01;
    std::optional<double> lambda1;
    //! Explicit coefficient bounds, overriding the catalog's.
    std::map<std::string, double> bounds;

    std::string out = ".";

    bool operator==(ExperimentConfig const&) const = default;
};

/// Every accepted key, in serialization order.
std::vector<std::string> const& config_keys();

/// Apply one `key = value` setting; throws ConfigError.
void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value,
                   int line = 0);

/*!
 * Flat `key = value` format, one setting per line. Blank lines and text
 * after '#' are ignored. Unknown keys and malformed values are rejected with
 * the line number; an unknown key gets the closest valid key as suggestion.
 */
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(std::string const& path);

/// Inverse of parse_config; numbers carry 17 significant digits.
std::string serialize_config(ExperimentConfig const& config);

/// Closest key by edit distance, if reasonably close.
std::optional<std::string> suggest_key(std::string_view unknown);

/// Key reference with defaults, for --help.
std::string config_reference();

//---------------------------------------------------------------------------//
// Derived objects
//---------------------------------------------------------------------------//
CatalogParams catalog_params(ExperimentConfig const& config);
FbsdeProblem make_problem(ExperimentConfig const& config);
/// Catalog bounds with explicit overrides applied; nullopt if neither is available.
std::optional<CoefficientBounds> make_bounds(ExperimentConfig const& config);
SolverConfig make_solver_config(ExperimentConfig const& config);

}  // namespace fbsde
