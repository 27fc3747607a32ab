#include "fbsde/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

namespace fbsde {

char const* to_string(Command command)
{
    switch (command)
    {
    case Command::check: return "check";
    case Command::solve: return "solve";
    case Command::bench_sine: return "bench-sine";
    case Command::sweep_n: return "sweep-n";
    case Command::sweep_m: return "sweep-m";
    case Command::oracle_compare: return "oracle-compare";
    }
    return "?";
}

std::optional<Command> parse_command(std::string_view name)
{
    for (auto c : {Command::check, Command::solve, Command::bench_sine, Command::sweep_n,
                   Command::sweep_m, Command::oracle_compare})
        if (name == to_string(c))
            return c;
    return std::nullopt;
}

namespace {

std::string_view trim(std::string_view s)
{
    auto const first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos)
        return {};
    auto const last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void fail(int line, std::string_view key, std::string const& message)
{
    std::ostringstream os;
    if (line > 0)
        os << "line " << line << ": ";
    os << key << ": " << message;
    throw ConfigError(os.str(), line);
}

double to_real(std::string_view key, std::string_view text, int line)
{
    double v = 0;
    auto const [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
        fail(line, key, "expected a real number, got '" + std::string(text) + "'");
    return v;
}

template<class Int>
Int to_integer(std::string_view key, std::string_view text, int line)
{
    Int v = 0;
    auto const [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
        fail(line, key, "expected an integer, got '" + std::string(text) + "'");
    return v;
}

bool to_bool(std::string_view key, std::string_view text, int line)
{
    if (text == "true" || text == "1" || text == "yes" || text == "on")
        return true;
    if (text == "false" || text == "0" || text == "no" || text == "off")
        return false;
    fail(line, key, "expected true or false, got '" + std::string(text) + "'");
}

std::string format_real(double v)
{
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

struct Field
{
    std::string name;
    std::string help;
    std::function<void(ExperimentConfig&, std::string_view, int)> set;
    std::function<std::optional<std::string>(ExperimentConfig const&)> get;
};

template<class T>
using Member = T ExperimentConfig::*;

Field real_field(std::string name, Member<double> m, std::string help,
                 std::function<bool(double)> ok, std::string constraint)
{
    auto const key = name;
    return {std::move(name), std::move(help),
            [=](ExperimentConfig& c, std::string_view v, int line) {
                double const x = to_real(key, v, line);
                if (!ok(x))
                    fail(line, key, "must satisfy " + constraint + ", got " + std::string(v));
                c.*m = x;
            },
            [=](ExperimentConfig const& c) { return std::optional(format_real(c.*m)); }};
}

Field optional_real_field(std::string name, Member<std::optional<double>> m, std::string help,
                          std::function<bool(double)> ok, std::string constraint)
{
    auto const key = name;
    return {std::move(name), std::move(help),
            [=](ExperimentConfig& c, std::string_view v, int line) {
                double const x = to_real(key, v, line);
                if (!ok(x))
                    fail(line, key, "must satisfy " + constraint + ", got " + std::string(v));
                c.*m = x;
            },
            [=](ExperimentConfig const& c) {
                return (c.*m) ? std::optional(format_real(*(c.*m))) : std::nullopt;
            }};
}

template<class Int>
Field integer_field(std::string name, Member<Int> m, std::string help, Int min_value)
{
    auto const key = name;
    return {std::move(name), std::move(help),
            [=](ExperimentConfig& c, std::string_view v, int line) {
                // Parse as signed so that "-1" reports the constraint, not a syntax error.
                auto const x = to_integer<long long>(key, v, line);
                if (x < static_cast<long long>(min_value))
                    fail(line, key,
                         "must satisfy " + key + " >= " + std::to_string(min_value) + ", got " +
                             std::string(v));
                c.*m = static_cast<Int>(x);
            },
            [=](ExperimentConfig const& c) { return std::optional(std::to_string(c.*m)); }};
}

Field bool_field(std::string name, Member<bool> m, std::string help)
{
    auto const key = name;
    return {std::move(name), std::move(help),
            [=](ExperimentConfig& c, std::string_view v, int line) { c.*m = to_bool(key, v, line); },
            [=](ExperimentConfig const& c) {
                return std::optional(std::string(c.*m ? "true" : "false"));
            }};
}

Field bound_field(std::string name, bool signed_value)
{
    auto const key = name;
    return {std::move(name), "coefficient bound " + key + " (overrides the catalog value)",
            [=](ExperimentConfig& c, std::string_view v, int line) {
                double const x = to_real(key, v, line);
                if (!std::isfinite(x) || (!signed_value && x < 0))
                    fail(line, key,
                         signed_value ? "must be finite" : "must satisfy " + key + " >= 0");
                c.bounds[key] = x;
            },
            [=](ExperimentConfig const& c) -> std::optional<std::string> {
                auto it = c.bounds.find(key);
                if (it == c.bounds.end())
                    return std::nullopt;
                return format_real(it->second);
            }};
}

bool positive(double x) { return x > 0 && std::isfinite(x); }
bool non_negative(double x) { return x >= 0 && std::isfinite(x); }
bool finite(double x) { return std::isfinite(x); }

std::vector<Field> const& fields()
{
    static std::vector<Field> const table = [] {
        std::vector<Field> f;
        f.push_back({"command", "check | solve | bench-sine | sweep-n | sweep-m | oracle-compare",
                     [](ExperimentConfig& c, std::string_view v, int line) {
                         auto cmd = parse_command(v);
                         if (!cmd)
                             fail(line, "command", "unknown command '" + std::string(v) + "'");
                         c.command = cmd;
                     },
                     [](ExperimentConfig const& c) -> std::optional<std::string> {
                         if (!c.command)
                             return std::nullopt;
                         return std::string(to_string(*c.command));
                     }});
        f.push_back({"problem", "catalog problem (default sine)",
                     [](ExperimentConfig& c, std::string_view v, int line) {
                         auto const& names = catalog_names();
                         if (std::find(names.begin(), names.end(), v) == names.end())
                         {
                             std::string list;
                             for (auto const& n : names)
                                 list += (list.empty() ? "" : ", ") + n;
                             fail(line, "problem",
                                  "unknown problem '" + std::string(v) + "' (known: " + list + ")");
                         }
                         c.problem = std::string(v);
                     },
                     [](ExperimentConfig const& c) { return std::optional(c.problem); }});
        f.push_back(integer_field<int>("D", &ExperimentConfig::D, "dimension (default 1)", 1));
        f.push_back(real_field("sigma", &ExperimentConfig::sigma, "volatility parameter (default 0.1)",
                               finite, "a finite value"));
        f.push_back(real_field("r", &ExperimentConfig::r, "rate parameter (default 0)", finite,
                               "a finite value"));
        f.push_back(optional_real_field("x0", &ExperimentConfig::x0,
                                        "initial state per component (default pi/2 for sine, 0 otherwise)",
                                        finite, "a finite value"));
        f.push_back(real_field("T", &ExperimentConfig::T, "horizon (default 1)", positive, "T > 0"));
        f.push_back(integer_field<int>("n", &ExperimentConfig::n, "time steps (default 50)", 1));
        f.push_back(integer_field<std::size_t>("paths", &ExperimentConfig::paths,
                                               "Monte Carlo paths (default 50000)", 1));
        f.push_back({"seed", "random seed (default 1)",
                     [](ExperimentConfig& c, std::string_view v, int line) {
                         c.seed = to_integer<std::uint64_t>("seed", v, line);
                     },
                     [](ExperimentConfig const& c) { return std::optional(std::to_string(c.seed)); }});
        f.push_back(real_field("tol", &ExperimentConfig::tol, "stopping tolerance on Y0 (default 1e-4)",
                               non_negative, "tol >= 0"));
        f.push_back(integer_field<int>("m_max", &ExperimentConfig::m_max,
                                       "iteration cap (default 50)", 1));
        f.push_back(real_field("ridge", &ExperimentConfig::ridge, "ridge penalty (default 0)",
                               non_negative, "ridge >= 0"));
        f.push_back(real_field("R", &ExperimentConfig::R, "basis truncation (default 10)", positive,
                               "R > 0"));
        f.push_back(bool_field("include_terminal", &ExperimentConfig::include_terminal,
                               "add g to the basis (default false)"));
        f.push_back(bool_field("resample_per_iteration", &ExperimentConfig::resample_per_iteration,
                               "fresh increments every iteration (default false)"));
        f.push_back(bool_field("stop_on_function_change", &ExperimentConfig::stop_on_function_change,
                               "also require sup |u^m - u^{m-1}| < tol (default false)"));
        f.push_back(integer_field<int>("workers", &ExperimentConfig::workers,
                                       "worker threads, 0 = hardware (default 0)", 0));
        f.push_back(integer_field<std::size_t>("memory_budget_mb", &ExperimentConfig::memory_budget_mb,
                                               "increment storage budget (default 2048)", 1));
        f.push_back(integer_field<int>("seeds", &ExperimentConfig::seeds,
                                       "seeds per study point, consecutive from seed (default 1)", 1));
        f.push_back({"n_list", "comma-separated step counts for sweep-n (default 10,20,40,80)",
                     [](ExperimentConfig& c, std::string_view v, int line) {
                         std::vector<int> list;
                         while (!v.empty())
                         {
                             auto const comma = v.find(',');
                             auto const item = trim(v.substr(0, comma));
                             auto const x = to_integer<long long>("n_list", item, line);
                             if (x < 1)
                                 fail(line, "n_list", "entries must satisfy n >= 1");
                             list.push_back(static_cast<int>(x));
                             v = comma == std::string_view::npos ? std::string_view{}
                                                                 : v.substr(comma + 1);
                         }
                         if (list.empty())
                             fail(line, "n_list", "must not be empty");
                         c.n_list = std::move(list);
                     },
                     [](ExperimentConfig const& c) {
                         std::string s;
                         for (int n : c.n_list)
                             s += (s.empty() ? "" : ",") + std::to_string(n);
                         return std::optional(s);
                     }});
        f.push_back(optional_real_field("oracle_x_lo", &ExperimentConfig::oracle_x_lo,
                                        "oracle domain lower end (default x0 - 2)", finite,
                                        "a finite value"));
        f.push_back(optional_real_field("oracle_x_hi", &ExperimentConfig::oracle_x_hi,
                                        "oracle domain upper end (default x0 + 2)", finite,
                                        "a finite value"));
        f.push_back(integer_field<int>("oracle_nodes", &ExperimentConfig::oracle_nodes,
                                       "oracle grid nodes (default 801)", 2));
        f.push_back(integer_field<int>("quad_order", &ExperimentConfig::quad_order,
                                       "Gauss-Hermite order (default 32)", 8));
        f.push_back(real_field("inner_tol", &ExperimentConfig::inner_tol,
                               "oracle fixed-point tolerance (default 1e-12)", positive,
                               "inner_tol > 0"));
        f.push_back(integer_field<int>("inner_max", &ExperimentConfig::inner_max,
                                       "oracle fixed-point cap (default 500)", 1));
        f.push_back(real_field("slack", &ExperimentConfig::slack,
                               "margin when locating L1 (default 0.01)", non_negative,
                               "slack >= 0"));
        f.push_back(optional_real_field("lambda1", &ExperimentConfig::lambda1,
                                        "fixed lambda1 for the discrete contraction constant",
                                        positive, "lambda1 > 0"));
        for (auto const* name : {"K", "b_y", "sigma_x", "sigma_y", "f_x", "f_z", "g_x", "b_0",
                                 "sigma_0", "f_0", "g_0"})
            f.push_back(bound_field(name, false));
        for (auto const* name : {"k_b", "k_f"})
            f.push_back(bound_field(name, true));
        f.push_back({"out", "output directory (default .)",
                     [](ExperimentConfig& c, std::string_view v, int line) {
                         if (v.empty())
                             fail(line, "out", "must not be empty");
                         c.out = std::string(v);
                     },
                     [](ExperimentConfig const& c) { return std::optional(c.out); }});
        return f;
    }();
    return table;
}

std::size_t edit_distance(std::string_view a, std::string_view b)
{
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j)
        row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i)
    {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
        {
            std::size_t const up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diag = up;
        }
    }
    return row[b.size()];
}

}  // namespace

std::vector<std::string> const& config_keys()
{
    static std::vector<std::string> const keys = [] {
        std::vector<std::string> k;
        for (auto const& f : fields())
            k.push_back(f.name);
        return k;
    }();
    return keys;
}

std::optional<std::string> suggest_key(std::string_view unknown)
{
    std::optional<std::string> best;
    std::size_t best_distance = std::max<std::size_t>(2, unknown.size() / 2) + 1;
    for (auto const& f : fields())
    {
        auto const d = edit_distance(unknown, f.name);
        if (d < best_distance)
        {
            best_distance = d;
            best = f.name;
        }
    }
    return best;
}

void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value, int line)
{
    key = trim(key);
    value = trim(value);
    for (auto const& f : fields())
        if (f.name == key)
        {
            f.set(config, value, line);
            return;
        }
    std::string message = "unknown key";
    if (auto s = suggest_key(key))
        message += " (did you mean '" + *s + "'?)";
    fail(line, key, message);
}

ExperimentConfig parse_config(std::string_view text)
{
    ExperimentConfig config;
    int line_no = 0;
    while (!text.empty())
    {
        ++line_no;
        auto const eol = text.find('\n');
        auto line = text.substr(0, eol);
        text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
        if (auto const hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        auto const eq = line.find('=');
        if (eq == std::string_view::npos)
        {
            std::ostringstream os;
            os << "line " << line_no << ": expected 'key = value', got '" << line << "'";
            throw ConfigError(os.str(), line_no);
        }
        apply_setting(config, line.substr(0, eq), line.substr(eq + 1), line_no);
    }
    return config;
}

ExperimentConfig load_config(std::string const& path)
{
    std::ifstream is(path);
    if (!is)
        throw InvalidArgument("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(ExperimentConfig const& config)
{
    std::string out;
    for (auto const& f : fields())
        if (auto v = f.get(config))
            out += f.name + " = " + *v + "\n";
    return out;
}

std::string config_reference()
{
    std::size_t width = 0;
    for (auto const& f : fields())
        width = std::max(width, f.name.size());
    std::string out;
    for (auto const& f : fields())
        out += "  " + f.name + std::string(width + 2 - f.name.size(), ' ') + f.help + "\n";
    return out;
}

//---------------------------------------------------------------------------//
// Derived objects
//---------------------------------------------------------------------------//
CatalogParams catalog_params(ExperimentConfig const& config)
{
    CatalogParams p;
    p.dim = config.D;
    p.sigma = config.sigma;
    p.rate = config.r;
    p.x0 = config.x0;
    p.horizon = config.T;
    return p;
}

FbsdeProblem make_problem(ExperimentConfig const& config)
{
    return make_catalog_problem(config.problem, catalog_params(config));
}

std::optional<CoefficientBounds> make_bounds(ExperimentConfig const& config)
{
    auto base = catalog_bounds(config.problem, catalog_params(config));
    if (!base && config.bounds.empty())
        return std::nullopt;
    CoefficientBounds b = base.value_or(CoefficientBounds{});
    std::map<std::string, double*> const slots{
        {"K", &b.K},         {"k_b", &b.k_b},         {"k_f", &b.k_f},     {"b_y", &b.b_y},
        {"sigma_x", &b.sigma_x}, {"sigma_y", &b.sigma_y}, {"f_x", &b.f_x}, {"f_z", &b.f_z},
        {"g_x", &b.g_x},     {"b_0", &b.b_0},         {"sigma_0", &b.sigma_0}, {"f_0", &b.f_0},
        {"g_0", &b.g_0}};
    for (auto const& [key, value] : config.bounds)
        *slots.at(key) = value;
    if (!config.bounds.count("K"))
    {
        b.K = std::max({b.K, std::abs(b.k_b), std::abs(b.k_f), b.b_y, b.sigma_x, b.sigma_y, b.f_x,
                        b.f_z, b.g_x, b.b_0, b.sigma_0, b.f_0, b.g_0});
    }
    b.validate();
    return b;
}

SolverConfig make_solver_config(ExperimentConfig const& config)
{
    SolverConfig s;
    s.paths = config.paths;
    s.seed = config.seed;
    s.truncation = config.R;
    s.include_terminal = config.include_terminal;
    s.ridge = config.ridge;
    s.tol = config.tol;
    s.max_iterations = config.m_max;
    s.resample_per_iteration = config.resample_per_iteration;
    s.stop_on_function_change = config.stop_on_function_change;
    s.workers = config.workers;
    s.memory_budget_bytes = config.memory_budget_mb << 20;
    return s;
}

}  // namespace fbsde
