#include "fbsde/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "fbsde/errors.hpp"

namespace fbsde {

void FbsdeProblem::validate() const
{
    if (dim_x < 1 || dim_w < 1)
        throw InvalidArgument("problem '" + name + "': dim_x and dim_w must be >= 1");
    if (!(horizon > 0) || !std::isfinite(horizon))
        throw InvalidArgument("problem '" + name + "': horizon must be positive and finite");
    if (static_cast<int>(x0.size()) != dim_x)
        throw InvalidArgument("problem '" + name + "': x0 has wrong length");
    if (!drift || !diffusion || !driver || !terminal)
        throw InvalidArgument("problem '" + name + "': missing coefficient function");
}

std::vector<std::string> CoefficientBounds::inconsistencies() const
{
    std::vector<std::string> bad;
    if (!(K >= 0))
        bad.emplace_back("K");
    auto check = [&](char const* name, double v, bool signed_ok) {
        if (!std::isfinite(v) || (!signed_ok && v < 0) || std::abs(v) > K)
            bad.emplace_back(name);
    };
    check("k_b", k_b, true);
    check("k_f", k_f, true);
    check("b_y", b_y, false);
    check("sigma_x", sigma_x, false);
    check("sigma_y", sigma_y, false);
    check("f_x", f_x, false);
    check("f_z", f_z, false);
    check("g_x", g_x, false);
    check("b_0", b_0, false);
    check("sigma_0", sigma_0, false);
    check("f_0", f_0, false);
    check("g_0", g_0, false);
    return bad;
}

void CoefficientBounds::validate() const
{
    auto bad = inconsistencies();
    if (bad.empty())
        return;
    std::ostringstream os;
    os << "inconsistent coefficient bounds (negative or above K):";
    for (auto const& b : bad)
        os << ' ' << b;
    throw InvalidArgument(os.str());
}

Grid::Grid(int steps, double horizon) : steps_(steps), horizon_(horizon), h_(0)
{
    if (steps < 1)
        throw InvalidArgument("grid: number of steps must be >= 1");
    if (!(horizon > 0) || !std::isfinite(horizon))
        throw InvalidArgument("grid: horizon must be positive and finite");
    h_ = horizon / steps;
}

int ValidationReport::hard_violations() const noexcept
{
    return static_cast<int>(
        std::count_if(violations.begin(), violations.end(), [](auto const& v) { return v.hard; }));
}

//---------------------------------------------------------------------------//
// Probes
//---------------------------------------------------------------------------//
namespace {

double sq_norm(std::span<double const> v)
{
    double s = 0;
    for (double e : v)
        s += e * e;
    return s;
}

double sq_dist(std::span<double const> a, std::span<double const> b)
{
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

bool all_finite(std::span<double const> v)
{
    return std::all_of(v.begin(), v.end(), [](double e) { return std::isfinite(e); });
}

class Prober
{
  public:
    Prober(ValidationReport& report, double rel_tol) : report_(report), rel_tol_(rel_tol) {}

    void le(char const* what, double lhs, double rhs)
    {
        if (!std::isfinite(lhs))
        {
            report_.violations.push_back({what, lhs, rhs, true});
            return;
        }
        if (lhs > rhs + rel_tol_ * (1.0 + std::abs(rhs)))
            report_.violations.push_back({what, lhs, rhs, false});
    }

    void finite(char const* what, std::span<double const> v)
    {
        if (!all_finite(v))
            report_.violations.push_back({what, NAN, NAN, true});
    }

  private:
    ValidationReport& report_;
    double rel_tol_;
};

}  // namespace

ValidationReport validate_problem(FbsdeProblem const& problem,
                                  CoefficientBounds const& bounds,
                                  ProbeOptions const& options)
{
    problem.validate();
    ValidationReport report;
    Prober probe(report, options.rel_tol);

    std::size_t const dx = problem.dim_x;
    std::size_t const dw = problem.dim_w;
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> time(0.0, problem.horizon);

    std::vector<double> x1(dx), x2(dx), z1(dw), z2(dw);
    std::vector<double> b1(dx), b2(dx), s1(dx * dw), s2(dx * dw);
    auto const& scales = options.scales.empty() ? std::vector<double>{1.0} : options.scales;

    for (int k = 0; k < options.probe_pairs; ++k)
    {
        double const s = scales[k % scales.size()];
        double const t = time(rng);
        for (auto& v : x1) v = s * unit(rng);
        for (auto& v : x2) v = s * unit(rng);
        for (auto& v : z1) v = s * unit(rng);
        for (auto& v : z2) v = s * unit(rng);
        double const y1 = s * unit(rng);
        double const y2 = s * unit(rng);
        double const dxx = sq_dist(x1, x2);
        double const dyy = (y1 - y2) * (y1 - y2);
        double const dzz = sq_dist(z1, z2);

        // drift: monotonicity in x, Lipschitz, growth
        problem.drift(t, x1, y1, b1);
        problem.drift(t, x2, y1, b2);
        probe.finite("drift finite", b1);
        probe.finite("drift finite", b2);
        double inner = 0;
        for (std::size_t d = 0; d < dx; ++d)
            inner += (b1[d] - b2[d]) * (x1[d] - x2[d]);
        probe.le("drift monotonicity (k_b)", inner, bounds.k_b * dxx);
        problem.drift(t, x2, y2, b2);
        probe.le("drift Lipschitz", sq_dist(b1, b2), bounds.K * dxx + bounds.b_y * dyy);
        probe.le("drift growth", sq_norm(b1),
                 bounds.b_0 + bounds.K * sq_norm(x1) + bounds.b_y * y1 * y1);

        problem.diffusion(t, x1, y1, s1);
        problem.diffusion(t, x2, y2, s2);
        probe.finite("diffusion finite", s1);
        probe.finite("diffusion finite", s2);
        probe.le("diffusion Lipschitz", sq_dist(s1, s2),
                 bounds.sigma_x * dxx + bounds.sigma_y * dyy);
        probe.le("diffusion growth", sq_norm(s1),
                 bounds.sigma_0 + bounds.sigma_x * sq_norm(x1) + bounds.sigma_y * y1 * y1);

        double const fa = problem.driver(t, x1, y1, z1);
        double const fb = problem.driver(t, x1, y2, z1);
        probe.le("driver monotonicity (k_f)", (fa - fb) * (y1 - y2), bounds.k_f * dyy);
        double const fc = problem.driver(t, x2, y2, z2);
        probe.le("driver Lipschitz", (fa - fc) * (fa - fc),
                 bounds.f_x * dxx + bounds.K * dyy + bounds.f_z * dzz);
        probe.le("driver growth", fa * fa,
                 bounds.f_0 + bounds.f_x * sq_norm(x1) + bounds.K * y1 * y1 +
                     bounds.f_z * sq_norm(z1));

        double const ga = problem.terminal(x1);
        double const gb = problem.terminal(x2);
        probe.le("terminal Lipschitz", (ga - gb) * (ga - gb), bounds.g_x * dxx);
        probe.le("terminal growth", ga * ga, bounds.g_0 + bounds.g_x * sq_norm(x1));
        ++report.probes;
    }
    return report;
}

//---------------------------------------------------------------------------//
// Catalog
//---------------------------------------------------------------------------//
namespace {

double sum_sin(std::span<double const> x)
{
    double s = 0;
    for (double v : x)
        s += std::sin(v);
    return s;
}

void zero_drift(double, std::span<double const>, double, std::span<double> out)
{
    std::fill(out.begin(), out.end(), 0.0);
}

// out = scale * I (row-major, square)
void fill_scaled_identity(std::span<double> out, int dim, double scale)
{
    std::fill(out.begin(), out.end(), 0.0);
    for (int d = 0; d < dim; ++d)
        out[d * dim + d] = scale;
}

std::vector<double> initial_state(CatalogParams const& p, double fallback)
{
    return std::vector<double>(p.dim, p.x0.value_or(fallback));
}

}  // namespace

FbsdeProblem sine_example(int dim, double sigma, double rate, double x0_component, double horizon)
{
    if (dim < 1)
        throw InvalidArgument("sine_example: D must be >= 1");
    FbsdeProblem p;
    p.name = "sine";
    p.dim_x = dim;
    p.dim_w = dim;
    p.horizon = horizon;
    p.x0.assign(dim, x0_component);
    p.drift = zero_drift;
    p.diffusion = [dim, sigma](double, std::span<double const>, double y, std::span<double> out) {
        fill_scaled_identity(out, dim, sigma * y);
    };
    p.driver = [sigma, rate, horizon](double t, std::span<double const> x, double y,
                                      std::span<double const>) {
        double const s = sum_sin(x);
        return -rate * y + 0.5 * std::exp(-3.0 * rate * (horizon - t)) * sigma * sigma * s * s * s;
    };
    p.terminal = [](std::span<double const> x) { return sum_sin(x); };
    p.validate();
    return p;
}

/*
 * With S = sum_d sin(x_d): |S| <= D and |S(x1) - S(x2)| <= sqrt(D)|dx|, so
 * S^3 has Lipschitz constant 3 D^{5/2}. The driver's x-part carries the
 * factor c = sigma^2/2 * exp(-3r(T-t)) <= sigma^2/2 * max(1, exp(-3rT)).
 * When r != 0 the y- and x-parts are combined with (a+b)^2 <= 2a^2 + 2b^2.
 */
CoefficientBounds sine_example_bounds(int dim, double sigma, double rate, double horizon)
{
    if (dim < 1)
        throw InvalidArgument("sine_example_bounds: D must be >= 1");
    double const D = dim;
    double const c_max = 0.5 * sigma * sigma * std::max(1.0, std::exp(-3.0 * rate * horizon));
    double const lip_x = c_max * 3.0 * std::pow(D, 2.5);
    double const level = c_max * D * D * D;

    CoefficientBounds b;
    b.k_b = 0;
    b.b_y = 0;
    b.b_0 = 0;
    b.sigma_x = 0;
    b.sigma_y = sigma * sigma * D;
    b.sigma_0 = 0;
    b.k_f = -rate;
    b.f_z = 0;
    double y_part = 0;
    if (rate == 0)
    {
        b.f_x = lip_x * lip_x;
        b.f_0 = level * level;
    }
    else
    {
        b.f_x = 2 * lip_x * lip_x;
        b.f_0 = 2 * level * level;
        y_part = 2 * rate * rate;
    }
    b.g_x = D;
    b.g_0 = D * D;
    b.K = std::max({b.sigma_y, std::abs(b.k_f), b.f_x, b.f_0, b.g_x, b.g_0, y_part});
    return b;
}

double sine_exact_value(double rate, double horizon, double t, std::span<double const> x)
{
    return std::exp(-rate * (horizon - t)) * sum_sin(x);
}

std::vector<std::string> const& catalog_names()
{
    static std::vector<std::string> const names{
        "sine", "constant_drift", "brownian_terminal", "quadratic_terminal", "counterexample"};
    return names;
}

FbsdeProblem make_catalog_problem(std::string const& name, CatalogParams const& params)
{
    if (params.dim < 1)
        throw InvalidArgument("catalog: D must be >= 1");
    int const dim = params.dim;
    FbsdeProblem p;
    p.name = name;
    p.dim_x = dim;
    p.dim_w = dim;
    p.horizon = params.horizon;
    if (!(params.horizon > 0))
        throw InvalidArgument("catalog: T must be positive");

    if (name == "sine")
    {
        return sine_example(dim, params.sigma, params.rate,
                            params.x0.value_or(std::numbers::pi / 2), params.horizon);
    }
    if (name == "constant_drift")
    {
        p.x0 = initial_state(params, 0.0);
        p.drift = [](double, std::span<double const>, double, std::span<double> out) {
            std::fill(out.begin(), out.end(), 1.0);
        };
        p.diffusion = [](double, std::span<double const>, double, std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
        };
        p.driver = [](double, std::span<double const>, double, std::span<double const>) {
            return 0.0;
        };
        p.terminal = [](std::span<double const> x) {
            double s = 0;
            for (double v : x)
                s += v;
            return s;
        };
    }
    else if (name == "brownian_terminal" || name == "quadratic_terminal")
    {
        p.x0 = initial_state(params, 0.0);
        p.drift = zero_drift;
        double const sigma = params.sigma;
        p.diffusion = [dim, sigma](double, std::span<double const>, double, std::span<double> out) {
            fill_scaled_identity(out, dim, sigma);
        };
        p.driver = [](double, std::span<double const>, double, std::span<double const>) {
            return 0.0;
        };
        if (name == "brownian_terminal")
        {
            p.terminal = [](std::span<double const> x) {
                double s = 0;
                for (double v : x)
                    s += v;
                return s;
            };
        }
        else
        {
            p.terminal = [](std::span<double const> x) { return sq_norm(x); };
        }
    }
    else if (name == "counterexample")
    {
        // Linear system without a solution on [0, 3pi/4]; one-dimensional by construction.
        p.dim_x = p.dim_w = 1;
        p.horizon = 0.75 * std::numbers::pi;
        p.x0 = {params.x0.value_or(1.0)};
        p.drift = [](double, std::span<double const>, double y, std::span<double> out) {
            out[0] = y;
        };
        p.diffusion = [](double, std::span<double const>, double, std::span<double> out) {
            out[0] = 0.0;
        };
        p.driver = [](double, std::span<double const> x, double, std::span<double const>) {
            return x[0];
        };
        p.terminal = [](std::span<double const> x) { return -x[0]; };
    }
    else
    {
        std::string known;
        for (auto const& n : catalog_names())
            known += (known.empty() ? "" : ", ") + n;
        throw InvalidArgument("unknown catalog problem '" + name + "' (known: " + known + ")");
    }
    p.validate();
    return p;
}

std::optional<CoefficientBounds> catalog_bounds(std::string const& name,
                                                CatalogParams const& params)
{
    double const D = params.dim;
    CoefficientBounds b;
    if (name == "sine")
        return sine_example_bounds(params.dim, params.sigma, params.rate, params.horizon);
    if (name == "constant_drift")
    {
        // |b|^2 = D and (sum_d x_d)^2 <= D |x|^2.
        b.b_0 = D;
        b.g_x = D;
        b.K = D;
        return b;
    }
    if (name == "brownian_terminal")
    {
        double const s2 = params.sigma * params.sigma * D;
        b.sigma_0 = s2;
        b.g_x = D;
        b.K = std::max(s2, D);
        return b;
    }
    if (name == "counterexample")
    {
        b.b_y = 1;
        b.f_x = 1;
        b.g_x = 1;
        b.K = 1;
        return b;
    }
    if (name == "quadratic_terminal")
        return std::nullopt;
    // Throws the catalog error for unknown names.
    (void)make_catalog_problem(name, params);
    return std::nullopt;
}

}  // namespace fbsde
