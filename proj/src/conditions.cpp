#include "fbsde/conditions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fbsde/errors.hpp"

namespace fbsde {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTaylorCutoff = 1e-6;
constexpr int kThetaGrid = 10000;
constexpr int kLambdaGrid = 200;
constexpr double kLambdaMin = 1e-4;
constexpr double kLambdaMax = 1e4;
constexpr int kGoldenIterations = 80;

// a * b with 0 * inf = 0; the constants are products of nonnegative factors.
double mul(double a, double b)
{
    if (a == 0 || b == 0)
        return 0;
    return a * b;
}

double pos(double x) { return x > 0 ? x : 0; }

// Golden-section search for the maximum (sign = 1) or minimum (sign = -1) of fn on [a, b].
template<class F>
std::pair<double, double> golden(F&& fn, double a, double b, double sign)
{
    double const r = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - r * (b - a);
    double d = a + r * (b - a);
    double fc = sign * fn(c);
    double fd = sign * fn(d);
    for (int it = 0; it < kGoldenIterations; ++it)
    {
        if (fc > fd)
        {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = sign * fn(c);
        }
        else
        {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = sign * fn(d);
        }
    }
    return fc > fd ? std::pair{c, sign * fc} : std::pair{d, sign * fd};
}

double gamma1_integrand(double theta, double x, double y)
{
    return mul(theta * std::exp(theta * x), gamma0(theta * y));
}

}  // namespace

//---------------------------------------------------------------------------//
double gamma0(double x)
{
    if (std::abs(x) < kTaylorCutoff)
        return 1.0 + x / 2.0 + x * x / 6.0;
    return std::expm1(x) / x;
}

double gamma1(double x, double y)
{
    double best = 0;
    int best_k = 0;
    for (int k = 1; k <= kThetaGrid; ++k)
    {
        double const v = gamma1_integrand(static_cast<double>(k) / kThetaGrid, x, y);
        if (v > best)
        {
            best = v;
            best_k = k;
        }
        if (std::isinf(best))
            return kInf;
    }
    if (best_k == 0)
        return 0;
    double const lo = static_cast<double>(best_k - 1) / kThetaGrid;
    double const hi = std::min(1.0, static_cast<double>(best_k + 1) / kThetaGrid);
    auto refined = golden([&](double t) { return gamma1_integrand(t, x, y); }, lo, hi, 1.0);
    return std::max(best, refined.second);
}

double gamma0_discrete(int i, double x, double h)
{
    if (i <= 0)
        return 0;
    double const n = i;
    if (std::abs(x) < kTaylorCutoff)
    {
        // i h + C(i,2) h^2 x + C(i,3) h^3 x^2
        return n * h + n * (n - 1) / 2 * h * h * x + n * (n - 1) * (n - 2) / 6 * h * h * h * x * x;
    }
    double const xh = x * h;
    double num;
    if (1.0 + xh > 0)
        num = std::expm1(n * std::log1p(xh));
    else
        num = std::pow(1.0 + xh, n) - 1.0;
    return num / x;
}

double gamma1_discrete(int n, double x, double y, double h)
{
    // (1 + y h) G_i + h = G_{i+1} avoids the cancellation in the closed form.
    double power = 1.0;
    double g = 0.0;
    double best = 0.0;
    for (int i = 0; i <= n; ++i)
    {
        if (i > 0)
        {
            power *= 1.0 + x * h;
            g = (1.0 + y * h) * g + h;
        }
        double const v = mul(power, g);
        if (v > best)
            best = v;
    }
    return best;
}

//---------------------------------------------------------------------------//
double max_feasible_step(double K)
{
    if (K <= 0)
        return 1.0;
    // K s^2 + (1 + K) s - 1 = 0 with s = sqrt(h)
    double const s = (-(1 + K) + std::sqrt((1 + K) * (1 + K) + 4 * K)) / (2 * K);
    return s * s;
}

LambdaSchedule lambda_schedule(double K, double h)
{
    if (!(h > 0))
        throw InvalidArgument("lambda_schedule: h must be positive");
    double const root = std::sqrt(h);
    LambdaSchedule s;
    s.lambda1 = 0;
    s.lambda2 = root;
    s.lambda3 = 1.0 - (1.0 + K) * root - K * h;
    if (!(s.lambda3 > 0))
    {
        double const hmax = max_feasible_step(K);
        std::ostringstream os;
        os.precision(17);
        os << "lambda schedule infeasible for h = " << h << " (K = " << K
           << "); lambda3 > 0 requires h < " << hmax;
        throw ScheduleInfeasible(os.str(), hmax);
    }
    return s;
}

AConstants a_constants(CoefficientBounds const& b, LambdaSchedule const& lambda, double h)
{
    if (!(lambda.lambda2 > 0) || !(lambda.lambda3 > 0))
        throw InvalidArgument("a_constants: lambda2 and lambda3 must be positive");
    double const Kh = b.K * h;
    double const Kh2 = (1.0 + 1.0 / lambda.lambda2) * Kh;
    AConstants a;
    a.a1 = 2 * b.k_b + b.sigma_x + 1 + Kh;
    a.a2 = b.b_y + b.sigma_y + Kh;
    a.a3 = lambda.lambda2 + lambda.lambda3 + Kh2;
    a.a4 = 2 * b.k_f + 1 + b.f_z / lambda.lambda3 + Kh2;
    a.a5 = b.f_x + Kh2;
    return a;
}

BConstants b_constants(CoefficientBounds const& b, double h)
{
    return {b.b_0 + b.sigma_0 + b.K * b.b_0 * h, b.f_0 + b.K * b.f_0 * h};
}

LipschitzConstants l0_l1(CoefficientBounds const& b, double horizon)
{
    if (!(horizon > 0))
        throw InvalidArgument("l0_l1: T must be positive");
    double const T = horizon;
    double const coupling = b.b_y + b.sigma_y;
    double const weight = b.g_x + b.f_x * T;
    double const growth =
        std::exp(coupling * weight * T + (2 * b.k_b + 2 * b.k_f + 2 + b.sigma_x + b.f_z) * T);
    return {mul(coupling * weight * T, growth), mul(weight, std::max(growth, 1.0))};
}

GrowthConstants c0_c1_l2(CoefficientBounds const& b, double horizon, double G)
{
    if (!(horizon > 0))
        throw InvalidArgument("c0_c1_l2: T must be positive");
    double const T = horizon;
    double const coupling = b.b_y + b.sigma_y;
    double const back = (2 * b.k_f + 1 + b.f_z) * T;
    double const fwd = (2 * b.k_b + 1 + b.sigma_x) * T + coupling * G * T;
    double const bracket =
        mul(b.g_x, gamma1(back, fwd)) + mul(b.f_x * T, mul(gamma0(back), gamma0(fwd)));
    GrowthConstants g;
    g.c0 = mul(T, bracket);
    g.c1 = mul(coupling, g.c0);
    g.l2 = mul(std::exp(pos(2 * b.k_f + 1 + b.f_z) * T), b.g_0) +
           mul(b.f_0 * T, gamma0(back)) + mul(b.b_0 + b.sigma_0, g.c0);
    return g;
}

double c2_at(CoefficientBounds const& b, double horizon, double lambda1, double L, double G)
{
    if (!(lambda1 > 0))
        throw InvalidArgument("c2_at: lambda1 must be positive");
    double const T = horizon;
    double const coupling = b.b_y + b.sigma_y;
    double const base = 2 * b.k_b + 1 + b.sigma_x;
    double const back = (2 * b.k_f + 1 + b.f_z) * T;
    double const fwd = (base + (1 + lambda1) * coupling * L) * T;
    double const prefactor = std::max(std::exp((base + coupling * G) * T), 1.0);
    double const bracket =
        mul(b.g_x, gamma1(back, fwd)) + mul(b.f_x * T, mul(gamma0(back), gamma0(fwd)));
    return mul(mul(prefactor, (1 + 1 / lambda1) * coupling * T), bracket);
}

double c2(CoefficientBounds const& b, double horizon, double L, double G)
{
    if (!(horizon > 0))
        throw InvalidArgument("c2: T must be positive");
    if (b.b_y + b.sigma_y == 0 || (b.g_x == 0 && b.f_x == 0))
        return 0;

    double const log_lo = std::log(kLambdaMin);
    double const log_hi = std::log(kLambdaMax);
    double const step = (log_hi - log_lo) / (kLambdaGrid - 1);
    double best = kInf;
    int best_k = -1;
    for (int k = 0; k < kLambdaGrid; ++k)
    {
        double const v = c2_at(b, horizon, std::exp(log_lo + k * step), L, G);
        if (v < best)
        {
            best = v;
            best_k = k;
        }
    }
    if (best_k < 0)
        return kInf;
    double const lo = log_lo + std::max(best_k - 1, 0) * step;
    double const hi = log_lo + std::min(best_k + 1, kLambdaGrid - 1) * step;
    auto refined = golden([&](double s) { return c2_at(b, horizon, std::exp(s), L, G); }, lo, hi,
                          -1.0);
    return std::min(best, refined.second);
}

double c2_discrete(CoefficientBounds const& b, int n, double horizon, double lambda1, double L,
                   double G)
{
    if (n < 1)
        throw InvalidArgument("c2_discrete: n must be >= 1");
    if (!(lambda1 > 0))
        throw InvalidArgument("c2_discrete: lambda1 must be positive");
    double const h = horizon / n;
    auto const a = a_constants(b, lambda_schedule(b.K, h), h);
    double const fwd = a.a1 + (1 + lambda1) * a.a2 * L;
    double const prefactor = std::max(std::exp((a.a1 + a.a2 * G) * horizon), 1.0);
    double const bracket = mul(b.g_x, gamma1_discrete(n, a.a4, fwd, h)) +
                           mul(a.a5, mul(gamma0_discrete(n, a.a4, h), gamma0_discrete(n, fwd, h)));
    return mul(mul(prefactor, (1 + 1 / lambda1) * a.a2), bracket);
}

GrowthConstants c0_c1_l2_discrete(CoefficientBounds const& b, int n, double horizon, double G)
{
    if (n < 1)
        throw InvalidArgument("c0_c1_l2_discrete: n must be >= 1");
    double const h = horizon / n;
    auto const a = a_constants(b, lambda_schedule(b.K, h), h);
    auto const bc = b_constants(b, h);
    double const fwd = a.a1 + a.a2 * G;
    GrowthConstants g;
    g.c0 = mul(b.g_x, gamma1_discrete(n, a.a4, fwd, h)) +
           mul(a.a5, mul(gamma0_discrete(n, a.a4, h), gamma0_discrete(n, fwd, h)));
    g.c1 = mul(a.a2, g.c0);
    g.l2 = mul(bc.b1, g.c0) + mul(std::max(std::exp(a.a4 * horizon), 1.0), b.g_0) +
           mul(bc.b2, gamma0_discrete(n, a.a4, h));
    return g;
}

//---------------------------------------------------------------------------//
ConditionReport check_conditions(CoefficientBounds const& b, double horizon,
                                 CheckOptions const& options)
{
    if (!(horizon > 0))
        throw InvalidArgument("check_conditions: T must be positive");
    ConditionReport r;
    auto const lip = l0_l1(b, horizon);
    r.l0 = lip.l0;
    r.l1 = lip.l1;
    r.condition_3_2_holds = r.l0 < std::exp(-1.0);

    auto const growth = c0_c1_l2(b, horizon, r.l1);
    r.c1_at_l1 = growth.c1;
    r.l2_at_l1 = growth.l2;
    r.condition_4_2_holds = r.c1_at_l1 < 1.0;

    r.c2_at_l1 = std::isfinite(r.l1) ? c2(b, horizon, r.l1, r.l1) : kInf;
    r.condition_5_1_holds = r.c2_at_l1 < 1.0;
    r.predicted_rate = r.condition_5_1_holds ? 0.5 * (r.c2_at_l1 + 1.0)
                                             : std::numeric_limits<double>::quiet_NaN();

    r.bound_l_bar = (1.0 + options.slack) * r.l1;
    r.bound_g_bar = r.bound_l_bar;
    r.bound_h_bar = r.condition_4_2_holds ? r.l2_at_l1 / (1.0 - r.c1_at_l1) : kInf;

    r.max_feasible_step = max_feasible_step(b.K);
    if (options.steps)
    {
        r.steps = options.steps;
        r.schedule_feasible = horizon / *options.steps < r.max_feasible_step;
    }
    return r;
}

}  // namespace fbsde
