#pragma once

#include <optional>

#include "fbsde/model.hpp"

namespace fbsde {

/*!
 * \file conditions.hpp
 * Closed-form constants controlling the Lipschitz bound, the linear growth
 * and the contraction of the Markovian iteration, in continuous time and at
 * a finite step size.
 *
 * Every constant saturates to +infinity instead of failing when the
 * exponentials overflow; the derived conditions then simply do not hold.
 * Products where one factor is exactly zero are zero even if the other
 * factor overflowed.
 */

/// (e^x - 1) / x, equal to 1 at x = 0.
double gamma0(double x);

/*!
 * sup over theta in (0,1) of theta e^{theta x} gamma0(theta y).
 *
 * Evaluated on a closed grid of 10^4 points in (0, 1] (the theta -> 1 value
 * is the endpoint limit, theta -> 0 tends to 0) followed by golden-section
 * refinement around the best grid point. The result is never below the
 * integrand at any grid point.
 */
double gamma1(double x, double y);

/// ((1 + x h)^i - 1) / x, equal to i h at x = 0.
double gamma0_discrete(int i, double x, double h);

/// max over i in 0..n of (1 + x h)^i gamma0_discrete(i, y, h).
double gamma1_discrete(int n, double x, double y, double h);

struct LambdaSchedule
{
    double lambda1 = 0;
    double lambda2 = 1;
    double lambda3 = 1;
};

/// lambda1 = 0, lambda2 = sqrt(h), lambda3 = 1 - (1+K) sqrt(h) - K h. Throws ScheduleInfeasible.
LambdaSchedule lambda_schedule(double K, double h);

/// Largest h with 1 - (1+K) sqrt(h) - K h >= 0.
double max_feasible_step(double K);

struct AConstants
{
    double a1, a2, a3, a4, a5;
};

AConstants a_constants(CoefficientBounds const& b, LambdaSchedule const& lambda, double h);

struct BConstants
{
    double b1, b2;
};

BConstants b_constants(CoefficientBounds const& b, double h);

struct LipschitzConstants
{
    double l0;
    double l1;
};

LipschitzConstants l0_l1(CoefficientBounds const& b, double horizon);

struct GrowthConstants
{
    double c0;
    double c1;
    double l2;
};

GrowthConstants c0_c1_l2(CoefficientBounds const& b, double horizon, double G);

/// Contraction constant at a fixed lambda1 > 0.
double c2_at(CoefficientBounds const& b, double horizon, double lambda1, double L, double G);

/*!
 * inf over lambda1 > 0 of c2_at.
 *
 * 200 log-spaced lambda1 in [1e-4, 1e4], then golden-section refinement in
 * log(lambda1) around the best grid point. The result never exceeds the
 * value at any grid point.
 */
double c2(CoefficientBounds const& b, double horizon, double L, double G);

/// Step-size versions of c0, c1, L2 with lambda2, lambda3 from lambda_schedule(K, T/n).
GrowthConstants c0_c1_l2_discrete(CoefficientBounds const& b, int n, double horizon, double G);

/// Step-size version of c2_at with lambda2, lambda3 from lambda_schedule(K, T/n).
double c2_discrete(CoefficientBounds const& b, int n, double horizon, double lambda1, double L,
                   double G);

struct ConditionReport
{
    double l0 = 0;
    double l1 = 0;
    //! L0 < 1/e.
    bool condition_3_2_holds = false;
    double c1_at_l1 = 0;
    double l2_at_l1 = 0;
    //! c1(L1) < 1.
    bool condition_4_2_holds = false;
    double c2_at_l1 = 0;
    //! c2(L1, L1) < 1.
    bool condition_5_1_holds = false;
    //! Midpoint of (c2(L1,L1), 1); NaN when c2 >= 1.
    double predicted_rate = 0;
    double bound_l_bar = 0;
    double bound_g_bar = 0;
    double bound_h_bar = 0;

    //! Step-size proxy for "h small enough": the schedule's lambda3 is positive.
    double max_feasible_step = 0;
    std::optional<int> steps;
    std::optional<bool> schedule_feasible;

    bool all_hold() const noexcept
    {
        return condition_3_2_holds && condition_4_2_holds && condition_5_1_holds;
    }
};

struct CheckOptions
{
    //! L_bar = G_bar = (1 + slack) L1.
    double slack = 0.01;
    //! When set, schedule feasibility is reported for h = T / steps.
    std::optional<int> steps;
};

ConditionReport check_conditions(CoefficientBounds const& b, double horizon,
                                 CheckOptions const& options = {});

}  // namespace fbsde
