#pragma once

#include <Eigen/Dense>
#include <limits>
#include <json.hpp>
#include <optional>
#include <span>
#include <vector>

#include "fbsde/model.hpp"

namespace fbsde {

class PathEnsemble;

/*!
 * Quadratic basis with truncated products:
 *
 *   1,  x_d (d = 1..D),  clamp(x_d x_q, -R, R) (1 <= d <= q <= D),  [g(x)]
 *
 * in that order, products enumerated row by row (d outer, q inner). The
 * optional terminal function is appended last.
 */
class BasisSet
{
  public:
    BasisSet(int dim, double truncation);
    BasisSet(int dim, double truncation, TerminalFn terminal, double terminal_lipschitz);

    int dim() const noexcept { return dim_; }
    double truncation() const noexcept { return truncation_; }
    bool include_terminal() const noexcept { return static_cast<bool>(terminal_); }
    //! 1 + D + D(D+1)/2, plus one with the terminal function.
    int count() const noexcept { return count_; }

    void evaluate(std::span<double const> x, std::span<double> out) const;
    //! sum_k coefficients[k] * eta_k(x), without allocating.
    double combine(std::span<double const> coefficients, std::span<double const> x) const;

    /*!
     * Largest Lipschitz constant (Euclidean norm) of any basis function on
     * the box |x_d| <= radius.
     *
     * The clamped squares are globally Lipschitz with constant 2 sqrt(R).
     * The clamped cross products x_d x_q (d != q) are not: along
     * x_d x_q = R their gradient grows like |x|. Hence for D >= 2 the
     * global bound (radius = infinity) is infinite.
     */
    double lipschitz_bound(double radius = std::numeric_limits<double>::infinity()) const;

  private:
    double clamp(double v) const noexcept
    {
        return v < -truncation_ ? -truncation_ : (v > truncation_ ? truncation_ : v);
    }

    int dim_;
    double truncation_;
    int count_;
    TerminalFn terminal_;
    double terminal_lipschitz_ = 0;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Rows are basis values at each point (rows of `points`). Throws BlowUp on non-finite entries.
Eigen::MatrixXd design_matrix(BasisSet const& basis, RowMatrix const& points, int workers = 1);

/// Design matrix at the states of one time step of an ensemble.
Eigen::MatrixXd design_matrix(BasisSet const& basis, PathEnsemble const& paths, int step,
                              int workers = 1);

struct RegressionFit
{
    std::vector<double> coefficients;
    double residual_rms = 0;
    bool rank_deficient = false;
    int rank = 0;
};

/*!
 * Least-squares solver for one design matrix A (rows = samples).
 *
 * Minimizes (1/rows) |A c - b|^2 + ridge |c|^2. A blocked Householder QR
 * reduces A to its triangular factor R; the small system (R, optionally
 * stacked on sqrt(rows * ridge) I) is then solved by a column-pivoted
 * complete orthogonal decomposition, which gives the minimum-norm solution
 * when A is rank deficient. Columns are declared dependent when their pivot
 * is below eps * max(rows, cols) * (largest pivot).
 *
 * One factorization serves any number of right-hand sides.
 */
class LeastSquares
{
  public:
    LeastSquares(Eigen::MatrixXd design, double ridge = 0.0);

    RegressionFit solve(Eigen::Ref<Eigen::VectorXd const> const& targets) const;
    std::vector<RegressionFit> solve_columns(Eigen::Ref<Eigen::MatrixXd const> const& targets) const;

    //! A c for a fit of this design.
    Eigen::VectorXd fitted(RegressionFit const& fit) const;

    Eigen::MatrixXd const& design() const noexcept { return design_; }
    int rank() const noexcept { return rank_; }
    bool rank_deficient() const noexcept { return rank_ < design_.cols(); }
    double ridge() const noexcept { return ridge_; }

  private:
    Eigen::MatrixXd design_;
    double ridge_;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr_;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> small_;
    int rank_ = 0;
};

/// One-shot fit. Throws InvalidArgument on non-finite targets or negative ridge.
RegressionFit fit_least_squares(Eigen::MatrixXd const& design, Eigen::VectorXd const& targets,
                                double ridge = 0.0);

double evaluate_fit(BasisSet const& basis, RegressionFit const& fit, std::span<double const> x);

/// {step_index, coefficients, residual_rms, rank_deficient}
nlohmann::json fit_to_json(RegressionFit const& fit, int step_index);
RegressionFit fit_from_json(nlohmann::json const& j, int* step_index = nullptr);

}  // namespace fbsde
