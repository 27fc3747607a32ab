#include "fbsde/regression.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fbsde/errors.hpp"
#include "fbsde/parallel.hpp"
#include "fbsde/paths.hpp"

namespace fbsde {

//---------------------------------------------------------------------------//
// Basis
//---------------------------------------------------------------------------//
BasisSet::BasisSet(int dim, double truncation) : BasisSet(dim, truncation, TerminalFn{}, 0.0) {}

BasisSet::BasisSet(int dim, double truncation, TerminalFn terminal, double terminal_lipschitz)
    : dim_(dim), truncation_(truncation), count_(0), terminal_(std::move(terminal)),
      terminal_lipschitz_(terminal_lipschitz)
{
    if (dim < 1)
        throw InvalidArgument("basis: dimension must be >= 1");
    if (!(truncation > 0))
        throw InvalidArgument("basis: truncation R must be positive");
    count_ = 1 + dim + dim * (dim + 1) / 2 + (terminal_ ? 1 : 0);
}

void BasisSet::evaluate(std::span<double const> x, std::span<double> out) const
{
    std::size_t k = 0;
    out[k++] = 1.0;
    for (int d = 0; d < dim_; ++d)
        out[k++] = x[d];
    for (int d = 0; d < dim_; ++d)
        for (int q = d; q < dim_; ++q)
            out[k++] = clamp(x[d] * x[q]);
    if (terminal_)
        out[k++] = terminal_(x);
}

double BasisSet::combine(std::span<double const> c, std::span<double const> x) const
{
    std::size_t k = 0;
    double s = c[k++];
    for (int d = 0; d < dim_; ++d)
        s += c[k++] * x[d];
    for (int d = 0; d < dim_; ++d)
        for (int q = d; q < dim_; ++q)
            s += c[k++] * clamp(x[d] * x[q]);
    if (terminal_)
        s += c[k++] * terminal_(x);
    return s;
}

double BasisSet::lipschitz_bound(double radius) const
{
    double const R = truncation_;
    double bound = 1.0;  // coordinates
    bound = std::max(bound, 2.0 * std::min(radius, std::sqrt(R)));
    if (dim_ >= 2)
    {
        // sup |grad(x_d x_q)| = sup sqrt(x_d^2 + x_q^2) over the box where |x_d x_q| <= R
        double const cross = std::isinf(radius)
                                 ? radius
                                 : std::sqrt(radius * radius +
                                             std::min(radius * radius, R * R / (radius * radius)));
        bound = std::max(bound, cross);
    }
    if (terminal_)
        bound = std::max(bound, terminal_lipschitz_);
    return bound;
}

//---------------------------------------------------------------------------//
// Design matrices
//---------------------------------------------------------------------------//
namespace {

template<class PointFn>
Eigen::MatrixXd build_design(BasisSet const& basis, std::size_t rows, PointFn&& point, int workers)
{
    Eigen::MatrixXd A(static_cast<Eigen::Index>(rows), basis.count());
    parallel_for(rows, workers, [&](std::size_t begin, std::size_t end) {
        std::vector<double> row(basis.count());
        for (std::size_t r = begin; r < end; ++r)
        {
            basis.evaluate(point(r), row);
            for (int k = 0; k < basis.count(); ++k)
            {
                if (!std::isfinite(row[k]))
                {
                    std::ostringstream os;
                    os << "design matrix: non-finite basis value at row " << r << ", column " << k;
                    throw BlowUp(os.str(), static_cast<long>(r), k);
                }
                A(static_cast<Eigen::Index>(r), k) = row[k];
            }
        }
    });
    return A;
}

}  // namespace

Eigen::MatrixXd design_matrix(BasisSet const& basis, RowMatrix const& points, int workers)
{
    if (points.cols() != basis.dim())
        throw InvalidArgument("design_matrix: point dimension does not match basis");
    return build_design(
        basis, static_cast<std::size_t>(points.rows()),
        [&](std::size_t r) {
            return std::span<double const>(points.data() + r * points.cols(),
                                           static_cast<std::size_t>(points.cols()));
        },
        workers);
}

Eigen::MatrixXd design_matrix(BasisSet const& basis, PathEnsemble const& paths, int step,
                              int workers)
{
    if (paths.dim_x() != basis.dim())
        throw InvalidArgument("design_matrix: ensemble dimension does not match basis");
    return build_design(
        basis, paths.paths(), [&](std::size_t r) { return paths.state(r, step); }, workers);
}

//---------------------------------------------------------------------------//
// Least squares
//---------------------------------------------------------------------------//
LeastSquares::LeastSquares(Eigen::MatrixXd design, double ridge)
    : design_(std::move(design)), ridge_(ridge)
{
    if (!(ridge >= 0) || !std::isfinite(ridge))
        throw InvalidArgument("least squares: ridge must be >= 0");
    Eigen::Index const rows = design_.rows();
    Eigen::Index const cols = design_.cols();
    if (rows < 1 || cols < 1)
        throw InvalidArgument("least squares: empty design matrix");

    qr_.compute(design_);
    Eigen::Index const top = std::min(rows, cols);
    Eigen::MatrixXd small;
    if (ridge > 0)
    {
        small = Eigen::MatrixXd::Zero(top + cols, cols);
        small.topRows(top) = qr_.matrixQR().topRows(top).triangularView<Eigen::Upper>();
        small.bottomRows(cols) =
            std::sqrt(static_cast<double>(rows) * ridge) * Eigen::MatrixXd::Identity(cols, cols);
    }
    else
    {
        small = qr_.matrixQR().topRows(top).triangularView<Eigen::Upper>();
    }
    small_.setThreshold(std::numeric_limits<double>::epsilon() *
                        static_cast<double>(std::max(rows, cols)));
    small_.compute(small);
    rank_ = static_cast<int>(small_.rank());
}

std::vector<RegressionFit> LeastSquares::solve_columns(
    Eigen::Ref<Eigen::MatrixXd const> const& targets) const
{
    Eigen::Index const rows = design_.rows();
    Eigen::Index const cols = design_.cols();
    if (targets.rows() != rows)
        throw InvalidArgument("least squares: target length does not match design rows");
    for (Eigen::Index j = 0; j < targets.cols(); ++j)
        for (Eigen::Index i = 0; i < rows; ++i)
            if (!std::isfinite(targets(i, j)))
            {
                std::ostringstream os;
                os << "least squares: non-finite target at row " << i;
                throw InvalidArgument(os.str());
            }

    Eigen::Index const top = std::min(rows, cols);
    Eigen::MatrixXd qtb = qr_.householderQ().adjoint() * targets;
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(small_.rows(), targets.cols());
    rhs.topRows(top) = qtb.topRows(top);
    Eigen::MatrixXd coef = small_.solve(rhs);

    std::vector<RegressionFit> fits(static_cast<std::size_t>(targets.cols()));
    for (Eigen::Index j = 0; j < targets.cols(); ++j)
    {
        auto& fit = fits[static_cast<std::size_t>(j)];
        fit.coefficients.assign(coef.col(j).data(), coef.col(j).data() + cols);
        fit.residual_rms =
            (design_ * coef.col(j) - targets.col(j)).norm() / std::sqrt(static_cast<double>(rows));
        fit.rank = rank_;
        fit.rank_deficient = rank_deficient();
    }
    return fits;
}

RegressionFit LeastSquares::solve(Eigen::Ref<Eigen::VectorXd const> const& targets) const
{
    return solve_columns(targets).front();
}

Eigen::VectorXd LeastSquares::fitted(RegressionFit const& fit) const
{
    return design_ *
           Eigen::Map<Eigen::VectorXd const>(fit.coefficients.data(), design_.cols());
}

RegressionFit fit_least_squares(Eigen::MatrixXd const& design, Eigen::VectorXd const& targets,
                                double ridge)
{
    return LeastSquares(design, ridge).solve(targets);
}

double evaluate_fit(BasisSet const& basis, RegressionFit const& fit, std::span<double const> x)
{
    if (static_cast<int>(fit.coefficients.size()) != basis.count())
        throw InvalidArgument("evaluate_fit: coefficient count does not match basis");
    return basis.combine(fit.coefficients, x);
}

nlohmann::json fit_to_json(RegressionFit const& fit, int step_index)
{
    return {{"step_index", step_index},
            {"coefficients", fit.coefficients},
            {"residual_rms", fit.residual_rms},
            {"rank_deficient", fit.rank_deficient}};
}

RegressionFit fit_from_json(nlohmann::json const& j, int* step_index)
{
    RegressionFit fit;
    fit.coefficients = j.at("coefficients").get<std::vector<double>>();
    fit.residual_rms = j.at("residual_rms").get<double>();
    fit.rank_deficient = j.at("rank_deficient").get<bool>();
    if (step_index)
        *step_index = j.at("step_index").get<int>();
    return fit;
}

}  // namespace fbsde
