#include "quditspam/lsq.hpp"

#include <unsupported/Eigen/LevenbergMarquardt>

#include <cmath>

namespace quditspam {

namespace {

struct Functor : Eigen::DenseFunctor<double> {
  const LeastSquaresProblem &problem;
  Functor(const LeastSquaresProblem &p, int inputs)
      : Eigen::DenseFunctor<double>(inputs, static_cast<int>(p.residual_count)), problem(p) {}
  int operator()(const Eigen::VectorXd &x, Eigen::VectorXd &fvec) const {
    fvec = problem.residuals(x);
    return fvec.allFinite() ? 0 : -1;
  }
  int df(const Eigen::VectorXd &x, Eigen::MatrixXd &fjac) const {
    fjac = problem.jacobian(x);
    return 0;
  }
};

} // namespace

double LeastSquaresResult::sigma(Eigen::Index i) const { return std::sqrt(std::max(0.0, covariance(i, i))); }

LeastSquaresResult solve_least_squares(const LeastSquaresProblem &problem, const Eigen::VectorXd &start,
                                       const LeastSquaresOptions &options) {
  if (problem.residual_count < start.size())
    throw FitError("fewer residuals (" + std::to_string(problem.residual_count) + ") than parameters (" +
                   std::to_string(start.size()) + ")");
  Functor functor(problem, static_cast<int>(start.size()));
  Eigen::LevenbergMarquardt<Functor> lm(functor);
  lm.setMaxfev(options.max_function_evaluations);
  lm.setXtol(options.tolerance);
  lm.setFtol(options.tolerance);
  lm.setGtol(0.0);
  Eigen::VectorXd x = start;
  const auto status = lm.minimize(x);
  using S = Eigen::LevenbergMarquardtSpace::Status;
  const bool converged = status == S::RelativeReductionTooSmall || status == S::RelativeErrorTooSmall ||
                         status == S::RelativeErrorAndReductionTooSmall || status == S::CosinusTooSmall ||
                         status == S::FtolTooSmall || status == S::XtolTooSmall || status == S::GtolTooSmall;
  if (!converged)
    throw FitError("least-squares fit did not converge (solver status " + std::to_string(static_cast<int>(status)) +
                   " after " + std::to_string(lm.nfev()) + " evaluations)");

  LeastSquaresResult result;
  result.parameters = x;
  const Eigen::VectorXd r = problem.residuals(x);
  result.rss = r.squaredNorm();
  result.evaluations = static_cast<int>(lm.nfev());
  const Eigen::MatrixXd J = problem.jacobian(x);
  const Eigen::MatrixXd normal = J.transpose() * J;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(normal);
  if (!lu.isInvertible()) throw FitError("singular normal matrix at the optimum (parameters not identifiable)");
  const auto dof = problem.residual_count - start.size();
  const double s2 = dof > 0 ? result.rss / static_cast<double>(dof) : 0.0;
  result.covariance = s2 * lu.inverse();
  return result;
}

} // namespace quditspam
