#pragma once
// Small nonlinear least-squares front end over Eigen's Levenberg-Marquardt.

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>

namespace quditspam {

class FitError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct LeastSquaresProblem {
  Eigen::Index residual_count = 0;
  /// r(p): residual vector of length residual_count.
  std::function<Eigen::VectorXd(const Eigen::VectorXd &)> residuals;
  /// J(p) = dr/dp, residual_count x p.size().
  std::function<Eigen::MatrixXd(const Eigen::VectorXd &)> jacobian;
};

struct LeastSquaresOptions {
  int max_function_evaluations = 2000;
  double tolerance = 1e-14; ///< relative tolerance on parameters and residual norm
};

struct LeastSquaresResult {
  Eigen::VectorXd parameters;
  /// s^2 (J^T J)^-1 with s^2 = RSS / (n - p); zero-dof fits use s^2 = 0.
  Eigen::MatrixXd covariance;
  double rss = 0.0;
  int evaluations = 0;

  double sigma(Eigen::Index i) const;
};

/// Throws FitError if the solver stops without meeting a convergence test or
/// the normal matrix at the optimum is singular.
LeastSquaresResult solve_least_squares(const LeastSquaresProblem &problem, const Eigen::VectorXd &start,
                                       const LeastSquaresOptions &options = {});

} // namespace quditspam
