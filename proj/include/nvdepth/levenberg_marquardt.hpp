#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

namespace nvdepth::lm {

/// Fills `prediction` (size m) and, when non-null, `jacobian` (m x n) of the
/// model at parameters `theta`.
using ModelFunction =
    std::function<void(const Eigen::VectorXd& theta, Eigen::VectorXd& prediction, Eigen::MatrixXd* jacobian)>;

struct Problem {
  ModelFunction model;
  Eigen::VectorXd observations;
  /// Inverse variances. When `absolute_weights` is false they are relative and
  /// the covariance is rescaled by the reduced chi-square.
  Eigen::VectorXd weights;
  bool absolute_weights = false;
  Eigen::VectorXd lower;  // optional, empty means unbounded
  Eigen::VectorXd upper;
};

struct Options {
  int max_iterations = 200;
  double step_tolerance = 1e-10;  // relative
  double initial_lambda = 1e-3;
  double max_lambda = 1e14;
};

struct Result {
  Eigen::VectorXd theta;
  Eigen::MatrixXd covariance;  // infinite diagonal entries mark unidentifiable directions
  Eigen::VectorXd residuals;  // observations - prediction
  double chi2 = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string stop_reason;
};

/// Damped Gauss-Newton with Marquardt diagonal scaling and box constraints
/// enforced by projection.
Result minimize(const Problem& problem, const Eigen::VectorXd& initial, const Options& options = {});

/// Two-sided 95% Student-t quantile for `dof` degrees of freedom (normal for dof < 1).
double t_quantile_95(int dof);

}  // namespace nvdepth::lm
