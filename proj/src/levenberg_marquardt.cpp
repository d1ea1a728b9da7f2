#include "nvdepth/levenberg_marquardt.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>

#include "nvdepth/error.hpp"

namespace nvdepth::lm {

namespace {

double weighted_chi2(const Eigen::VectorXd& residuals, const Eigen::VectorXd& weights) {
  return (residuals.array().square() * weights.array()).sum();
}

Eigen::VectorXd project(const Problem& problem, Eigen::VectorXd theta) {
  if (problem.lower.size() == theta.size()) theta = theta.cwiseMax(problem.lower);
  if (problem.upper.size() == theta.size()) theta = theta.cwiseMin(problem.upper);
  return theta;
}

}  // namespace

double t_quantile_95(int dof) {
  if (dof < 1) return 1.959963984540054;
  boost::math::students_t dist(static_cast<double>(dof));
  return boost::math::quantile(boost::math::complement(dist, 0.025));
}

Result minimize(const Problem& problem, const Eigen::VectorXd& initial, const Options& options) {
  const Eigen::Index m = problem.observations.size();
  const Eigen::Index n = initial.size();
  if (problem.weights.size() != m) throw Error(ErrorCode::InvalidArgument, "weights/observations size mismatch");
  if (m < n) throw Error(ErrorCode::InvalidArgument, "fewer observations than parameters");

  Result result;
  Eigen::VectorXd theta = project(problem, initial);
  Eigen::VectorXd prediction(m);
  Eigen::MatrixXd jacobian(m, n);
  problem.model(theta, prediction, &jacobian);
  Eigen::VectorXd residuals = problem.observations - prediction;
  double chi2 = weighted_chi2(residuals, problem.weights);
  if (!std::isfinite(chi2)) throw Error(ErrorCode::NonConvergence, "model is not finite at the initial guess");

  double lambda = options.initial_lambda;
  const Eigen::VectorXd& w = problem.weights;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    const Eigen::MatrixXd jtw = jacobian.transpose() * w.asDiagonal();
    const Eigen::MatrixXd hessian = jtw * jacobian;
    const Eigen::VectorXd gradient = jtw * residuals;
    if (gradient.cwiseAbs().maxCoeff() <= std::numeric_limits<double>::min()) {
      result.converged = true;
      result.stop_reason = "zero gradient";
      break;
    }

    bool accepted = false;
    bool small_step = false;
    while (lambda <= options.max_lambda) {
      Eigen::MatrixXd damped = hessian;
      const double floor = 1e-12 * std::max(hessian.diagonal().maxCoeff(), 1e-300);
      for (Eigen::Index k = 0; k < n; ++k) {
        damped(k, k) += lambda * std::max(hessian(k, k), floor);
      }
      const Eigen::VectorXd step = damped.ldlt().solve(gradient);
      const Eigen::VectorXd candidate = project(problem, theta + step);
      const Eigen::VectorXd actual_step = candidate - theta;
      Eigen::VectorXd trial_prediction(m);
      problem.model(candidate, trial_prediction, nullptr);
      const Eigen::VectorXd trial_residuals = problem.observations - trial_prediction;
      const double trial_chi2 = weighted_chi2(trial_residuals, w);
      if (std::isfinite(trial_chi2) && trial_chi2 <= chi2) {
        small_step = actual_step.norm() <= options.step_tolerance * (theta.norm() + options.step_tolerance);
        theta = candidate;
        chi2 = trial_chi2;
        problem.model(theta, prediction, &jacobian);
        residuals = problem.observations - prediction;
        lambda = std::max(lambda / 10.0, 1e-15);
        accepted = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      // No descent direction left at machine precision.
      result.converged = true;
      result.stop_reason = "no further reduction";
      break;
    }
    if (small_step) {
      result.converged = true;
      result.stop_reason = "step tolerance";
      ++iter;
      break;
    }
  }
  if (!result.converged) result.stop_reason = "iteration limit";

  result.theta = theta;
  result.residuals = residuals;
  result.chi2 = chi2;
  result.iterations = iter;

  const Eigen::MatrixXd hessian = jacobian.transpose() * w.asDiagonal() * jacobian;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(hessian);
  if (lu.isInvertible()) {
    result.covariance = lu.inverse();
    const Eigen::Index dof = m - n;
    if (!problem.absolute_weights && dof > 0) result.covariance *= chi2 / static_cast<double>(dof);
  } else {
    result.covariance = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::infinity());
  }
  return result;
}

}  // namespace nvdepth::lm
