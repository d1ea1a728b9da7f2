#pragma once

#include <Eigen/Dense>
#include <vector>

#include "nvdepth/constants.hpp"

// Curve models in fit parameterization, each with an analytic Jacobian.
// Times are in microseconds and depths in nanometres so that parameters
// stay of order one.
namespace nvdepth::fit_models {

/// P0(t) = 1/2 + 1/2 exp[-(t/T2)^p]; theta = (T2 [us], p); x = t [us].
struct EchoDecay {
  std::vector<double> t_us;

  std::size_t parameter_count() const { return 2; }
  void operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& f, Eigen::MatrixXd* jac) const;
};

/// Normalized NMR contrast vs (2 tau)^-1; theta = (d_nv [nm]); x = frequency [Hz].
struct NmrDepth {
  std::vector<double> freq_hz;
  int n_pulses = 128;
  double omega_n = 0.0;  // rad/s
  double rho = 6e28;  // m^-3
  PhysicalConstants constants{};

  std::size_t parameter_count() const { return 1; }
  void operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& f, Eigen::MatrixXd* jac) const;
};

/// T2(N) scaling; theta = (N_sat, s, T2(1) [us]); x = N.
struct DdScaling {
  std::vector<double> n;

  std::size_t parameter_count() const { return 3; }
  void operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& f, Eigen::MatrixXd* jac) const;
};

/// P0(t) = 1/2 + 1/2 exp[-(t/T2)^p] exp[-(t/T2,DEER)^q] with (T2, p) frozen;
/// theta = (T2,DEER [us], q); x = t [us].
struct DeerDecay {
  std::vector<double> t_us;
  double t2_us = 1.0;
  double p = 1.0;

  std::size_t parameter_count() const { return 2; }
  void operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& f, Eigen::MatrixXd* jac) const;
};

/// log10 of a Lorentzian spectral density A tau_c / (pi [1 + (omega tau_c)^2]);
/// theta = (log10 A, log10 tau_c [s]); x = omega [rad/s].
struct LogLorentzian {
  std::vector<double> omega;

  std::size_t parameter_count() const { return 2; }
  void operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& f, Eigen::MatrixXd* jac) const;
};

}  // namespace nvdepth::fit_models
