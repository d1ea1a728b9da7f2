#include "nvdepth/fit_models.hpp"

#include <cmath>
#include <numbers>

#include "nvdepth/models.hpp"

namespace nvdepth::fit_models {

namespace {

// u = (t/scale)^k and its log factor, with the t = 0 limit handled.
struct Stretch {
  double u;
  double log_ratio;
};

Stretch stretch(double t, double scale, double k) {
  if (t <= 0.0) return {0.0, 0.0};
  const double log_ratio = std::log(t / scale);
  return {std::exp(k * log_ratio), log_ratio};
}

}  // namespace

void EchoDecay::operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& f, Eigen::MatrixXd* jac) const {
  const double t2 = theta[0];
  const double p = theta[1];
  const auto m = static_cast<Eigen::Index>(t_us.size());
  f.resize(m);
  if (jac) jac->resize(m, 2);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Stretch s = stretch(t_us[static_cast<std::size_t>(i)], t2, p);
    const double e = std::exp(-s.u);
    f[i] = 0.5 + 0.5 * e;
    if (jac) {
      (*jac)(i, 0) = 0.5 * e * s.u * p / t2;
      (*jac)(i, 1) = -0.5 * e * s.u * s.log_ratio;
    }
  }
}

void NmrDepth::operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& f, Eigen::MatrixXd* jac) const {
  const double d_nm = theta[0];
  const auto m = static_cast<Eigen::Index>(freq_hz.size());
  f.resize(m);
  if (jac) jac->resize(m, 1);
  const double field = b_rms(d_nm * 1e-9, rho, constants);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double tau = 1.0 / (2.0 * freq_hz[static_cast<std::size_t>(i)]);
    const double window = n_pulses * tau;
    const double phase = constants.gamma_e * field * window / std::numbers::pi;
    const double s = sinc(0.5 * window * (omega_n - std::numbers::pi / tau));
    const double exponent = 2.0 * phase * phase * s * s;
    f[i] = std::exp(-exponent);
    // phase ~ d^-3/2, so d(exponent)/dd = -3 exponent / d.
    if (jac) (*jac)(i, 0) = f[i] * 3.0 * exponent / d_nm;
  }
}

void DdScaling::operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& f, Eigen::MatrixXd* jac) const {
  const double n_sat = theta[0];
  const double s = theta[1];
  const double t2_1 = theta[2];
  const auto m = static_cast<Eigen::Index>(n.size());
  f.resize(m);
  if (jac) jac->resize(m, 3);
  const double log_sat = std::log(n_sat);
  const double sat = std::exp(s * log_sat);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double ni = n[static_cast<std::size_t>(i)];
    const double log_n = std::log(ni);
    const double pw = std::exp(s * log_n);
    const double decay = std::exp(-ni / n_sat);
    const double g = sat + (pw - sat) * decay;
    f[i] = t2_1 * g;
    if (jac) {
      const double dsat_dnsat = s * sat / n_sat;
      (*jac)(i, 0) = t2_1 * (dsat_dnsat * (1.0 - decay) + (pw - sat) * decay * ni / (n_sat * n_sat));
      (*jac)(i, 1) = t2_1 * (sat * log_sat * (1.0 - decay) + pw * log_n * decay);
      (*jac)(i, 2) = g;
    }
  }
}

void DeerDecay::operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& f, Eigen::MatrixXd* jac) const {
  const double t2d = theta[0];
  const double q = theta[1];
  const auto m = static_cast<Eigen::Index>(t_us.size());
  f.resize(m);
  if (jac) jac->resize(m, 2);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double t = t_us[static_cast<std::size_t>(i)];
    const double envelope = std::exp(-stretch(t, t2_us, p).u);
    const Stretch s = stretch(t, t2d, q);
    const double product = envelope * std::exp(-s.u);
    f[i] = 0.5 + 0.5 * product;
    if (jac) {
      (*jac)(i, 0) = 0.5 * product * s.u * q / t2d;
      (*jac)(i, 1) = -0.5 * product * s.u * s.log_ratio;
    }
  }
}

void LogLorentzian::operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& f, Eigen::MatrixXd* jac) const {
  const double log_a = theta[0];
  const double log_tc = theta[1];
  const double tc = std::pow(10.0, log_tc);
  const auto m = static_cast<Eigen::Index>(omega.size());
  f.resize(m);
  if (jac) jac->resize(m, 2);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double x = omega[static_cast<std::size_t>(i)] * tc;
    const double x2 = x * x;
    f[i] = log_a + log_tc - std::log10(std::numbers::pi) - std::log10(1.0 + x2);
    if (jac) {
      (*jac)(i, 0) = 1.0;
      (*jac)(i, 1) = 1.0 - 2.0 * x2 / (1.0 + x2);
    }
  }
}

}  // namespace nvdepth::fit_models
