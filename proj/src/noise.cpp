#include "nvdepth/noise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "nvdepth/error.hpp"
#include "nvdepth/fit_models.hpp"
#include "nvdepth/levenberg_marquardt.hpp"

namespace nvdepth {

namespace {

constexpr double kChi2Level95 = 3.841458820694124;
// Residual scale floor (dex) when a spectrum carries no readout errors and
// fits exactly.
constexpr double kMinLogScatter = 1e-3;

}  // namespace

double SpectrumPoint::s_e(const PhysicalConstants& constants) const {
  return 2.0 * s_dd / (constants.d_par * constants.d_par);
}

double SpectrumPoint::p0() const {
  return 0.5 * (1.0 + std::exp(-s_dd * n_pulses * tau / std::numbers::pi));
}

double spectral_component(double p0, int n_pulses, double tau) {
  const double x = 2.0 * p0 - 1.0;
  if (!(x > 0.0 && x < 1.0)) throw Error(ErrorCode::OutOfRange, "2 P0 - 1 must lie in (0, 1)");
  if (n_pulses < 1 || !(tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "N >= 1 and tau > 0 required");
  return -std::numbers::pi * std::log(x) / (n_pulses * tau);
}

NoiseSpectrum spectral_decomposition(const std::vector<DecayTrace>& traces, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must lie in [0, 1)");
  NoiseSpectrum spectrum;
  for (const auto& trace : traces) {
    trace.validate();
    const int n = trace.kind == SequenceKind::Xy ? trace.n_pulses : 1;
    for (std::size_t i = 0; i < trace.size(); ++i) {
      const double x = 2.0 * trace.p0[i] - 1.0;
      if (x <= 0.0 || x >= 1.0 - epsilon) continue;
      const double tau = trace.tau_at(i);
      if (!(tau > 0.0)) continue;
      SpectrumPoint point;
      point.tau = tau;
      point.n_pulses = n;
      point.omega = std::numbers::pi / tau;
      point.s_dd = spectral_component(trace.p0[i], n, tau);
      point.p0_sigma = trace.sigma.empty() ? 0.0 : trace.sigma[i];
      spectrum.points.push_back(point);
    }
  }
  if (spectrum.points.empty()) throw Error(ErrorCode::EmptySpectrum, "no usable points after filtering");
  std::stable_sort(spectrum.points.begin(), spectrum.points.end(),
                   [](const SpectrumPoint& a, const SpectrumPoint& b) { return a.omega < b.omega; });
  return spectrum;
}

double lorentzian_density(const LorentzianNoise& noise, double omega) {
  const double x = omega * noise.tau_c;
  return noise.coupling_sq * noise.tau_c / (std::numbers::pi * (1.0 + x * x));
}

LorentzianFit lorentzian_fit(const NoiseSpectrum& spectrum, const PhysicalConstants& constants) {
  const std::size_t m = spectrum.size();
  if (m < 3) throw Error(ErrorCode::InvalidArgument, "Lorentzian fit needs at least 3 points");

  std::vector<double> omega(m), y(m), sigma(m);
  bool have_sigma = true;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& pt = spectrum.points[i];
    if (!(pt.s_dd > 0.0) || !(pt.omega > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "spectrum points need positive omega and S_DD");
    }
    omega[i] = pt.omega;
    y[i] = std::log10(pt.s_e(constants));
    // Shot noise of P0 propagated through log10(-ln x), x = 2 P0 - 1.
    const double x = 2.0 * pt.p0() - 1.0;
    sigma[i] = 2.0 * pt.p0_sigma / (x * std::abs(std::log(x)) * std::numbers::ln10);
    if (!(sigma[i] > 0.0) || !std::isfinite(sigma[i])) have_sigma = false;
  }

  fit_models::LogLorentzian model{omega};
  lm::Problem problem;
  problem.model = model;
  problem.observations = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(m));
  problem.weights = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(m));
  problem.absolute_weights = have_sigma;
  if (have_sigma) {
    for (std::size_t i = 0; i < m; ++i) problem.weights[static_cast<Eigen::Index>(i)] = 1.0 / (sigma[i] * sigma[i]);
  }
  problem.lower = Eigen::Vector2d(-30.0, -15.0);
  problem.upper = Eigen::Vector2d(60.0, 3.0);
  const Eigen::VectorXd& w = problem.weights;
  const double log_pi = std::log10(std::numbers::pi);

  // For fixed log10 tau_c the amplitude is a weighted mean.
  auto profile = [&](double log_tc) {
    const double tc = std::pow(10.0, log_tc);
    double sw = 0.0, swr = 0.0;
    std::vector<double> g(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double x = omega[i] * tc;
      g[i] = log_tc - log_pi - std::log10(1.0 + x * x);
      sw += w[static_cast<Eigen::Index>(i)];
      swr += w[static_cast<Eigen::Index>(i)] * (y[i] - g[i]);
    }
    const double a = swr / sw;
    double chi2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double r = y[i] - a - g[i];
      chi2 += w[static_cast<Eigen::Index>(i)] * r * r;
    }
    return std::make_pair(a, chi2);
  };

  double best_t = -12.0, best_chi2 = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 150; ++k) {
    const double t = -15.0 + 18.0 * k / 150.0;
    const double c = profile(t).second;
    if (c < best_chi2) {
      best_chi2 = c;
      best_t = t;
    }
  }
  const auto r = lm::minimize(problem, Eigen::Vector2d(profile(best_t).first, best_t));
  if (!r.converged) throw Error(ErrorCode::NonConvergence, "Lorentzian fit did not converge (" + r.stop_reason + ")");

  LorentzianFit out;
  out.fit.model = "lorentzian";
  const double tq = lm::t_quantile_95(static_cast<int>(m) - 2);
  const char* names[] = {"log10_coupling_sq_v2_m2", "log10_tau_c_s"};
  for (int k = 0; k < 2; ++k) {
    FitParameter p;
    p.name = names[k];
    p.value = r.theta[k];
    p.std_error = std::sqrt(std::max(r.covariance(k, k), 0.0));
    p.ci_low = p.value - tq * p.std_error;
    p.ci_high = p.value + tq * p.std_error;
    out.fit.parameters.push_back(p);
  }
  out.fit.residuals.assign(r.residuals.data(), r.residuals.data() + m);
  out.fit.residual_norm = r.residuals.norm();
  out.fit.chi2 = r.chi2;
  out.fit.iterations = r.iterations;
  out.fit.converged = true;
  out.fit.stop_reason = r.stop_reason;
  out.noise.coupling_sq = std::pow(10.0, r.theta[0]);
  out.noise.tau_c = std::pow(10.0, r.theta[1]);

  const double omega_max = *std::max_element(omega.begin(), omega.end());
  out.white_degenerate = 1.0 / out.noise.tau_c > 3.0 * omega_max;
  if (out.white_degenerate) out.fit.flags.emplace_back("white_noise_degenerate");

  // Profile-likelihood upper bound on tau_c.
  double scale = 1.0;
  if (!have_sigma) {
    const double dof = std::max<double>(1.0, static_cast<double>(m) - 2.0);
    scale = std::max(r.chi2 / dof, kMinLogScatter * kMinLogScatter);
  }
  const double chi2_min = std::min(r.chi2, profile(r.theta[1]).second);
  const double threshold = chi2_min + kChi2Level95 * scale;
  double lo = r.theta[1], hi = problem.upper[1];
  if (profile(hi).second > threshold) {
    for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
      const double mid = 0.5 * (lo + hi);
      (profile(mid).second > threshold ? hi : lo) = mid;
    }
    out.tau_c_upper = std::pow(10.0, hi);
    FitParameter bound;
    bound.name = "tau_c_upper_s";
    bound.value = bound.ci_low = bound.ci_high = *out.tau_c_upper;
    out.fit.derived.push_back(bound);
  }
  FitParameter coupling;
  coupling.name = "coupling_sq_v2_m2";
  coupling.value = out.noise.coupling_sq;
  coupling.ci_low = std::pow(10.0, out.fit.parameters[0].ci_low);
  coupling.ci_high = std::pow(10.0, out.fit.parameters[0].ci_high);
  out.fit.derived.push_back(coupling);
  FitParameter tau_c;
  tau_c.name = "tau_c_s";
  tau_c.value = out.noise.tau_c;
  tau_c.ci_low = std::pow(10.0, out.fit.parameters[1].ci_low);
  tau_c.ci_high = std::pow(10.0, out.fit.parameters[1].ci_high);
  out.fit.derived.push_back(tau_c);
  return out;
}

RelaxationRates rates_from_t1(double t1_sq, double t1_dq) {
  if (!(t1_sq > 0.0) || !(t1_dq > 0.0)) throw Error(ErrorCode::InvalidArgument, "T1 values must be positive");
  RelaxationRates rates;
  rates.t1_sq = t1_sq;
  rates.t1_dq = t1_dq;
  rates.omega_rate = 1.0 / (3.0 * t1_sq);
  const double dq_rate = 1.0 / t1_dq;
  double gamma = 0.5 * (dq_rate - rates.omega_rate);
  if (gamma < 0.0) {
    if (-gamma > 1e-12 * dq_rate) {
      throw Error(ErrorCode::InconsistentData, "T1,DQ longer than 3 T1,SQ implies a negative gamma");
    }
    gamma = 0.0;
  }
  rates.gamma_rate = gamma;
  return rates;
}

std::pair<double, double> t1_from_rates(double omega_rate, double gamma_rate) {
  if (!(omega_rate > 0.0) || gamma_rate < 0.0) throw Error(ErrorCode::InvalidArgument, "rates must be non-negative");
  return {1.0 / (3.0 * omega_rate), 1.0 / (omega_rate + 2.0 * gamma_rate)};
}

RelaxationPsd rates_to_psd(const RelaxationRates& rates, const FieldConfig& field, const PhysicalConstants& constants) {
  RelaxationPsd psd;
  psd.sq_psd = 2.0 * rates.omega_rate / (constants.d_par * constants.d_par);
  psd.dq_psd = rates.gamma_rate / (constants.d_perp * constants.d_perp);
  psd.sq_frequency = field.probe_f_sq(constants);
  psd.dq_frequency = field.probe_f_dq(constants);
  return psd;
}

}  // namespace nvdepth
