#include "nvdepth/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "nvdepth/error.hpp"
#include "nvdepth/fit_models.hpp"
#include "nvdepth/levenberg_marquardt.hpp"

namespace nvdepth {

namespace {

constexpr double kInvE = 0.36787944117144233;

struct Weights {
  Eigen::VectorXd w;
  bool absolute = false;
};

Weights weights_from_sigma(const std::vector<double>& sigma, std::size_t m, double scale = 1.0) {
  Weights out{Eigen::VectorXd::Ones(static_cast<Eigen::Index>(m)), false};
  if (sigma.size() != m) return out;
  if (!std::all_of(sigma.begin(), sigma.end(), [](double s) { return s > 0.0 && std::isfinite(s); })) return out;
  for (std::size_t i = 0; i < m; ++i) {
    const double s = sigma[i] * scale;
    out.w[static_cast<Eigen::Index>(i)] = 1.0 / (s * s);
  }
  out.absolute = true;
  return out;
}

FitParameter make_parameter(std::string name, double value, double variance, double tq) {
  FitParameter p;
  p.name = std::move(name);
  p.value = value;
  p.std_error = std::sqrt(std::max(variance, 0.0));
  p.ci_low = value - tq * p.std_error;
  p.ci_high = value + tq * p.std_error;
  return p;
}

FitResult assemble(std::string model, const std::vector<std::string>& names, const lm::Result& r) {
  if (!r.converged) {
    throw Error(ErrorCode::NonConvergence, model + " fit did not converge (" + r.stop_reason + ")");
  }
  FitResult out;
  out.model = std::move(model);
  const auto m = r.residuals.size();
  const auto n = r.theta.size();
  const double tq = lm::t_quantile_95(static_cast<int>(m - n));
  for (Eigen::Index k = 0; k < n; ++k) {
    out.parameters.push_back(make_parameter(names[static_cast<std::size_t>(k)], r.theta[k], r.covariance(k, k), tq));
  }
  out.residuals.assign(r.residuals.data(), r.residuals.data() + m);
  out.residual_norm = r.residuals.norm();
  out.chi2 = r.chi2;
  out.iterations = r.iterations;
  out.converged = r.converged;
  out.stop_reason = r.stop_reason;
  for (const auto& p : out.parameters) {
    if (!std::isfinite(p.std_error)) {
      out.flags.emplace_back("unidentifiable");
      break;
    }
  }
  return out;
}

// Delta-method propagation of the parameter covariance to a scalar.
FitParameter derived_parameter(std::string name, double value, const Eigen::VectorXd& gradient,
                               const lm::Result& r) {
  const double variance = gradient.dot(r.covariance * gradient);
  const double tq = lm::t_quantile_95(static_cast<int>(r.residuals.size() - r.theta.size()));
  return make_parameter(std::move(name), value, variance, tq);
}

FitParameter frozen_parameter(std::string name, double value) {
  FitParameter p;
  p.name = std::move(name);
  p.value = value;
  p.ci_low = p.ci_high = value;
  return p;
}

lm::Problem make_problem(lm::ModelFunction model, const std::vector<double>& y, const Weights& weights) {
  lm::Problem problem;
  problem.model = std::move(model);
  problem.observations = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  problem.weights = weights.w;
  problem.absolute_weights = weights.absolute;
  return problem;
}

template <class Model>
double chi2_at(const Model& model, const Eigen::VectorXd& theta, const lm::Problem& problem) {
  Eigen::VectorXd f;
  model(theta, f, nullptr);
  return ((problem.observations - f).array().square() * problem.weights.array()).sum();
}

// First time at which y falls to 1/e, interpolated in log time.
std::optional<double> one_over_e_crossing(const std::vector<double>& t, const std::vector<double>& y) {
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (y[i] <= kInvE && y[i - 1] > kInvE && t[i - 1] > 0.0) {
      const double frac = (y[i - 1] - kInvE) / (y[i - 1] - y[i]);
      return std::exp(std::log(t[i - 1]) + frac * (std::log(t[i]) - std::log(t[i - 1])));
    }
  }
  return std::nullopt;
}

// Linear regression of ln(-ln y) on ln t for a stretched exponential.
std::optional<std::pair<double, double>> stretch_regression(const std::vector<double>& t,
                                                            const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] <= 0.0 || y[i] <= 0.02 || y[i] >= 0.98) continue;
    const double x = std::log(t[i]);
    const double v = std::log(-std::log(y[i]));
    sx += x;
    sy += v;
    sxx += x * x;
    sxy += x * v;
    ++n;
  }
  if (n < 2) return std::nullopt;
  const double denom = n * sxx - sx * sx;
  if (denom <= 0.0) return std::nullopt;
  const double slope = (n * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / n;
  if (slope <= 0.0) return std::nullopt;
  return std::make_pair(std::exp(-intercept / slope), slope);
}

std::pair<double, double> stretch_guess(const std::vector<double>& t, const std::vector<double>& y) {
  if (auto crossing = one_over_e_crossing(t, y)) return {*crossing, 1.0};
  if (auto reg = stretch_regression(t, y)) return {reg->first, std::clamp(reg->second, 0.3, 3.0)};
  return {2.0 * t.back(), 1.0};
}

}  // namespace

const FitParameter& FitResult::at(const std::string& name) const {
  for (const auto* list : {&parameters, &derived, &frozen}) {
    for (const auto& p : *list) {
      if (p.name == name) return p;
    }
  }
  throw Error(ErrorCode::InvalidArgument, "no fit parameter named " + name);
}

bool FitResult::has_flag(const std::string& flag) const {
  return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

FitResult fit_decay(const DecayTrace& trace) {
  trace.validate();
  const std::size_t m = trace.size();
  if (m < 5) throw Error(ErrorCode::InvalidArgument, "decay fit needs at least 5 points");
  std::vector<double> t_us(m), coherence(m);
  for (std::size_t i = 0; i < m; ++i) {
    t_us[i] = trace.times[i] / units::us;
    coherence[i] = 2.0 * trace.p0[i] - 1.0;
  }
  const auto [lo, hi] = std::minmax_element(coherence.begin(), coherence.end());
  if (*hi - *lo < 0.1) {
    throw Error(ErrorCode::DegenerateData, "trace shows no resolvable decay");
  }

  fit_models::EchoDecay model{t_us};
  lm::Problem problem = make_problem(model, trace.p0, weights_from_sigma(trace.sigma, m));
  problem.lower = Eigen::Vector2d(1e-9, 0.3);
  problem.upper = Eigen::Vector2d(1e9, 3.0);
  const auto [t2_guess, p_guess] = stretch_guess(t_us, coherence);
  const auto r = lm::minimize(problem, Eigen::Vector2d(t2_guess, p_guess));
  FitResult out = assemble("echo", {"t2_us", "p"}, r);
  if (r.theta[1] <= 0.3 + 1e-9 || r.theta[1] >= 3.0 - 1e-9) out.flags.emplace_back("p_at_bound");
  return out;
}

FitResult fit_nmr_depth(const NmrSpectrum& spectrum, const NmrFitConfig& config, const PhysicalConstants& constants) {
  const std::size_t m = spectrum.size();
  if (m < 3 || spectrum.p0_norm.size() != m) {
    throw Error(ErrorCode::InvalidArgument, "NMR spectrum needs at least 3 points");
  }
  if (config.n_pulses < 1 || config.b0 <= 0.0 || config.rho <= 0.0 || config.t2 <= 0.0) {
    throw Error(ErrorCode::InvalidArgument, "NMR fit needs N >= 1 and positive B0, rho, T2");
  }
  const DecayModel envelope{config.t2, config.p, ContrastTerm::Nmr};
  envelope.validate();

  const double omega_n = constants.gamma_h * config.b0;
  const double f_n = omega_n / (2.0 * std::numbers::pi);
  const auto [fmin, fmax] = std::minmax_element(spectrum.freq.begin(), spectrum.freq.end());
  if (!(*fmin < f_n && f_n < *fmax)) {
    throw Error(ErrorCode::InvalidArgument, "spectrum does not span the proton resonance");
  }
  const double window_n = config.n_pulses * std::numbers::pi / omega_n;

  // Normalized-point noise: 2 sigma(P0) / envelope.
  auto norm_sigma = [&](double freq, double c_nmr) {
    const double window = config.n_pulses / (2.0 * freq);
    const double e = decay_envelope(envelope, window);
    return 2.0 * config.photon->p0_sigma(0.5 + 0.5 * c_nmr * e) / e;
  };
  Weights weights{Eigen::VectorXd::Ones(static_cast<Eigen::Index>(m)), false};
  if (config.photon) {
    config.photon->validate();
    std::vector<double> sigma(m);
    for (std::size_t i = 0; i < m; ++i) sigma[i] = norm_sigma(spectrum.freq[i], std::clamp(spectrum.p0_norm[i], 0.0, 1.0));
    weights = weights_from_sigma(sigma, m);
  }

  fit_models::NmrDepth model{spectrum.freq, config.n_pulses, omega_n, config.rho, constants};
  lm::Problem problem = make_problem(model, spectrum.p0_norm, weights);
  problem.lower = Eigen::VectorXd::Constant(1, 0.3);
  problem.upper = Eigen::VectorXd::Constant(1, 1e4);

  // Dip-depth inversion of the on-resonance contrast, then a coarse scan.
  std::vector<double> candidates;
  {
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (std::abs(spectrum.freq[i] - f_n) <= 0.2 / window_n) {
        sum += spectrum.p0_norm[i];
        ++count;
      }
    }
    const double mean = count > 0 ? sum / count : 1.0;
    if (mean > 0.0 && mean < 1.0) {
      const double field = std::numbers::pi * std::sqrt(-std::log(mean) / 2.0) / (constants.gamma_e * window_n);
      const double at_1nm = b_rms(units::nm, config.rho, constants);
      candidates.push_back(std::pow(at_1nm / field, 2.0 / 3.0));
    }
    for (int k = 0; k <= 100; ++k) candidates.push_back(std::pow(10.0, 0.0 + 2.3 * k / 100.0));
  }
  double best_d = candidates.front();
  double best_chi2 = std::numeric_limits<double>::infinity();
  for (double d : candidates) {
    const double c = chi2_at(model, Eigen::VectorXd::Constant(1, std::clamp(d, 0.3, 1e4)), problem);
    if (c < best_chi2) {
      best_chi2 = c;
      best_d = std::clamp(d, 0.3, 1e4);
    }
  }

  const auto r = lm::minimize(problem, Eigen::VectorXd::Constant(1, best_d));
  FitResult out = assemble("nmr", {"d_nv_nm"}, r);
  const double d_hat = r.theta[0];

  NmrDipModel resonant{d_hat * units::nm, config.rho, config.n_pulses, std::numbers::pi / omega_n};
  const double c_res = nmr_contrast(resonant, omega_n, constants);
  const double dip = 1.0 - c_res;
  double noise;
  if (config.photon) {
    noise = norm_sigma(f_n, c_res);
  } else {
    noise = m > 1 ? out.residual_norm / std::sqrt(static_cast<double>(m - 1)) : 0.0;
  }
  const double snr = noise > 0.0 ? dip / noise : std::numeric_limits<double>::infinity();
  if (snr < 1.0) {
    throw Error(ErrorCode::Undetectable,
                "NMR dip depth " + std::to_string(dip) + " is below the point noise " + std::to_string(noise));
  }
  const double phase = nmr_phase_parameter(resonant, constants);
  if (phase > 1.0) out.flags.emplace_back("outside_small_phase");

  for (const auto& [name, value] : {std::pair{"n_pulses", double(config.n_pulses)},
                                    std::pair{"b0_mt", config.b0 / units::mT},
                                    std::pair{"rho_m3", config.rho},
                                    std::pair{"t2_us", config.t2 / units::us},
                                    std::pair{"p", config.p}}) {
    out.frozen.push_back(frozen_parameter(name, value));
  }
  out.derived.push_back(frozen_parameter("dip_depth", dip));
  out.derived.push_back(frozen_parameter("snr", snr));
  out.derived.push_back(frozen_parameter("phase_parameter", phase));
  return out;
}

FitResult fit_dd_scaling(const std::vector<DdPoint>& points) {
  std::set<int> distinct;
  for (const auto& p : points) {
    if (p.n < 1 || !(p.t2 > 0.0)) throw Error(ErrorCode::InvalidArgument, "DD points need N >= 1 and T2 > 0");
    distinct.insert(p.n);
  }
  if (distinct.size() < 4 || !distinct.contains(1)) {
    throw Error(ErrorCode::InvalidArgument, "DD scaling fit needs at least 4 distinct N including N = 1");
  }
  const std::size_t m = points.size();
  std::vector<double> n(m), y(m), sigma(m);
  for (std::size_t i = 0; i < m; ++i) {
    n[i] = points[i].n;
    y[i] = points[i].t2 / units::us;
    sigma[i] = points[i].sigma / units::us;
  }
  fit_models::DdScaling model{n};
  lm::Problem problem = make_problem(model, y, weights_from_sigma(sigma, m));
  problem.lower = Eigen::Vector3d(1e-3, -2.0, 1e-9);
  problem.upper = Eigen::Vector3d(1e7, 3.0, 1e9);

  // Grid over (N_sat, s) with T2(1) solved linearly.
  Eigen::Vector3d best(10.0, 0.1, y.front());
  double best_chi2 = std::numeric_limits<double>::infinity();
  const auto& w = problem.weights;
  for (int i = 0; i <= 60; ++i) {
    const double n_sat = std::pow(10.0, 4.0 * i / 60.0);
    for (int j = 0; j <= 30; ++j) {
      const double s = -0.5 + 1.5 * j / 30.0;
      Eigen::VectorXd g;
      model(Eigen::Vector3d(n_sat, s, 1.0), g, nullptr);
      const double t2_1 = (w.array() * g.array() * problem.observations.array()).sum() /
                          (w.array() * g.array().square()).sum();
      if (!(t2_1 > 0.0)) continue;
      const double c = ((problem.observations - t2_1 * g).array().square() * w.array()).sum();
      if (c < best_chi2) {
        best_chi2 = c;
        best = Eigen::Vector3d(n_sat, s, t2_1);
      }
    }
  }

  const auto r = lm::minimize(problem, best);
  FitResult out = assemble("dd_scaling", {"n_sat", "s", "t2_1_us"}, r);
  const double n_sat = r.theta[0], s = r.theta[1], t2_1 = r.theta[2];
  const double sat = std::pow(n_sat, s);
  const Eigen::Vector3d gradient(t2_1 * s * sat / n_sat, t2_1 * sat * std::log(n_sat), sat);
  out.derived.push_back(derived_parameter("t2_inf_us", t2_1 * sat, gradient, r));
  return out;
}

FitResult fit_deer(const DecayTrace& trace, const DeerFitConfig& config, const PhysicalConstants& constants) {
  trace.validate();
  const DecayModel echo{config.t2, config.p, ContrastTerm::Deer};
  echo.validate();
  const std::size_t m = trace.size();
  if (m < 5) throw Error(ErrorCode::InvalidArgument, "DEER fit needs at least 5 points");
  if (config.beta < 0.0 || config.beta > std::numbers::pi) {
    throw Error(ErrorCode::OutOfRange, "flip angle must lie in [0, pi]");
  }

  std::vector<double> t_us(m), extra(m);
  for (std::size_t i = 0; i < m; ++i) {
    t_us[i] = trace.times[i] / units::us;
    extra[i] = (2.0 * trace.p0[i] - 1.0) / decay_envelope(echo, trace.times[i]);
  }
  const auto [lo, hi] = std::minmax_element(trace.p0.begin(), trace.p0.end());
  if (*hi - *lo < 0.05) throw Error(ErrorCode::DegenerateData, "DEER trace shows no resolvable decay");

  fit_models::DeerDecay model{t_us, config.t2 / units::us, config.p};
  lm::Problem problem = make_problem(model, trace.p0, weights_from_sigma(trace.sigma, m));
  problem.lower = Eigen::Vector2d(1e-9, 0.1);
  problem.upper = Eigen::Vector2d(1e9, 5.0);
  const auto [t2d_guess, q_guess] = stretch_guess(t_us, extra);
  const auto r = lm::minimize(problem, Eigen::Vector2d(t2d_guess, q_guess));
  FitResult out = assemble("deer", {"t2_deer_us", "q"}, r);
  out.frozen.push_back(frozen_parameter("t2_us", config.t2 / units::us));
  out.frozen.push_back(frozen_parameter("p", config.p));
  out.frozen.push_back(frozen_parameter("beta_rad", config.beta));

  // N_d scales as 1/T_id, so its relative error equals that of T2,DEER.
  const double t2d = r.theta[0];
  const double n_d = defect_density_from_tid(t2d * units::us, config.beta, constants) / units::per_cm3;
  out.derived.push_back(derived_parameter("n_d_cm3", n_d, Eigen::Vector2d(-n_d / t2d, 0.0), r));
  if (std::abs(r.theta[1] - 1.0) > 0.1) out.flags.emplace_back("n_d_order_of_magnitude");
  return out;
}

double t2_limit(double d_nv, const PhotonModel& photon, double rho, const PhysicalConstants& constants) {
  photon.validate();
  if (!(d_nv > 0.0)) throw Error(ErrorCode::InvalidArgument, "depth must be positive");
  const double arg = 2.0 * std::exp(2.0) * photon.noise_floor();
  if (arg >= 1.0) throw Error(ErrorCode::ReadoutTooNoisy, "readout too noisy for any depth");
  const double field = b_rms(d_nv, rho, constants);
  return std::numbers::pi / (2.0 * std::numbers::sqrt2 * constants.gamma_e * field) * std::sqrt(-std::log1p(-arg));
}

AccessibleRegion accessible_region(const PhotonModel& photon, double rho, const std::vector<double>& depth_grid,
                                   const PhysicalConstants& constants) {
  AccessibleRegion region;
  region.photon = photon;
  region.rho = rho;
  region.depth = depth_grid;
  region.t2_limit.reserve(depth_grid.size());
  for (double d : depth_grid) region.t2_limit.push_back(t2_limit(d, photon, rho, constants));
  return region;
}

bool is_accessible(double t2, double d_nv, const PhotonModel& photon, double rho, const PhysicalConstants& constants) {
  if (t2 < kT2Floor) return false;
  return t2 >= t2_limit(d_nv, photon, rho, constants);
}

int suggest_pulse_count(double t2_echo, double tau) {
  if (!(t2_echo > 0.0) || !(tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "T2 and tau must be positive");
  const double ideal = 2.0 * t2_echo / tau;
  return std::max(8, static_cast<int>(std::lround(ideal / 8.0)) * 8);
}

}  // namespace nvdepth
