#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nvdepth/constants.hpp"
#include "nvdepth/estimation.hpp"
#include "nvdepth/models.hpp"

namespace nvdepth {

/// One spectral component with the sequence it came from.
struct SpectrumPoint {
  double omega = 0.0;  // rad/s, pi / tau
  double s_dd = 0.0;  // s^-1
  int n_pulses = 1;
  double tau = 0.0;  // s
  double p0_sigma = 0.0;  // readout error of the source P0, zero when unknown

  /// Effective electric-field density 2 S_DD / d_par^2, V^2 m^-2 Hz^-1.
  double s_e(const PhysicalConstants& constants = PhysicalConstants::standard()) const;
  /// Source population recovered from S_DD.
  double p0() const;
};

struct NoiseSpectrum {
  std::vector<SpectrumPoint> points;  // ascending omega

  std::size_t size() const { return points.size(); }
};

/// S_DD(pi / tau) = -pi ln(2 P0 - 1) / (N tau). Requires 0 < 2 P0 - 1 < 1.
double spectral_component(double p0, int n_pulses, double tau);

/// Converts every usable point of the given traces; points with 2 P0 - 1 <= 0
/// or >= 1 - epsilon are dropped. Throws EmptySpectrum if nothing survives.
NoiseSpectrum spectral_decomposition(const std::vector<DecayTrace>& traces, double epsilon = 0.02);

struct LorentzianNoise {
  double coupling_sq = 0.0;  // <E_perp^2>, V^2/m^2
  double tau_c = 0.0;  // s
};

/// S_e(omega) of the Lorentzian model.
double lorentzian_density(const LorentzianNoise& noise, double omega);

struct LorentzianFit {
  LorentzianNoise noise;
  FitResult fit;  // parameters log10_coupling_sq_v2_m2, log10_tau_c_s
  bool white_degenerate = false;
  /// Upper end of the 95% profile-likelihood interval for tau_c, s.
  std::optional<double> tau_c_upper;
};

/// Log-space Lorentzian fit of S_e. Flags the white-noise case when the knee
/// 1/tau_c lies more than 3x above the highest probed omega.
LorentzianFit lorentzian_fit(const NoiseSpectrum& spectrum,
                             const PhysicalConstants& constants = PhysicalConstants::standard());

struct RelaxationRates {
  double omega_rate = 0.0;  // Omega, Hz
  double gamma_rate = 0.0;  // gamma, Hz
  double t1_sq = 0.0;  // s
  double t1_dq = 0.0;  // s
};

/// Omega = 1/(3 T1,SQ), gamma = (1/T1,DQ - Omega)/2. Throws InconsistentData
/// when gamma comes out negative.
RelaxationRates rates_from_t1(double t1_sq, double t1_dq);

/// T1,SQ = 1/(3 Omega) and T1,DQ = 1/(Omega + 2 gamma).
std::pair<double, double> t1_from_rates(double omega_rate, double gamma_rate);

struct RelaxationPsd {
  double sq_psd = 0.0;  // 2 Omega / d_par^2, V^2 m^-2 Hz^-1
  double sq_frequency = 0.0;  // Hz
  double dq_psd = 0.0;  // gamma / d_perp^2
  double dq_frequency = 0.0;  // Hz
};

RelaxationPsd rates_to_psd(const RelaxationRates& rates, const FieldConfig& field,
                           const PhysicalConstants& constants = PhysicalConstants::standard());

}  // namespace nvdepth
