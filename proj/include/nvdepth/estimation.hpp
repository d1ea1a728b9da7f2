#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nvdepth/constants.hpp"
#include "nvdepth/models.hpp"

namespace nvdepth {

struct FitParameter {
  std::string name;  // carries its unit, e.g. "t2_us"
  double value = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;  // 95%
  double ci_high = 0.0;
};

struct FitResult {
  std::string model;
  std::vector<FitParameter> parameters;
  std::vector<FitParameter> frozen;  // echoed unchanged, zero error
  std::vector<FitParameter> derived;
  std::vector<double> residuals;
  double residual_norm = 0.0;
  double chi2 = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string stop_reason;
  std::vector<std::string> flags;

  /// Looks a name up in parameters, then derived, then frozen.
  const FitParameter& at(const std::string& name) const;
  double value(const std::string& name) const { return at(name).value; }
  bool has_flag(const std::string& flag) const;
};

/// Stretched-exponential fit of an echo-type trace for (T2, p).
/// Uses the trace's sigma as absolute weights when present.
FitResult fit_decay(const DecayTrace& trace);

struct NmrFitConfig {
  int n_pulses = 128;
  double b0 = 0.0;  // T
  double rho = 6e28;  // m^-3
  double t2 = 0.0;  // echo T2 used for normalization, s
  double p = 1.0;
  /// When set, point weights and the detectability test use the photon
  /// budget; otherwise both come from the residual scatter.
  std::optional<PhotonModel> photon;
};

/// Single-parameter depth fit of a normalized NMR spectrum. Throws
/// Undetectable when the fitted dip is below the per-point noise.
FitResult fit_nmr_depth(const NmrSpectrum& spectrum, const NmrFitConfig& config,
                        const PhysicalConstants& constants = PhysicalConstants::standard());

struct DdPoint {
  int n = 1;
  double t2 = 0.0;  // s
  double sigma = 0.0;  // s, zero when unknown
};

/// Fit of T2 versus pulse number for (N_sat, s, T2(1)); reports T2(inf).
FitResult fit_dd_scaling(const std::vector<DdPoint>& points);

struct DeerFitConfig {
  double t2 = 0.0;  // frozen echo T2, s
  double p = 1.0;  // frozen echo stretch
  double beta = std::numbers::pi;
};

/// DEER fit for (T2,DEER, q) with the echo envelope frozen, plus the driven
/// defect density from the instantaneous-diffusion relation.
FitResult fit_deer(const DecayTrace& trace, const DeerFitConfig& config,
                   const PhysicalConstants& constants = PhysicalConstants::standard());

inline constexpr double kT2Floor = 3e-6;  // s

/// T2 at which the on-resonance NMR signal equals the readout noise, with
/// p = 1 and N tau = 2 T2. Throws ReadoutTooNoisy when 2e^2/(c sqrt(n0)) >= 1.
double t2_limit(double d_nv, const PhotonModel& photon, double rho,
                const PhysicalConstants& constants = PhysicalConstants::standard());

struct AccessibleRegion {
  std::vector<double> depth;  // m
  std::vector<double> t2_limit;  // s
  double t2_floor = kT2Floor;
  PhotonModel photon;
  double rho = 6e28;
};

AccessibleRegion accessible_region(const PhotonModel& photon, double rho, const std::vector<double>& depth_grid,
                                   const PhysicalConstants& constants = PhysicalConstants::standard());

/// True when (t2, d_nv) lies above both the noise line and the 3 us floor.
bool is_accessible(double t2, double d_nv, const PhotonModel& photon, double rho,
                   const PhysicalConstants& constants = PhysicalConstants::standard());

/// Pulse count giving N tau ~ 2 T2, rounded to a multiple of 8 (at least 8).
int suggest_pulse_count(double t2_echo, double tau);

}  // namespace nvdepth
