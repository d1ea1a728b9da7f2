#pragma once

#include <numbers>
#include <optional>
#include <utility>

namespace nvdepth {

// Unit factors. Everything inside the library is SI; these convert the
// lab-style units used at the IO boundary.
namespace units {
inline constexpr double nm = 1e-9;
inline constexpr double us = 1e-6;
inline constexpr double ns = 1e-9;
inline constexpr double ms = 1e-3;
inline constexpr double mT = 1e-3;
inline constexpr double kHz = 1e3;
inline constexpr double MHz = 1e6;
inline constexpr double GHz = 1e9;
inline constexpr double per_cm3 = 1e6;  // cm^-3 -> m^-3
inline constexpr double cm = 1e-2;
}  // namespace units

/// Fixed physical constants, SI. Instances are immutable; use
/// `PhysicalConstants::standard()` for the values used throughout the toolkit.
struct PhysicalConstants {
  /// NV electron gyromagnetic ratio, rad s^-1 T^-1 (gamma_e / 2pi = 28 MHz/mT).
  const double gamma_e = 2.0 * std::numbers::pi * 28.0e9;
  /// Proton gyromagnetic ratio, rad s^-1 T^-1 (gamma_h / 2pi = 42.577 kHz/mT).
  const double gamma_h = 2.0 * std::numbers::pi * 42.577e6;
  /// Axial electric dipole moment, Hz m/V (0.35 Hz cm/V).
  const double d_par = 0.35 * units::cm;
  /// Transverse electric dipole moment, Hz m/V (17 Hz cm/V).
  const double d_perp = 17.0 * units::cm;
  /// Vacuum permeability, T m/A.
  const double mu_0 = 1.25663706212e-6;
  /// Reduced Planck constant, J s.
  const double hbar = 1.054571817e-34;
  /// Bohr magneton, J/T.
  const double mu_B = 9.2740100783e-24;
  /// Free-electron g-factor.
  const double g_e = 2.0;
  /// Ground-state zero-field splitting, Hz.
  const double d_zfs = 2.870e9;

  static const PhysicalConstants& standard();

  /// Throws if any value is non-positive.
  void validate() const;
};

/// Photon budget of an optical readout. `n0` counts from mS = 0, `contrast`
/// the fractional dip for mS = -1.
struct PhotonModel {
  double n0 = 5e5;
  double contrast = 0.2;

  double n1() const { return (1.0 - contrast) * n0; }
  /// Expected counts for population `p0`.
  double signal_counts(double p0) const { return n1() + (n0 - n1()) * p0; }
  /// Standard error of a P0 estimate from one accumulated readout.
  double p0_sigma(double p0) const;
  /// Readout noise floor (c sqrt(n0))^-1.
  double noise_floor() const;

  void validate() const;
};

/// Static-field configuration. `omega_n` is always derived from `b0`;
/// measured transition frequencies, when known, override nominal ones.
class FieldConfig {
 public:
  FieldConfig(double b0, const PhysicalConstants& constants = PhysicalConstants::standard(),
              std::optional<double> measured_f_sq = std::nullopt,
              std::optional<double> measured_f_dq = std::nullopt);

  double b0() const { return b0_; }
  /// Proton Larmor angular frequency, rad/s.
  double omega_n() const { return omega_n_; }
  std::optional<double> measured_f_sq() const { return f_sq_; }
  std::optional<double> measured_f_dq() const { return f_dq_; }

  /// mS = 0 <-> -1 frequency: measured if present, else nominal. Hz.
  double probe_f_sq(const PhysicalConstants& constants = PhysicalConstants::standard()) const;
  /// mS = -1 <-> +1 separation: measured if present, else nominal. Hz.
  double probe_f_dq(const PhysicalConstants& constants = PhysicalConstants::standard()) const;

 private:
  double b0_;
  double omega_n_;
  std::optional<double> f_sq_;
  std::optional<double> f_dq_;
};

struct TransitionFrequencies {
  double f_sq;  // mS = 0 <-> -1, Hz
  double f_dq;  // mS = -1 <-> +1, Hz
};

/// Secular-approximation transition frequencies for an axial field.
/// Valid for 0 <= b0 < 0.1 T; throws OutOfRange otherwise.
TransitionFrequencies nominal_transitions(const PhysicalConstants& constants, double b0);

/// Proton Larmor frequency gamma_h B0 / 2pi in Hz.
double proton_larmor(const PhysicalConstants& constants, double b0);

}  // namespace nvdepth
