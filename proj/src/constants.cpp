#include "nvdepth/constants.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nvdepth/error.hpp"

namespace nvdepth {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::OutOfRange: return "out_of_range";
    case ErrorCode::EmptySpectrum: return "empty_spectrum";
    case ErrorCode::NonConvergence: return "non_convergence";
    case ErrorCode::DegenerateData: return "degenerate_data";
    case ErrorCode::Undetectable: return "undetectable";
    case ErrorCode::InconsistentData: return "inconsistent_data";
    case ErrorCode::ReadoutTooNoisy: return "readout_too_noisy";
    case ErrorCode::Undefined: return "undefined";
    case ErrorCode::TransportFailure: return "transport_failure";
    case ErrorCode::Io: return "io";
    case ErrorCode::Format: return "format";
    case ErrorCode::VersionMismatch: return "version_mismatch";
  }
  return "unknown";
}

const PhysicalConstants& PhysicalConstants::standard() {
  static const PhysicalConstants instance{};
  return instance;
}

void PhysicalConstants::validate() const {
  const double values[] = {gamma_e, gamma_h, d_par, d_perp, mu_0, hbar, mu_B, g_e, d_zfs};
  for (double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::InvalidArgument, "physical constants must be finite and positive");
    }
  }
}

double PhotonModel::p0_sigma(double p0) const {
  return std::sqrt(std::max(signal_counts(p0), 0.0)) / (contrast * n0);
}

double PhotonModel::noise_floor() const { return 1.0 / (contrast * std::sqrt(n0)); }

void PhotonModel::validate() const {
  if (!(n0 > 0.0)) throw Error(ErrorCode::InvalidArgument, "photon model: n0 must be positive");
  if (!(contrast > 0.0 && contrast < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "photon model: contrast must lie in (0, 1)");
  }
}

FieldConfig::FieldConfig(double b0, const PhysicalConstants& constants,
                         std::optional<double> measured_f_sq, std::optional<double> measured_f_dq)
    : b0_(b0), omega_n_(constants.gamma_h * b0), f_sq_(measured_f_sq), f_dq_(measured_f_dq) {
  if (!(b0 >= 0.0) || !std::isfinite(b0)) {
    throw Error(ErrorCode::InvalidArgument, "field must be finite and non-negative");
  }
}

double FieldConfig::probe_f_sq(const PhysicalConstants& constants) const {
  return f_sq_ ? *f_sq_ : nominal_transitions(constants, b0_).f_sq;
}

double FieldConfig::probe_f_dq(const PhysicalConstants& constants) const {
  return f_dq_ ? *f_dq_ : nominal_transitions(constants, b0_).f_dq;
}

TransitionFrequencies nominal_transitions(const PhysicalConstants& constants, double b0) {
  if (!(b0 >= 0.0 && b0 < 0.1)) {
    throw Error(ErrorCode::OutOfRange,
                "nominal transitions are only supported for 0 <= B0 < 0.1 T, got " +
                    std::to_string(b0));
  }
  const double zeeman = constants.gamma_e * b0 / (2.0 * std::numbers::pi);
  return {constants.d_zfs - zeeman, 2.0 * zeeman};
}

double proton_larmor(const PhysicalConstants& constants, double b0) {
  if (!(b0 >= 0.0)) throw Error(ErrorCode::InvalidArgument, "field must be non-negative");
  return constants.gamma_h * b0 / (2.0 * std::numbers::pi);
}

}  // namespace nvdepth
