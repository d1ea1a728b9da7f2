#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "nvdepth/constants.hpp"

namespace nvdepth {

enum class ContrastTerm { Echo, Nmr, Deer };

/// Stretched-exponential coherence envelope.
struct DecayModel {
  double t2 = 0.0;  // s
  double p = 1.0;
  ContrastTerm contrast_term = ContrastTerm::Echo;

  /// t2 > 0 and 0.3 <= p <= 3.
  void validate() const;
};

/// exp[-(t_tot / T2)^p]
double decay_envelope(const DecayModel& model, double t_tot);

/// P0 = 1/2 + (C/2) exp[-(t_tot/T2)^p]. `contrast` is C (1 for a plain echo).
double decay_curve(const DecayModel& model, double t_tot, double contrast = 1.0);

/// Unnormalized sinc, sin(x)/x with sinc(0) = 1.
double sinc(double x);

/// Rms dipolar field (T) at depth `d_nv` (m) below a semi-infinite proton bath
/// of number density `rho` (m^-3).
double b_rms(double d_nv, double rho, const PhysicalConstants& constants = PhysicalConstants::standard());

struct NmrDipModel {
  double d_nv = 0.0;  // m
  double rho = 6e28;  // m^-3
  int n_pulses = 1;
  double tau = 0.0;  // inter-pulse spacing, s

  double b_rms(const PhysicalConstants& constants = PhysicalConstants::standard()) const {
    return nvdepth::b_rms(d_nv, rho, constants);
  }
};

/// NMR contrast factor of an N-pulse sequence with pulse spacing tau:
/// exp{-2 (gamma_e B_rms N tau / pi)^2 sinc^2[(N tau / 2)(omega_n - pi / tau)]}.
double nmr_contrast(const NmrDipModel& model, double omega_n,
                    const PhysicalConstants& constants = PhysicalConstants::standard());

/// Small-phase parameter gamma_e B_rms N tau / pi; the contrast formula
/// is trusted while this stays below one.
double nmr_phase_parameter(const NmrDipModel& model,
                           const PhysicalConstants& constants = PhysicalConstants::standard());

/// Pulse spacing at which the filter matches the proton Larmor frequency.
double resonant_tau(double omega_n);

struct DdScalingModel {
  double t2_1 = 0.0;  // s
  double n_sat = 1.0;
  double s_exp = 0.0;

  /// Saturated coherence time T2(1) * Nsat^s.
  double t2_inf() const;
};

/// T2 under N-pulse decoupling: T2(1) [Nsat^s + (N^s - Nsat^s) exp(-N/Nsat)].
double dd_t2(const DdScalingModel& model, double n);

struct DeerModel {
  double t2_deer = 0.0;  // s
  double q = 1.0;
  double n_d = 0.0;  // m^-3
  double beta = 3.141592653589793;  // rad
};

/// exp[-(t_tot / T2,DEER)^q]
double deer_contrast(double t2_deer, double q, double t_tot);

/// pi mu0 g_e^2 mu_B^2 / (9 sqrt(3) hbar), m^3/s.
double instantaneous_diffusion_coefficient(const PhysicalConstants& constants = PhysicalConstants::standard());

/// 1 / T_id in s^-1 for driven-spin density `n_d` (m^-3) and flip angle `beta`.
double instantaneous_diffusion_rate(double n_d, double beta,
                                    const PhysicalConstants& constants = PhysicalConstants::standard());

/// Inverse of `instantaneous_diffusion_rate`: density (m^-3) for a given T_id.
/// Throws Undefined when sin^2(beta/2) vanishes.
double defect_density_from_tid(double t_id, double beta,
                               const PhysicalConstants& constants = PhysicalConstants::standard());

enum class RelaxChannel { SingleQuantum, DoubleQuantum };

/// Normalized relaxation difference signal exp(-tau_w / T1).
double relaxation_signal(RelaxChannel channel, double t1, double tau_w);

enum class SequenceKind { Hahn, Xy, Deer, RelaxSq, RelaxDq, Drive };

/// Measured or synthetic P0 time series. `times` are total sequence times
/// (2 tau for Hahn/DEER, N tau for XY) or the wait time for relaxation.
struct DecayTrace {
  SequenceKind kind = SequenceKind::Hahn;
  int n_pulses = 1;
  int xy_order = 0;  // 4, 8 or 16 for XY sequences
  std::vector<double> times;
  std::vector<double> p0;
  std::vector<double> sigma;  // empty when unknown
  std::optional<PhotonModel> photon;
  std::int64_t shots = 0;

  std::size_t size() const { return times.size(); }
  /// Pulse spacing for point i under the timing convention of `kind`.
  double tau_at(std::size_t i) const;
  /// Times strictly increasing, p0 within [-0.2, 1.2], sizes consistent.
  void validate() const;
};

std::string sequence_label(const DecayTrace& trace);
/// Parses labels such as "hahn", "xy16-128", "deer", "relax-sq".
void parse_sequence_label(const std::string& label, DecayTrace& trace);

/// Normalized proton NMR spectrum: frequency axis (2 tau)^-1 in Hz and P0
/// with the coherence envelope divided out.
struct NmrSpectrum {
  int n_pulses = 0;
  std::vector<double> freq;
  std::vector<double> p0_norm;

  std::size_t size() const { return freq.size(); }
};

// Ground-truth models accepted by the synthesizer.
struct EchoTruth {
  DecayModel envelope;
};
struct NmrTruth {
  DecayModel envelope;
  double d_nv = 0.0;  // m
  double rho = 6e28;  // m^-3
  int n_pulses = 128;
  double b0 = 0.0;  // T
};
struct DeerTruth {
  DecayModel echo;
  double t2_deer = 0.0;
  double q = 1.0;
};
struct RelaxTruth {
  RelaxChannel channel = RelaxChannel::SingleQuantum;
  double t1 = 0.0;
};
using TruthModel = std::variant<EchoTruth, NmrTruth, DeerTruth, RelaxTruth>;

/// Noiseless P0 of `truth` at total sequence time `t`. Relaxation signals are
/// mapped onto populations as 1/2 + S/2.
double truth_p0(const TruthModel& truth, double t, const PhysicalConstants& constants = PhysicalConstants::standard());

/// Draws Poisson photon counts with mean shots * (n1 + (n0 - n1) P0) at each
/// time, then inverts them to noisy P0 estimates. Deterministic in `seed`.
/// The returned trace carries the predicted per-point standard error.
DecayTrace synthesize_trace(const TruthModel& truth, std::span<const double> times, const PhotonModel& photon,
                            std::int64_t shots, std::uint64_t seed,
                            const PhysicalConstants& constants = PhysicalConstants::standard());

/// Divides the coherence envelope out of an XY trace taken around the proton
/// resonance and re-indexes it by (2 tau)^-1, ascending.
NmrSpectrum normalize_nmr_trace(const DecayTrace& trace, const DecayModel& envelope);

/// Symmetric pulse-spacing grid whose (2 tau)^-1 values cover
/// f_center +- span_hz in `points` uniform steps; returned as ascending N tau.
std::vector<double> nmr_time_grid(double f_center, double span_hz, int points, int n_pulses);

/// Noiseless normalized spectrum at the given frequencies.
NmrSpectrum nmr_spectrum_model(const NmrTruth& truth, std::span<const double> freq,
                               const PhysicalConstants& constants = PhysicalConstants::standard());

}  // namespace nvdepth
