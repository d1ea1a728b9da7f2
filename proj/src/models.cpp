#include "nvdepth/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "nvdepth/error.hpp"

namespace nvdepth {

void DecayModel::validate() const {
  if (!(t2 > 0.0) || !std::isfinite(t2)) throw Error(ErrorCode::InvalidArgument, "T2 must be positive");
  if (!(p >= 0.3 && p <= 3.0)) {
    throw Error(ErrorCode::OutOfRange, "stretch exponent must lie in [0.3, 3]");
  }
}

double decay_envelope(const DecayModel& model, double t_tot) {
  if (t_tot < 0.0) throw Error(ErrorCode::InvalidArgument, "sequence time must be non-negative");
  return std::exp(-std::pow(t_tot / model.t2, model.p));
}

double decay_curve(const DecayModel& model, double t_tot, double contrast) {
  return 0.5 + 0.5 * contrast * decay_envelope(model, t_tot);
}

double sinc(double x) {
  if (std::abs(x) < 1e-4) {
    const double x2 = x * x;
    return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
  }
  return std::sin(x) / x;
}

double b_rms(double d_nv, double rho, const PhysicalConstants& c) {
  if (!(d_nv > 0.0)) throw Error(ErrorCode::InvalidArgument, "NV depth must be positive");
  if (!(rho > 0.0)) throw Error(ErrorCode::InvalidArgument, "proton density must be positive");
  const double prefactor = c.mu_0 * c.hbar * c.gamma_h / (4.0 * std::numbers::pi);
  return prefactor * std::sqrt(5.0 * std::numbers::pi * rho / (96.0 * d_nv * d_nv * d_nv));
}

double nmr_phase_parameter(const NmrDipModel& m, const PhysicalConstants& c) {
  return c.gamma_e * m.b_rms(c) * m.n_pulses * m.tau / std::numbers::pi;
}

double nmr_contrast(const NmrDipModel& m, double omega_n, const PhysicalConstants& c) {
  if (!(m.tau > 0.0) || m.n_pulses < 1) {
    throw Error(ErrorCode::InvalidArgument, "NMR contrast needs tau > 0 and N >= 1");
  }
  const double window = m.n_pulses * m.tau;
  const double phase = nmr_phase_parameter(m, c);
  const double s = sinc(0.5 * window * (omega_n - std::numbers::pi / m.tau));
  return std::exp(-2.0 * phase * phase * s * s);
}

double resonant_tau(double omega_n) {
  if (!(omega_n > 0.0)) throw Error(ErrorCode::InvalidArgument, "Larmor frequency must be positive");
  return std::numbers::pi / omega_n;
}

double DdScalingModel::t2_inf() const { return t2_1 * std::pow(n_sat, s_exp); }

double dd_t2(const DdScalingModel& m, double n) {
  if (!(n >= 1.0)) throw Error(ErrorCode::InvalidArgument, "pulse number must be >= 1");
  const double sat = std::pow(m.n_sat, m.s_exp);
  return m.t2_1 * (sat + (std::pow(n, m.s_exp) - sat) * std::exp(-n / m.n_sat));
}

double deer_contrast(double t2_deer, double q, double t_tot) {
  return std::exp(-std::pow(t_tot / t2_deer, q));
}

double instantaneous_diffusion_coefficient(const PhysicalConstants& c) {
  return std::numbers::pi * c.mu_0 * c.g_e * c.g_e * c.mu_B * c.mu_B /
         (9.0 * std::sqrt(3.0) * c.hbar);
}

double instantaneous_diffusion_rate(double n_d, double beta, const PhysicalConstants& c) {
  if (!(n_d >= 0.0)) throw Error(ErrorCode::InvalidArgument, "defect density must be non-negative");
  if (!(beta >= 0.0 && beta <= std::numbers::pi)) {
    throw Error(ErrorCode::OutOfRange, "flip angle must lie in [0, pi]");
  }
  const double s = std::sin(0.5 * beta);
  return n_d * instantaneous_diffusion_coefficient(c) * s * s;
}

double defect_density_from_tid(double t_id, double beta, const PhysicalConstants& c) {
  if (!(t_id > 0.0)) throw Error(ErrorCode::InvalidArgument, "T_id must be positive");
  if (!(beta >= 0.0 && beta <= std::numbers::pi)) {
    throw Error(ErrorCode::OutOfRange, "flip angle must lie in [0, pi]");
  }
  const double s = std::sin(0.5 * beta);
  if (s * s < 1e-12) {
    throw Error(ErrorCode::Undefined, "defect density is undefined for a vanishing flip angle");
  }
  return 1.0 / (t_id * instantaneous_diffusion_coefficient(c) * s * s);
}

double relaxation_signal(RelaxChannel, double t1, double tau_w) {
  if (!(t1 > 0.0)) throw Error(ErrorCode::InvalidArgument, "T1 must be positive");
  if (!(tau_w >= 0.0)) throw Error(ErrorCode::InvalidArgument, "wait time must be non-negative");
  return std::exp(-tau_w / t1);
}

double DecayTrace::tau_at(std::size_t i) const {
  const double t = times.at(i);
  switch (kind) {
    case SequenceKind::Xy: return t / n_pulses;
    case SequenceKind::RelaxSq:
    case SequenceKind::RelaxDq: return t;
    case SequenceKind::Hahn:
    case SequenceKind::Deer:
    case SequenceKind::Drive: return 0.5 * t;
  }
  return t;
}

void DecayTrace::validate() const {
  if (times.size() != p0.size()) throw Error(ErrorCode::InvalidArgument, "trace: times/p0 size mismatch");
  if (!sigma.empty() && sigma.size() != times.size()) {
    throw Error(ErrorCode::InvalidArgument, "trace: sigma size mismatch");
  }
  if (n_pulses < 1) throw Error(ErrorCode::InvalidArgument, "trace: pulse number must be >= 1");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i]) || times[i] < 0.0) {
      throw Error(ErrorCode::InvalidArgument, "trace: times must be finite and non-negative");
    }
    if (i > 0 && !(times[i] > times[i - 1])) {
      throw Error(ErrorCode::InvalidArgument, "trace: times must be strictly increasing");
    }
    if (!(p0[i] >= -0.2 && p0[i] <= 1.2)) {
      throw Error(ErrorCode::OutOfRange, "trace: p0 outside [-0.2, 1.2]");
    }
  }
}

std::string sequence_label(const DecayTrace& trace) {
  switch (trace.kind) {
    case SequenceKind::Hahn: return "hahn";
    case SequenceKind::Xy: return "xy" + std::to_string(trace.xy_order) + "-" + std::to_string(trace.n_pulses);
    case SequenceKind::Deer: return "deer";
    case SequenceKind::RelaxSq: return "relax-sq";
    case SequenceKind::RelaxDq: return "relax-dq";
    case SequenceKind::Drive: return "drive";
  }
  return "unknown";
}

void parse_sequence_label(const std::string& label, DecayTrace& trace) {
  trace.xy_order = 0;
  trace.n_pulses = 1;
  if (label == "hahn") {
    trace.kind = SequenceKind::Hahn;
  } else if (label == "deer") {
    trace.kind = SequenceKind::Deer;
  } else if (label == "relax-sq") {
    trace.kind = SequenceKind::RelaxSq;
  } else if (label == "relax-dq") {
    trace.kind = SequenceKind::RelaxDq;
  } else if (label == "drive") {
    trace.kind = SequenceKind::Drive;
  } else if (label.rfind("xy", 0) == 0) {
    const auto dash = label.find('-');
    try {
      if (dash == std::string::npos) throw std::invalid_argument(label);
      std::size_t used = 0;
      trace.xy_order = std::stoi(label.substr(2, dash - 2), &used);
      if (used != dash - 2) throw std::invalid_argument(label);
      trace.n_pulses = std::stoi(label.substr(dash + 1), &used);
      if (used != label.size() - dash - 1) throw std::invalid_argument(label);
    } catch (const std::exception&) {
      throw Error(ErrorCode::Format, "malformed sequence label '" + label + "'");
    }
    if ((trace.xy_order != 4 && trace.xy_order != 8 && trace.xy_order != 16) || trace.n_pulses < 1 ||
        trace.n_pulses % trace.xy_order != 0) {
      throw Error(ErrorCode::Format, "XYk-N needs k in {4, 8, 16} and N a multiple of k: '" + label + "'");
    }
    trace.kind = SequenceKind::Xy;
  } else {
    throw Error(ErrorCode::Format, "unknown sequence label '" + label + "'");
  }
}

namespace {

struct TruthEvaluator {
  double t;
  const PhysicalConstants& c;

  double operator()(const EchoTruth& m) const { return decay_curve(m.envelope, t); }
  double operator()(const NmrTruth& m) const {
    if (t <= 0.0) return decay_curve(m.envelope, t);
    const NmrDipModel dip{m.d_nv, m.rho, m.n_pulses, t / m.n_pulses};
    return decay_curve(m.envelope, t, nmr_contrast(dip, c.gamma_h * m.b0, c));
  }
  double operator()(const DeerTruth& m) const {
    return decay_curve(m.echo, t, deer_contrast(m.t2_deer, m.q, t));
  }
  double operator()(const RelaxTruth& m) const {
    return 0.5 + 0.5 * relaxation_signal(m.channel, m.t1, t);
  }
};

struct TraceShape {
  void operator()(const EchoTruth&) { trace.kind = SequenceKind::Hahn; }
  void operator()(const NmrTruth& m) {
    trace.kind = SequenceKind::Xy;
    trace.n_pulses = m.n_pulses;
    trace.xy_order = m.n_pulses % 16 == 0 ? 16 : (m.n_pulses % 8 == 0 ? 8 : 4);
  }
  void operator()(const DeerTruth&) { trace.kind = SequenceKind::Deer; }
  void operator()(const RelaxTruth& m) {
    trace.kind = m.channel == RelaxChannel::SingleQuantum ? SequenceKind::RelaxSq : SequenceKind::RelaxDq;
  }
  DecayTrace& trace;
};

}  // namespace

double truth_p0(const TruthModel& truth, double t, const PhysicalConstants& constants) {
  return std::visit(TruthEvaluator{t, constants}, truth);
}

DecayTrace synthesize_trace(const TruthModel& truth, std::span<const double> times, const PhotonModel& photon,
                            std::int64_t shots, std::uint64_t seed, const PhysicalConstants& constants) {
  photon.validate();
  if (shots < 1) throw Error(ErrorCode::InvalidArgument, "at least one shot is required");
  if (times.empty()) throw Error(ErrorCode::InvalidArgument, "empty synthesis schedule");

  DecayTrace trace;
  std::visit(TraceShape{trace}, truth);
  trace.photon = photon;
  trace.shots = shots;
  trace.times.assign(times.begin(), times.end());
  trace.p0.reserve(times.size());
  trace.sigma.reserve(times.size());

  std::mt19937_64 rng(seed);
  const double n_shots = static_cast<double>(shots);
  for (double t : times) {
    const double p0 = truth_p0(truth, t, constants);
    const double mean = n_shots * photon.signal_counts(p0);
    std::poisson_distribution<std::int64_t> counts(mean);
    const double observed = static_cast<double>(counts(rng)) / n_shots;
    trace.p0.push_back((observed - photon.n1()) / (photon.contrast * photon.n0));
    trace.sigma.push_back(std::sqrt(mean) / (n_shots * photon.contrast * photon.n0));
  }
  return trace;
}

NmrSpectrum normalize_nmr_trace(const DecayTrace& trace, const DecayModel& envelope) {
  if (trace.kind != SequenceKind::Xy) {
    throw Error(ErrorCode::InvalidArgument, "NMR spectra are built from XY traces");
  }
  NmrSpectrum spectrum;
  spectrum.n_pulses = trace.n_pulses;
  const std::size_t n = trace.size();
  spectrum.freq.resize(n);
  spectrum.p0_norm.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Ascending time is descending frequency.
    const std::size_t j = n - 1 - i;
    spectrum.freq[j] = 1.0 / (2.0 * trace.tau_at(i));
    spectrum.p0_norm[j] = (2.0 * trace.p0[i] - 1.0) / decay_envelope(envelope, trace.times[i]);
  }
  return spectrum;
}

std::vector<double> nmr_time_grid(double f_center, double span_hz, int points, int n_pulses) {
  if (points < 2 || !(span_hz > 0.0) || !(f_center > span_hz) || n_pulses < 1) {
    throw Error(ErrorCode::InvalidArgument, "invalid NMR frequency grid");
  }
  std::vector<double> times(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    // Highest frequency first so that N tau ascends.
    const double f = f_center + span_hz - 2.0 * span_hz * i / (points - 1);
    times[static_cast<std::size_t>(i)] = n_pulses / (2.0 * f);
  }
  return times;
}

NmrSpectrum nmr_spectrum_model(const NmrTruth& truth, std::span<const double> freq, const PhysicalConstants& c) {
  NmrSpectrum out;
  out.n_pulses = truth.n_pulses;
  out.freq.assign(freq.begin(), freq.end());
  out.p0_norm.reserve(freq.size());
  for (double f : freq) {
    const NmrDipModel dip{truth.d_nv, truth.rho, truth.n_pulses, 1.0 / (2.0 * f)};
    out.p0_norm.push_back(nmr_contrast(dip, c.gamma_h * truth.b0, c));
  }
  return out;
}

}  // namespace nvdepth
