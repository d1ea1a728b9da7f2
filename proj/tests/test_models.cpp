#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "nvdepth/error.hpp"
#include "nvdepth/models.hpp"
#include "support.hpp"

using namespace nvdepth;
using std::numbers::pi;

namespace {
const PhysicalConstants& kc = PhysicalConstants::standard();
const double kB0 = 23.2 * units::mT;
}  // namespace

TEST_SUITE("models") {
  TEST_CASE("echo decay curve") {
    const DecayModel m{27.1 * units::us, 0.98};
    CHECK(decay_curve(m, 0.0) == 1.0);
    CHECK(decay_curve(m, 27.1 * units::us) == doctest::Approx(0.5 + 0.5 * std::exp(-1.0)).epsilon(1e-12));
    CHECK(decay_curve(m, 27.1 * units::us) == doctest::Approx(0.684).epsilon(1e-3));
    CHECK(decay_curve(m, 1.0) == doctest::Approx(0.5));
  }

  TEST_CASE("decay curve is monotone non-increasing") {
    for (int k = 0; k < 20; ++k) {
      const DecayModel m{testing::log_uniform(1e-6, 1e-3), testing::uniform(0.3, 3.0)};
      double prev = decay_curve(m, 0.0);
      for (int i = 1; i <= 200; ++i) {
        const double v = decay_curve(m, m.t2 * 0.03 * i);
        CHECK(v <= prev);
        prev = v;
      }
    }
  }

  TEST_CASE("decay model sanity window") {
    CHECK_THROWS_AS((DecayModel{1e-6, 0.2}.validate()), Error);
    CHECK_THROWS_AS((DecayModel{0.0, 1.0}.validate()), Error);
    CHECK_NOTHROW((DecayModel{1e-6, 3.0}.validate()));
  }

  TEST_CASE("sinc") {
    CHECK(sinc(0.0) == 1.0);
    CHECK(sinc(1e-9) == doctest::Approx(1.0));
    CHECK(sinc(pi) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(sinc(1.3) == doctest::Approx(std::sin(1.3) / 1.3).epsilon(1e-15));
  }

  TEST_CASE("rms dipolar field magnitude and power laws") {
    CHECK(b_rms(17.4 * units::nm, 6e28) == doctest::Approx(1.2e-7).epsilon(0.02));
    CHECK_THROWS_AS(b_rms(0.0, 6e28), Error);
    for (int k = 0; k < 20; ++k) {
      const double d = testing::log_uniform(1e-9, 1e-7);
      const double rho = testing::log_uniform(1e27, 1e29);
      CHECK(testing::rel_close(b_rms(8 * d, rho) / b_rms(d, rho), 1.0 / std::pow(8.0, 1.5), 1e-12));
      CHECK(testing::rel_close(b_rms(d, 4 * rho) / b_rms(d, rho), 2.0, 1e-12));
    }
  }

  TEST_CASE("resonant pulse spacing at 23.2 mT") {
    const double tau = resonant_tau(kc.gamma_h * kB0);
    CHECK(tau / units::ns == doctest::Approx(506.2).epsilon(0.1 / 506.2));
  }

  TEST_CASE("NMR contrast on and off resonance") {
    const double omega_n = kc.gamma_h * kB0;
    NmrDipModel m{17.4 * units::nm, 6e28, 128, resonant_tau(omega_n)};
    const double phase = kc.gamma_e * m.b_rms() * m.n_pulses * m.tau / pi;
    CHECK(nmr_contrast(m, omega_n) == doctest::Approx(std::exp(-2 * phase * phase)).epsilon(1e-14));
    CHECK(nmr_phase_parameter(m) == doctest::Approx(phase));
    m.tau = 0.2 * resonant_tau(omega_n);
    m.n_pulses = 100000;
    CHECK(nmr_contrast(m, omega_n) > 0.9999);
  }

  TEST_CASE("NMR contrast lies in (0, 1] and is smallest at resonance for a fixed window") {
    const double omega_n = kc.gamma_h * kB0;
    const double tau_n = resonant_tau(omega_n);
    for (int k = 0; k < 10; ++k) {
      const double d = testing::uniform(5, 40) * units::nm;
      const double window = 128 * tau_n;
      double best = 2.0;
      int best_n = 0;
      // Fixed window N tau; tau = window / N moves across the resonance.
      for (int n = 100; n <= 160; ++n) {
        const NmrDipModel m{d, 6e28, n, window / n};
        const double c = nmr_contrast(m, omega_n);
        CHECK(c > 0.0);
        CHECK(c <= 1.0);
        if (c < best) {
          best = c;
          best_n = n;
        }
      }
      CHECK(best_n == 128);
    }
  }

  TEST_CASE("DD scaling law") {
    const DdScalingModel m{27.0 * units::us, 105.2, 0.10};
    CHECK(std::pow(105.2, 0.10) == doctest::Approx(1.593).epsilon(1e-3));
    CHECK(m.t2_inf() / units::us == doctest::Approx(43.0).epsilon(0.5 / 43.0));
    const double at1 = m.t2_1 * (std::pow(105.2, 0.1) + (1 - std::pow(105.2, 0.1)) * std::exp(-1 / 105.2));
    CHECK(dd_t2(m, 1) == doctest::Approx(at1).epsilon(1e-14));
    CHECK(dd_t2(m, 1) == doctest::Approx(m.t2_1).epsilon(0.01));
    CHECK(dd_t2(m, 1e6) == doctest::Approx(m.t2_inf()).epsilon(1e-12));
    const DdScalingModel flat{27.0 * units::us, 105.2, 0.0};
    for (int n : {1, 8, 64, 512}) CHECK(dd_t2(flat, n) == doctest::Approx(flat.t2_1).epsilon(1e-14));
  }

  TEST_CASE("instantaneous diffusion") {
    CHECK(instantaneous_diffusion_rate(1e23, 0.0) == 0.0);
    const double rate = instantaneous_diffusion_rate(1e17 * units::per_cm3, pi);
    CHECK(1.0 / rate / units::us == doctest::Approx(12.1).epsilon(0.01));
    for (int k = 0; k < 20; ++k) {
      const double n = testing::log_uniform(1e20, 1e25);
      const double beta = testing::uniform(0.1, pi);
      CHECK(testing::rel_close(instantaneous_diffusion_rate(2 * n, beta), 2 * instantaneous_diffusion_rate(n, beta), 1e-14));
      const double t_id = 1.0 / instantaneous_diffusion_rate(n, beta);
      CHECK(testing::rel_close(defect_density_from_tid(t_id, beta), n, 1e-12));
    }
    CHECK_THROWS_AS(instantaneous_diffusion_rate(1e23, 4.0), Error);
    try {
      defect_density_from_tid(12e-6, 0.0);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Undefined);
    }
  }

  TEST_CASE("relaxation signals") {
    CHECK(relaxation_signal(RelaxChannel::SingleQuantum, 1.06e-3, 0.0) == 1.0);
    CHECK(relaxation_signal(RelaxChannel::SingleQuantum, 1.06e-3, 1.06e-3) == doctest::Approx(0.368).epsilon(1e-3));
    CHECK(relaxation_signal(RelaxChannel::DoubleQuantum, 1.16e-3, 2.32e-3) == doctest::Approx(0.135).epsilon(1e-2));
  }

  TEST_CASE("sequence labels round trip") {
    for (const char* label : {"hahn", "xy16-128", "xy8-64", "deer", "relax-sq", "relax-dq", "drive"}) {
      DecayTrace t;
      parse_sequence_label(label, t);
      CHECK(sequence_label(t) == label);
    }
    DecayTrace t;
    CHECK_THROWS_AS(parse_sequence_label("cpmg", t), Error);
  }

  TEST_CASE("trace validation") {
    DecayTrace t;
    t.times = {1e-6, 2e-6, 2e-6};
    t.p0 = {0.9, 0.8, 0.7};
    CHECK_THROWS_AS(t.validate(), Error);
    t.times = {1e-6, 2e-6, 3e-6};
    CHECK_NOTHROW(t.validate());
    t.p0[1] = 1.3;
    CHECK_THROWS_AS(t.validate(), Error);
  }

  TEST_CASE("synthesis is deterministic and carries the predicted error") {
    const std::vector<double> times{1e-6, 5e-6, 10e-6, 20e-6, 40e-6};
    const EchoTruth truth{DecayModel{27.1 * units::us, 0.98}};
    const PhotonModel photon{5e5, 0.2};
    const auto a = synthesize_trace(truth, times, photon, 1, 11);
    const auto b = synthesize_trace(truth, times, photon, 1, 11);
    const auto c = synthesize_trace(truth, times, photon, 1, 12);
    CHECK(a.p0 == b.p0);
    CHECK(a.p0 != c.p0);
    CHECK(a.sigma[0] == doctest::Approx(1.0 / (0.2 * std::sqrt(5e5))).epsilon(0.01));
  }

  TEST_CASE("many shots converge to the noiseless curve") {
    std::vector<double> times;
    for (int i = 1; i <= 20; ++i) times.push_back(i * 3e-6);
    const EchoTruth truth{DecayModel{27.1 * units::us, 0.98}};
    const auto trace = synthesize_trace(truth, times, PhotonModel{5e5, 0.2}, 1000000, 5);
    for (std::size_t i = 0; i < times.size(); ++i) {
      CHECK(std::abs(trace.p0[i] - truth_p0(truth, times[i])) < 3 * trace.sigma[i]);
      CHECK(trace.sigma[i] < 1e-5);
    }
  }

  TEST_CASE("empirical scatter matches the Poisson prediction") {
    const EchoTruth truth{DecayModel{27.1 * units::us, 0.98}};
    const std::vector<double> times{20e-6};
    const PhotonModel photon{5e5, 0.2};
    const int reps = 10000;
    double sum = 0, sum2 = 0, predicted = 0;
    for (int r = 0; r < reps; ++r) {
      const auto t = synthesize_trace(truth, times, photon, 1, 1000 + r);
      sum += t.p0[0];
      sum2 += t.p0[0] * t.p0[0];
      predicted = t.sigma[0];
    }
    const double mean = sum / reps;
    const double var = sum2 / reps - mean * mean;
    CHECK(var == doctest::Approx(predicted * predicted).epsilon(0.10));
  }

  TEST_CASE("synthesized NMR spectrum dips at the proton Larmor frequency") {
    const NmrTruth truth{DecayModel{27.1 * units::us, 0.98, ContrastTerm::Nmr}, 17.4 * units::nm, 6e28, 128, kB0};
    const double f_n = proton_larmor(kc, kB0);
    const auto times = nmr_time_grid(f_n, 20e3, 801, 128);
    CHECK(std::is_sorted(times.begin(), times.end()));
    const auto trace = synthesize_trace(truth, times, PhotonModel{5e5, 0.2}, 1000000, 3);
    DecayTrace xy = trace;
    xy.kind = SequenceKind::Xy;
    xy.n_pulses = 128;
    xy.xy_order = 16;
    const auto spectrum = normalize_nmr_trace(xy, truth.envelope);
    CHECK(std::is_sorted(spectrum.freq.begin(), spectrum.freq.end()));
    const auto it = std::min_element(spectrum.p0_norm.begin(), spectrum.p0_norm.end());
    const double f_dip = spectrum.freq[static_cast<std::size_t>(it - spectrum.p0_norm.begin())];
    CHECK(std::abs(f_dip - 0.988e6) <= 0.001e6);
    const auto model = nmr_spectrum_model(truth, spectrum.freq);
    for (std::size_t i = 0; i < spectrum.size(); i += 40) {
      CHECK(std::abs(spectrum.p0_norm[i] - model.p0_norm[i]) < 0.01);
    }
  }
}
