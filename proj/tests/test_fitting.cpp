#include <cmath>
#include <numbers>

#include "fit_fixtures.hpp"
#include "nvdepth/error.hpp"
#include "nvdepth/fit_models.hpp"
#include "nvdepth/levenberg_marquardt.hpp"
#include "support.hpp"

using namespace nvdepth;
using namespace fixtures;

TEST_SUITE("fitting") {
  TEST_CASE("analytic Jacobians match central differences") {
    std::vector<double> t_us;
    for (int i = 0; i <= 40; ++i) t_us.push_back(0.25 + 1.5 * i);
    std::vector<double> freq;
    const double f_n = proton_larmor(PhysicalConstants::standard(), 23.2 * units::mT);
    for (int i = 0; i < 201; ++i) freq.push_back(f_n - 20e3 + 200.0 * i);
    std::vector<double> n{1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024};
    std::vector<double> omega;
    for (int i = 0; i <= 30; ++i) omega.push_back(std::pow(10.0, 5.0 + 4.0 * i / 30));

    for (int k = 0; k < 20; ++k) {
      CAPTURE(k);
      const fit_models::EchoDecay echo{t_us};
      CHECK(jacobian_mismatch(echo, Eigen::Vector2d(testing::uniform(5, 60), testing::uniform(0.3, 3))) < 1e-6);

      const fit_models::NmrDepth nmr{freq, 128, 2 * std::numbers::pi * f_n, 6e28, PhysicalConstants::standard()};
      CHECK(jacobian_mismatch(nmr, Eigen::VectorXd::Constant(1, testing::uniform(5, 50))) < 1e-6);

      const fit_models::DdScaling dd{n};
      CHECK(jacobian_mismatch(dd, Eigen::Vector3d(testing::log_uniform(5, 500), testing::uniform(0.02, 0.7),
                                                  testing::uniform(5, 50))) < 1e-6);

      const fit_models::DeerDecay deer{t_us, testing::uniform(10, 30), testing::uniform(0.5, 2)};
      CHECK(jacobian_mismatch(deer, Eigen::Vector2d(testing::uniform(5, 30), testing::uniform(0.5, 2.5))) < 1e-6);

      const fit_models::LogLorentzian lor{omega};
      CHECK(jacobian_mismatch(lor, Eigen::Vector2d(testing::uniform(15, 20), testing::uniform(-9, -5))) < 1e-6);
    }
  }

  TEST_CASE("solver handles a linear problem exactly") {
    lm::Problem problem;
    const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(10, 0, 9);
    problem.observations = 3.0 * x.array() + 2.0;
    problem.weights = Eigen::VectorXd::Ones(10);
    problem.model = [&](const Eigen::VectorXd& th, Eigen::VectorXd& f, Eigen::MatrixXd* j) {
      f = th[0] * x.array() + th[1];
      if (j) {
        j->resize(10, 2);
        j->col(0) = x;
        j->col(1).setOnes();
      }
    };
    const auto r = lm::minimize(problem, Eigen::Vector2d(0, 0));
    CHECK(r.converged);
    CHECK(r.theta[0] == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(r.theta[1] == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(lm::t_quantile_95(8) == doctest::Approx(2.306).epsilon(1e-3));
  }

  TEST_CASE("noiseless echo fit recovers the truth") {
    const EchoTruth truth{DecayModel{27.1 * units::us, 0.98}};
    const auto trace = exact_trace(truth, linear_times(100e-6, 30), SequenceKind::Hahn);
    const auto fit = fit_decay(trace);
    CHECK(fit.converged);
    CHECK(testing::rel_close(fit.value("t2_us"), 27.1, 1e-6));
    CHECK(testing::rel_close(fit.value("p"), 0.98, 1e-6));
    for (const auto& p : fit.parameters) CHECK(std::isfinite(p.ci_high - p.ci_low));
  }

  TEST_CASE("echo fit with shot noise lands within 5%") {
    const EchoTruth truth{DecayModel{27.1 * units::us, 0.98}};
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto trace = synthesize_trace(truth, linear_times(100e-6, 30), PhotonModel{5e5, 0.2}, 1, seed);
      const auto fit = fit_decay(trace);
      CHECK(std::abs(fit.value("t2_us") / 27.1 - 1) < 0.05);
      CHECK(std::abs(fit.value("p") / 0.98 - 1) < 0.05);
      const auto& t2 = fit.at("t2_us");
      CHECK(t2.ci_low < t2.value);
      CHECK(t2.ci_high > t2.value);
    }
  }

  TEST_CASE("flat traces are rejected") {
    DecayTrace trace;
    trace.times = linear_times(100e-6, 10);
    trace.p0.assign(10, 0.75);
    try {
      fit_decay(trace);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DegenerateData);
    }
    trace.times.resize(4);
    trace.p0.resize(4);
    CHECK_THROWS_AS(fit_decay(trace), Error);
  }

  TEST_CASE("fit error shrinks as the shot count grows") {
    const EchoTruth truth{DecayModel{27.1 * units::us, 0.98}};
    std::vector<double> mean_error;
    for (std::int64_t shots : {1, 100, 10000}) {
      double err = 0.0;
      for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        const auto trace = synthesize_trace(truth, linear_times(100e-6, 30), PhotonModel{5e5, 0.2}, shots, seed);
        err += std::abs(fit_decay(trace).value("t2_us") - 27.1);
      }
      mean_error.push_back(err / 8);
    }
    CHECK(mean_error[1] < mean_error[0]);
    CHECK(mean_error[2] < mean_error[1]);
  }

  TEST_CASE("noiseless NMR depth fit is exact") {
    for (double d : {8.0, 17.4, 30.0}) {
      const auto truth = reference_nmr_truth(d);
      const auto fit = fit_nmr_depth(exact_nmr_spectrum(truth), nmr_config(truth, false));
      CHECK(testing::rel_close(fit.value("d_nv_nm"), d, 1e-6));
    }
  }

  TEST_CASE("NMR depth round trip at 17.4 nm") {
    const auto truth = reference_nmr_truth();
    for (std::uint64_t seed : {1, 2}) {
      const auto fit = fit_nmr_depth(noisy_nmr_spectrum(truth, seed), nmr_config(truth, true));
      CHECK(std::abs(fit.value("d_nv_nm") - 17.4) < 0.5);
      CHECK(fit.value("snr") > 1.0);
      CHECK_FALSE(fit.has_flag("outside_small_phase"));
    }
  }

  TEST_CASE("deep NV is undetectable") {
    const auto truth = reference_nmr_truth(40.0);
    for (bool photon : {true, false}) {
      try {
        fit_nmr_depth(noisy_nmr_spectrum(truth, 4), nmr_config(truth, photon));
        FAIL("expected an error");
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Undetectable);
      }
    }
    CHECK_FALSE(is_accessible(27.1e-6, 40e-9, PhotonModel{5e5, 0.2}, 6e28));
  }

  TEST_CASE("depth fit is consistent under proton-density scaling") {
    const auto a = reference_nmr_truth(17.4, 6e28);
    const auto b = reference_nmr_truth(17.4, 12e28);
    const double da = fit_nmr_depth(exact_nmr_spectrum(a), nmr_config(a, false)).value("d_nv_nm");
    const double db = fit_nmr_depth(exact_nmr_spectrum(b), nmr_config(b, false)).value("d_nv_nm");
    CHECK(testing::rel_close(da, db, 1e-6));
  }

  TEST_CASE("NMR fit preconditions") {
    auto truth = reference_nmr_truth();
    auto spectrum = exact_nmr_spectrum(truth);
    auto cfg = nmr_config(truth, false);
    cfg.b0 = 30 * units::mT;  // resonance outside the scanned band
    CHECK_THROWS_AS(fit_nmr_depth(spectrum, cfg), Error);
    spectrum.freq.resize(2);
    spectrum.p0_norm.resize(2);
    CHECK_THROWS_AS(fit_nmr_depth(spectrum, nmr_config(truth, false)), Error);
  }

  TEST_CASE("DD scaling fit") {
    const DdScalingModel truth{27.0 * units::us, 105.2, 0.10};
    const auto fit = fit_dd_scaling(exact_dd_points(truth));
    CHECK(testing::rel_close(fit.value("n_sat"), 105.2, 1e-6));
    CHECK(testing::rel_close(fit.value("s"), 0.10, 1e-6));
    CHECK(testing::rel_close(fit.value("t2_1_us"), 27.0, 1e-6));
    CHECK(std::abs(fit.value("t2_inf_us") - 43.0) < 0.5);

    std::vector<DdPoint> two{{1, 27e-6, 0}, {8, 30e-6, 0}};
    CHECK_THROWS_AS(fit_dd_scaling(two), Error);
    std::vector<DdPoint> no_single{{2, 27e-6, 0}, {8, 30e-6, 0}, {16, 31e-6, 0}, {32, 32e-6, 0}};
    CHECK_THROWS_AS(fit_dd_scaling(no_single), Error);
  }

  TEST_CASE("DD scaling fit of random truths") {
    for (int k = 0; k < 10; ++k) {
      const DdScalingModel truth{testing::uniform(5, 50) * units::us, testing::log_uniform(20, 400),
                                 testing::uniform(0.05, 0.6)};
      const auto fit = fit_dd_scaling(exact_dd_points(truth));
      CHECK(testing::rel_close(fit.value("n_sat"), truth.n_sat, 1e-5));
      CHECK(testing::rel_close(fit.value("s"), truth.s_exp, 1e-5));
    }
  }

  TEST_CASE("DEER fit with frozen echo") {
    const DeerTruth truth{DecayModel{16.9 * units::us, 1.14, ContrastTerm::Deer}, 13.1 * units::us, 1.91};
    const DeerFitConfig cfg{16.9 * units::us, 1.14};
    const auto exact = fit_deer(exact_trace(truth, linear_times(40e-6, 30), SequenceKind::Deer), cfg);
    CHECK(testing::rel_close(exact.value("t2_deer_us"), 13.1, 1e-6));
    CHECK(testing::rel_close(exact.value("q"), 1.91, 1e-6));
    CHECK(exact.value("t2_us") == 16.9);
    CHECK(exact.has_flag("n_d_order_of_magnitude"));

    for (std::uint64_t seed : {1, 2, 3}) {
      auto trace = synthesize_trace(truth, linear_times(40e-6, 30), PhotonModel{5e5, 0.2}, 1, seed);
      trace.kind = SequenceKind::Deer;
      const auto fit = fit_deer(trace, cfg);
      CHECK(std::abs(fit.value("t2_deer_us") / 13.1 - 1) < 0.05);
      CHECK(std::abs(fit.value("q") / 1.91 - 1) < 0.05);
    }
  }

  TEST_CASE("DEER density from a single-exponential decay") {
    const DeerTruth truth{DecayModel{16.9 * units::us, 1.14, ContrastTerm::Deer}, 12.0 * units::us, 1.0};
    const auto trace = exact_trace(truth, linear_times(40e-6, 30), SequenceKind::Deer);
    const auto fit = fit_deer(trace, DeerFitConfig{16.9 * units::us, 1.14});
    CHECK_FALSE(fit.has_flag("n_d_order_of_magnitude"));
    CHECK(fit.value("n_d_cm3") == doctest::Approx(1.0e17).epsilon(0.02));
    try {
      fit_deer(trace, DeerFitConfig{16.9 * units::us, 1.14, 0.0});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Undefined);
    }
  }

  TEST_CASE("accessibility bound") {
    const PhotonModel photon{5e5, 0.2};
    CHECK(t2_limit(17.4e-9, photon, 6e28) * 1e6 == doctest::Approx(17.2).epsilon(0.01));
    CHECK(is_accessible(27.1e-6, 17.4e-9, photon, 6e28));
    for (double d : {1e-9, 3e-9, 10e-9}) CHECK_FALSE(is_accessible(2.99e-6, d, photon, 6e28));
    // Far above the readout floor the limit falls as n0^(-1/4).
    CHECK(t2_limit(17.4e-9, PhotonModel{1e26, 0.2}, 6e28) / t2_limit(17.4e-9, PhotonModel{1e30, 0.2}, 6e28) ==
          doctest::Approx(10.0).epsilon(1e-6));
    try {
      t2_limit(17.4e-9, PhotonModel{1e3, 0.2}, 6e28);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ReadoutTooNoisy);
    }
    std::vector<double> grid;
    for (int i = 1; i <= 100; ++i) grid.push_back(i * 1e-9);
    const auto region = accessible_region(photon, 6e28, grid);
    CHECK(region.t2_floor == 3e-6);
    for (std::size_t i = 1; i < grid.size(); ++i) CHECK(region.t2_limit[i] > region.t2_limit[i - 1]);
  }

  TEST_CASE("classification is monotone in T2 and depth") {
    const PhotonModel photon{5e5, 0.2};
    for (int k = 0; k < 200; ++k) {
      const double t2 = testing::log_uniform(1e-6, 1e-3);
      const double d = testing::log_uniform(1e-9, 1e-7);
      if (!is_accessible(t2, d, photon, 6e28)) continue;
      CHECK(is_accessible(t2 * testing::uniform(1, 10), d, photon, 6e28));
      CHECK(is_accessible(t2, d * testing::uniform(0.1, 1), photon, 6e28));
    }
  }

  TEST_CASE("pulse-count planner") {
    CHECK(suggest_pulse_count(27.1e-6, 506.2e-9) == 104);
    CHECK(suggest_pulse_count(1e-6, 506.2e-9) == 8);
    CHECK(suggest_pulse_count(27.1e-6, 506.2e-9) % 8 == 0);
  }
}
