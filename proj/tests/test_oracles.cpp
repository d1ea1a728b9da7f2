// Independent high-precision evaluations of the closed-form expressions,
// written from the physics rather than from the library code.
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <numbers>

#include "nvdepth/estimation.hpp"
#include "nvdepth/models.hpp"
#include "support.hpp"

using namespace nvdepth;
using hp = boost::multiprecision::cpp_bin_float_50;

namespace {

const hp kPi = boost::math::constants::pi<hp>();
const hp kGammaE = 2 * kPi * hp("28e9");
const hp kGammaH = 2 * kPi * hp("42.577e6");
const hp kMu0 = hp("1.25663706212e-6");
const hp kHbar = hp("1.054571817e-34");
const hp kMuB = hp("9.2740100783e-24");

hp oracle_b_rms(hp d, hp rho) { return kMu0 * kHbar * kGammaH / (4 * kPi) * sqrt(5 * kPi * rho / (96 * d * d * d)); }

hp oracle_t2_limit(hp d, hp rho, hp c, hp n0) {
  const hp e2 = exp(hp(2));
  return kPi / (2 * sqrt(hp(2)) * kGammaE * oracle_b_rms(d, rho)) * sqrt(-log(1 - 2 * e2 / (c * sqrt(n0))));
}

hp oracle_id_rate(hp n_d, hp beta) {
  const hp s = sin(beta / 2);
  return n_d * kPi * kMu0 * 4 * kMuB * kMuB / (9 * sqrt(hp(3)) * kHbar) * s * s;
}

}  // namespace

TEST_SUITE("oracles") {
  TEST_CASE("rms dipolar field at 17.4 nm") {
    const double lib = b_rms(17.4e-9, 6e28);
    const double ref = oracle_b_rms(hp("17.4e-9"), hp("6e28")).convert_to<double>();
    CHECK(testing::rel_close(lib, ref, 1e-12));
    CHECK(ref == doctest::Approx(1.218e-7).epsilon(1e-3));
  }

  TEST_CASE("rms dipolar field over random depths") {
    for (int k = 0; k < 20; ++k) {
      const double d = testing::log_uniform(2e-9, 2e-7);
      const double rho = testing::log_uniform(1e28, 1e29);
      CHECK(testing::rel_close(b_rms(d, rho), oracle_b_rms(hp(d), hp(rho)).convert_to<double>(), 1e-12));
    }
  }

  TEST_CASE("accessibility limit") {
    const double lib = t2_limit(17.4e-9, PhotonModel{5e5, 0.2}, 6e28);
    const double ref = oracle_t2_limit(hp("17.4e-9"), hp("6e28"), hp("0.2"), hp("5e5")).convert_to<double>();
    CHECK(testing::rel_close(lib, ref, 1e-10));
    CHECK(ref * 1e6 == doctest::Approx(17.2).epsilon(0.01));
    for (int k = 0; k < 20; ++k) {
      const double d = testing::log_uniform(2e-9, 1e-7);
      const double c = testing::uniform(0.1, 0.4);
      const double n0 = testing::log_uniform(2e5, 1e8);
      CHECK(testing::rel_close(t2_limit(d, PhotonModel{n0, c}, 6e28),
                               oracle_t2_limit(hp(d), hp("6e28"), hp(c), hp(n0)).convert_to<double>(), 1e-10));
    }
  }

  TEST_CASE("instantaneous-diffusion rate") {
    const double lib = instantaneous_diffusion_rate(1e23, std::numbers::pi);
    const double ref = oracle_id_rate(hp("1e23"), kPi).convert_to<double>();
    CHECK(testing::rel_close(lib, ref, 1e-12));
    CHECK(1.0 / ref * 1e6 == doctest::Approx(12.1).epsilon(0.01));
  }
}
