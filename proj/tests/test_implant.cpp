#include <algorithm>
#include <cmath>
#include <iterator>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "nvdepth/error.hpp"
#include "nvdepth/implant.hpp"
#include "support.hpp"

using namespace nvdepth;
using namespace nvdepth::implant;

namespace {

DepthProfile run(double mask_nm, std::int64_t ions, std::uint64_t seed = 7, double energy_kev = 10.0,
                 unsigned workers = 0) {
  IonTransportScenario s;
  s.mask_thickness_nm = mask_nm;
  s.n_ions = ions;
  s.seed = seed;
  s.energy_kev = energy_kev;
  TransportOptions opt;
  opt.workers = workers;
  return transport(s, standard_stack(mask_nm), opt);
}

double mean_depth(const DepthProfile& p) {
  double sum = 0.0;
  for (std::size_t k = 0; k < p.counts.size(); ++k) sum += (k + 0.5) * p.bin_width_nm * p.counts[k];
  return sum / p.diamond_total();
}

}  // namespace

TEST_SUITE("implant") {
  TEST_CASE("ZBL screening function") {
    CHECK(detail::zbl_screening(0.0) == doctest::Approx(1.0).epsilon(1e-4));
    double prev = 1.0;
    for (double x = 0.1; x < 20; x += 0.1) {
      const double v = detail::zbl_screening(x);
      CHECK(v < prev);
      prev = v;
    }
  }

  TEST_CASE("MAGIC scattering agrees with direct quadrature") {
    for (double eps : {0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0}) {
      for (double b : {0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 4.0}) {
        const double exact = detail::quadrature_sin2_half_angle(eps, b);
        const double magic = detail::magic_sin2_half_angle(eps, b);
        CHECK(magic >= 0.0);
        CHECK(magic <= 1.0);
        if (exact > 1e-3) {
          INFO("eps=" << eps << " b=" << b << " exact=" << exact << " magic=" << magic);
          CHECK(testing::rel_close(magic, exact, 0.06));
        }
      }
    }
  }

  TEST_CASE("head-on collisions backscatter fully") {
    CHECK(detail::quadrature_sin2_half_angle(1.0, 0.0) == doctest::Approx(1.0).epsilon(1e-6));
  }

  TEST_CASE("ion streams differ per ion and per seed") {
    CHECK(detail::ion_stream_seed(7, 0) != detail::ion_stream_seed(7, 1));
    CHECK(detail::ion_stream_seed(7, 0) != detail::ion_stream_seed(8, 0));
    // Nearby seeds must not reuse each other's streams under a different index.
    std::vector<std::uint64_t> a, b;
    for (std::uint64_t i = 0; i < 4096; ++i) {
      a.push_back(detail::ion_stream_seed(99, i));
      b.push_back(detail::ion_stream_seed(100, i));
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::uint64_t> shared;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(shared));
    CHECK(shared.empty());
  }

  TEST_CASE("material layers validate their composition") {
    CHECK_NOTHROW(silicon_dioxide(50).validate());
    CHECK_NOTHROW(diamond().validate());
    MaterialLayer bad = diamond();
    bad.atoms[0].fraction = 0.7;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = diamond();
    bad.density_g_cm3 = -1;
    CHECK_THROWS_AS(bad.validate(), Error);
  }

  TEST_CASE("material database from JSON") {
    const std::string path = "nvdepth_test_materials.json";
    {
      std::ofstream out(path);
      out << R"({"materials":[{"label":"Al2O3","density_g_cm3":3.95,)"
          << R"("atoms":[{"z":13,"mass_u":26.98,"fraction":0.4},{"z":8,"mass_u":15.999,"fraction":0.6}]}]})";
    }
    const auto db = load_material_database(path);
    REQUIRE(db.size() == 1);
    CHECK(find_material(db, "Al2O3").density_g_cm3 == 3.95);
    CHECK(find_material(db, "diamond").density_g_cm3 == 3.52);
    CHECK_THROWS_AS(find_material(db, "unobtainium"), Error);
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_material_database("does-not-exist.json"), Error);
  }

  TEST_CASE("scenario and stack preconditions") {
    IonTransportScenario s;
    s.n_ions = 10;
    CHECK_THROWS_AS(transport(s, std::vector<MaterialLayer>{}), Error);
    s.energy_kev = 0.0;
    CHECK_THROWS_AS(s.validate(), Error);
    s.energy_kev = 10.0;
    s.n_ions = 0;
    CHECK_THROWS_AS(s.validate(), Error);
  }

  TEST_CASE("ion count is conserved") {
    for (double t : {0.0, 30.0, 52.3, 200.0}) {
      const auto p = run(t, 2000);
      CHECK(p.conserves_ions());
      CHECK(p.n_ions == 2000);
    }
  }

  TEST_CASE("bare diamond gives a buried peak") {
    const auto p = run(0.0, 5000);
    CHECK(p.peak_bin() > 3);
    CHECK(p.mask_stopped == 0);
    CHECK(stopped_fraction(p, std::numeric_limits<double>::infinity()) ==
          doctest::Approx(1.0 - double(p.reflected) / p.n_ions));
    CHECK(stopped_fraction(p, 0.0) == 0.0);
  }

  TEST_CASE("thick mask stops everything") {
    const auto p = run(200.0, 5000);
    CHECK(p.mask_stopped + p.reflected >= 0.999 * p.n_ions);
    CHECK(p.diamond_total() <= 5);
  }

  TEST_CASE("projected range grows with energy") {
    const double r5 = mean_depth(run(0.0, 2000, 3, 5.0));
    const double r10 = mean_depth(run(0.0, 2000, 3, 10.0));
    const double r20 = mean_depth(run(0.0, 2000, 3, 20.0));
    CHECK(r5 < r10);
    CHECK(r10 < r20);
  }

  TEST_CASE("results do not depend on the number of workers") {
    const auto a = run(52.3, 3000, 99, 10.0, 1);
    const auto b = run(52.3, 3000, 99, 10.0, 4);
    CHECK(a.counts == b.counts);
    CHECK(a.mask_stopped == b.mask_stopped);
    CHECK(a.reflected == b.reflected);
    const auto c = run(52.3, 3000, 100, 10.0, 1);
    CHECK(a.counts != c.counts);
  }

  TEST_CASE("substrate dose is non-increasing in mask thickness") {
    std::int64_t prev = std::numeric_limits<std::int64_t>::max();
    for (double t = 0.0; t <= 100.0; t += 20.0) {
      const auto p = run(t, 4000);
      CHECK(p.diamond_total() <= prev);
      prev = p.diamond_total();
    }
  }

  TEST_CASE("masked implant concentrates ions near the surface") {
    const auto p = run(52.3, 20000);
    CHECK(p.peak_bin() <= 1);
    CHECK(substrate_fraction_within(p, 10.0) > 0.5);
    CHECK(stopped_fraction(p, 10.0) ==
          doctest::Approx(substrate_fraction_within(p, 10.0) * p.diamond_total() / p.n_ions));
  }

  TEST_CASE("densities re-sum to the implanted areal density") {
    const auto p = run(52.3, 5000);
    double areal = 0.0;
    for (std::size_t k = 0; k < p.counts.size(); ++k) {
      CHECK(p.density_cm3(k) == doctest::Approx(double(p.counts[k]) / p.n_ions * p.dose_cm2 / (p.bin_width_nm * 1e-7)));
      areal += p.density_cm3(k) * p.bin_width_nm * 1e-7;
    }
    CHECK(areal == doctest::Approx(p.implanted_areal_density_cm2()).epsilon(1e-12));
  }
}
