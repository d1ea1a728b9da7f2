#include <cmath>

#include "nvdepth/error.hpp"
#include "nvdepth/profile.hpp"
#include "support.hpp"

using namespace nvdepth;

namespace {

NvRecord record(const std::string& id, double mask, std::optional<double> depth) {
  NvRecord r;
  r.id = id;
  r.mask_thickness_nm = mask;
  r.t2_echo = 20e-6;
  r.p = 1.2;
  r.d_nv_nm = depth;
  r.b0 = 23.2e-3;
  return r;
}

implant::DepthProfile flat_profile(std::size_t bins) {
  implant::DepthProfile p;
  p.counts.assign(bins, 100);
  p.n_ions = static_cast<std::int64_t>(bins) * 100;
  p.dose_cm2 = 1e11;
  return p;
}

}  // namespace

TEST_SUITE("profile") {
  TEST_CASE("yield is a plain ratio") {
    CHECK(nv_yield(1e8, 1e11) == doctest::Approx(1e-3).epsilon(1e-15));
    CHECK(nv_yield(0.0, 1e11) == 0.0);
    CHECK_THROWS_AS(nv_yield(1e8, 0.0), Error);
    CHECK_THROWS_AS(nv_yield(-1.0, 1e11), Error);
  }

  TEST_CASE("undetermined records spread over the first five bins") {
    std::vector<NvRecord> records;
    const double depths[] = {5.5, 6.2, 7.9, 8.1, 9.4, 10.3, 11.0, 12.7, 14.2, 17.4, 21.6, 25.0, 33.3};
    for (int i = 0; i < 13; ++i) records.push_back(record("d" + std::to_string(i), 0.0, depths[i]));
    for (int i = 0; i < 44; ++i) records.push_back(record("u" + std::to_string(i), 0.0, std::nullopt));
    const auto h = assemble_histogram(records, HistogramGroup{0.0, 1e-3, std::nullopt});
    for (int k = 0; k < 5; ++k) {
      CHECK(h.bins[k].undetermined == doctest::Approx(8.8).epsilon(1e-12));
      CHECK(h.bins[k].determined == 0.0);
      CHECK(h.bins[k].mass_err == doctest::Approx(std::sqrt(8.8)));
    }
    CHECK(h.total_mass() == doctest::Approx(57.0).epsilon(1e-12));
    CHECK(h.determined_count == 13);
    CHECK(h.undetermined_count == 44);
    CHECK(h.bins[17].determined == 1.0);
    CHECK(h.bins[17].center_nm == 17.5);
    CHECK(h.bins.size() == 34);
  }

  TEST_CASE("groups split by mask thickness") {
    std::vector<NvRecord> records;
    for (int i = 0; i < 12; ++i) records.push_back(record("a" + std::to_string(i), 69.1, std::nullopt));
    for (int i = 0; i < 8; ++i) records.push_back(record("b" + std::to_string(i), 69.1, 5.0 + i));
    for (int i = 0; i < 5; ++i) records.push_back(record("c" + std::to_string(i), 0.0, 8.0));
    const auto hs = assemble_histograms(records, {{0.0, 1e-3, std::nullopt}, {69.1, 2e-3, std::nullopt}});
    REQUIRE(hs.size() == 2);
    CHECK(hs[0].total_mass() == doctest::Approx(5.0));
    CHECK(hs[1].total_mass() == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(hs[1].mask_thickness_nm == 69.1);
    records.push_back(record("x", 33.0, 10.0));
    try {
      assemble_histograms(records, {{0.0, 1e-3, std::nullopt}, {69.1, 2e-3, std::nullopt}});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidArgument);
    }
  }

  TEST_CASE("without undetermined records the histogram is ordinary binning") {
    std::vector<NvRecord> records;
    std::vector<int> reference(60, 0);
    for (int i = 0; i < 200; ++i) {
      const double d = testing::uniform(0.1, 59.9);
      records.push_back(record("r" + std::to_string(i), 0.0, d));
      ++reference[static_cast<std::size_t>(std::floor(d))];
    }
    const auto h = assemble_histogram(records, HistogramGroup{0.0, 1e-3, std::nullopt});
    for (std::size_t k = 0; k < h.bins.size(); ++k) {
      CHECK(h.bins[k].undetermined == 0.0);
      CHECK(h.bins[k].mass == reference[k]);
    }
    CHECK(h.total_mass() == 200.0);
  }

  TEST_CASE("histogram mass equals record count") {
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<NvRecord> records;
      const int n = static_cast<int>(testing::uniform(1, 80));
      for (int i = 0; i < n; ++i) {
        const bool known = testing::uniform(0, 1) < 0.4;
        records.push_back(record("r", 0.0, known ? std::optional<double>(testing::uniform(0.5, 40)) : std::nullopt));
      }
      const auto h = assemble_histogram(records, HistogramGroup{0.0, 1e-3, std::nullopt});
      CHECK(h.total_mass() == doctest::Approx(n).epsilon(1e-12));
    }
  }

  TEST_CASE("overlay scales linearly with yield") {
    const auto profile = flat_profile(30);
    const std::vector<NvRecord> records{record("a", 0.0, 12.0)};
    const auto h1 = assemble_histogram(records, HistogramGroup{0.0, 1e-3, profile});
    const auto h2 = assemble_histogram(records, HistogramGroup{0.0, 2e-3, profile});
    REQUIRE(h1.bins.size() == 30);
    for (std::size_t k = 0; k < h1.bins.size(); ++k) {
      CHECK(h1.bins[k].overlay_density == doctest::Approx(profile.density_cm3(k) * 1e-3).epsilon(1e-14));
      CHECK(h2.bins[k].overlay_density == doctest::Approx(2 * h1.bins[k].overlay_density).epsilon(1e-14));
    }
  }

  TEST_CASE("record validation") {
    auto r = record("bad", 0.0, -1.0);
    CHECK_THROWS_AS(r.validate(), Error);
    r = record("bad", 0.0, std::nullopt);
    r.t2_echo = 0;
    CHECK_THROWS_AS(r.validate(), Error);
  }
}
