#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nvdepth/implant.hpp"

namespace nvdepth {

/// One characterized NV center.
struct NvRecord {
  std::string id;
  double mask_thickness_nm = 0.0;
  double t2_echo = 0.0;  // s
  double p = 1.0;
  std::optional<double> d_nv_nm;  // empty when no NMR dip was resolved
  double b0 = 0.0;  // T
  std::string notes;

  void validate() const;
};

/// NV conversion yield: observed areal density over implanted areal density.
double nv_yield(double areal_density_cm2, double implanted_density_cm2);

/// Depth cutoff assumed for records without a resolved depth.
inline constexpr double kUndeterminedDepthNm = 5.0;

struct HistogramBin {
  double center_nm = 0.0;
  double determined = 0.0;
  double undetermined = 0.0;
  double mass = 0.0;  // determined + undetermined
  double mass_err = 0.0;  // sqrt(mass)
  double overlay_density = 0.0;  // MC density x yield, cm^-3
};

struct DepthHistogram {
  double mask_thickness_nm = 0.0;
  double bin_width_nm = 1.0;
  double yield = 0.0;
  std::vector<HistogramBin> bins;
  double determined_count = 0.0;
  double undetermined_count = 0.0;
  // Horizontal placement of the undetermined mass.
  double undetermined_center_nm = 2.5;
  double undetermined_halfwidth_nm = 2.5;

  double total_mass() const;
};

struct HistogramGroup {
  double mask_thickness_nm = 0.0;
  double yield = 0.0;
  std::optional<implant::DepthProfile> mc_profile;
};

/// Bins the records of one group. Depth-determined records go to their 1 nm
/// bin; each undetermined record spreads 1/5 into each bin of 0-5 nm.
DepthHistogram assemble_histogram(const std::vector<NvRecord>& records, const HistogramGroup& group);

/// Splits records by mask thickness over `groups`. Throws InvalidArgument for
/// a record whose thickness matches no group.
std::vector<DepthHistogram> assemble_histograms(const std::vector<NvRecord>& records,
                                                const std::vector<HistogramGroup>& groups);

}  // namespace nvdepth
