#include "nvdepth/profile.hpp"

#include <algorithm>
#include <cmath>

#include "nvdepth/error.hpp"

namespace nvdepth {

namespace {

constexpr double kThicknessMatch = 1e-6;  // nm

bool same_thickness(double a, double b) { return std::abs(a - b) <= kThicknessMatch; }

}  // namespace

void NvRecord::validate() const {
  if (!(t2_echo > 0.0)) throw Error(ErrorCode::InvalidArgument, "record " + id + ": T2 must be positive");
  if (d_nv_nm && !(*d_nv_nm > 0.0)) throw Error(ErrorCode::InvalidArgument, "record " + id + ": depth must be positive");
  if (mask_thickness_nm < 0.0) throw Error(ErrorCode::InvalidArgument, "record " + id + ": negative mask thickness");
}

double nv_yield(double areal_density_cm2, double implanted_density_cm2) {
  if (!(implanted_density_cm2 > 0.0)) throw Error(ErrorCode::InvalidArgument, "implanted density must be positive");
  if (areal_density_cm2 < 0.0) throw Error(ErrorCode::InvalidArgument, "areal density must be non-negative");
  return areal_density_cm2 / implanted_density_cm2;
}

double DepthHistogram::total_mass() const {
  double total = 0.0;
  for (const auto& b : bins) total += b.mass;
  return total;
}

DepthHistogram assemble_histogram(const std::vector<NvRecord>& records, const HistogramGroup& group) {
  DepthHistogram h;
  h.mask_thickness_nm = group.mask_thickness_nm;
  h.yield = group.yield;
  const auto undetermined_bins = static_cast<std::size_t>(kUndeterminedDepthNm / h.bin_width_nm);

  std::size_t n_bins = undetermined_bins;
  for (const auto& r : records) {
    r.validate();
    if (r.d_nv_nm) n_bins = std::max(n_bins, static_cast<std::size_t>(std::floor(*r.d_nv_nm / h.bin_width_nm)) + 1);
  }
  if (group.mc_profile) n_bins = std::max(n_bins, group.mc_profile->counts.size());
  h.bins.resize(n_bins);
  for (std::size_t k = 0; k < n_bins; ++k) h.bins[k].center_nm = (k + 0.5) * h.bin_width_nm;

  for (const auto& r : records) {
    if (r.d_nv_nm) {
      h.bins[static_cast<std::size_t>(std::floor(*r.d_nv_nm / h.bin_width_nm))].determined += 1.0;
      h.determined_count += 1.0;
    } else {
      for (std::size_t k = 0; k < undetermined_bins; ++k) h.bins[k].undetermined += 1.0 / undetermined_bins;
      h.undetermined_count += 1.0;
    }
  }
  for (std::size_t k = 0; k < n_bins; ++k) {
    auto& b = h.bins[k];
    b.mass = b.determined + b.undetermined;
    b.mass_err = std::sqrt(b.mass);
    if (group.mc_profile && k < group.mc_profile->counts.size()) {
      b.overlay_density = group.mc_profile->density_cm3(k) * group.yield;
    }
  }
  return h;
}

std::vector<DepthHistogram> assemble_histograms(const std::vector<NvRecord>& records,
                                                const std::vector<HistogramGroup>& groups) {
  std::vector<std::vector<NvRecord>> split(groups.size());
  for (const auto& r : records) {
    const auto it = std::find_if(groups.begin(), groups.end(), [&](const HistogramGroup& g) {
      return same_thickness(g.mask_thickness_nm, r.mask_thickness_nm);
    });
    if (it == groups.end()) {
      throw Error(ErrorCode::InvalidArgument,
                  "record " + r.id + " has mask thickness " + std::to_string(r.mask_thickness_nm) + " nm outside the grouping");
    }
    split[static_cast<std::size_t>(it - groups.begin())].push_back(r);
  }
  std::vector<DepthHistogram> out;
  out.reserve(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) out.push_back(assemble_histogram(split[g], groups[g]));
  return out;
}

}  // namespace nvdepth
