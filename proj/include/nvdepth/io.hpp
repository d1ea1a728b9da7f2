#pragma once

#include <map>
#include <json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "nvdepth/estimation.hpp"
#include "nvdepth/implant.hpp"
#include "nvdepth/models.hpp"
#include "nvdepth/noise.hpp"
#include "nvdepth/profile.hpp"

// Text codecs for every artifact the toolkit reads or writes. CSV files open
// with a "# nvdepth <kind> v<version> key=value ..." line; readers accept a
// missing line and reject a different version.
namespace nvdepth::io {

inline constexpr int kFormatVersion = 1;

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text);

/// SI value -> display unit, e.g. to_unit(t, units::us), rounded to 15
/// significant digits so that to_unit(from_unit(u)) == u for any output u.
double to_unit(double si, double factor);
/// Display unit -> SI.
double from_unit(double value, double factor);

struct CsvTable {
  std::string kind;
  std::map<std::string, std::string> meta;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
};

std::string write_csv(const CsvTable& table);
/// Parses CSV text; `expected_kind` is checked against the version line when present.
CsvTable read_csv(std::string_view text, std::string_view expected_kind);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

std::string encode_trace(const DecayTrace& trace);
DecayTrace decode_trace(std::string_view text);

std::string encode_nmr_spectrum(const NmrSpectrum& spectrum);
NmrSpectrum decode_nmr_spectrum(std::string_view text);

std::string encode_noise_spectrum(const NoiseSpectrum& spectrum,
                                  const PhysicalConstants& constants = PhysicalConstants::standard());
NoiseSpectrum decode_noise_spectrum(std::string_view text,
                                    const PhysicalConstants& constants = PhysicalConstants::standard());

std::string encode_dd_points(const std::vector<DdPoint>& points);
std::vector<DdPoint> decode_dd_points(std::string_view text);

std::string encode_profile(const implant::DepthProfile& profile);
nlohmann::json profile_sidecar(const implant::DepthProfile& profile, const implant::IonTransportScenario& scenario);
implant::DepthProfile decode_profile(std::string_view csv, const nlohmann::json& sidecar);

nlohmann::json record_to_json(const NvRecord& record);
NvRecord record_from_json(const nlohmann::json& j);
std::string encode_records(const std::vector<NvRecord>& records);
std::vector<NvRecord> decode_records(std::string_view jsonl);

std::string encode_histogram(const DepthHistogram& histogram);

std::string encode_bound(const AccessibleRegion& region);

nlohmann::json fit_to_json(const FitResult& fit);
FitResult fit_from_json(const nlohmann::json& j);

/// UTC timestamp in ISO 8601, the only time-dependent field in a manifest.
std::string utc_timestamp();

}  // namespace nvdepth::io
