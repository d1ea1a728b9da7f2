#include "nvdepth/io.hpp"

#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

#include "nvdepth/error.hpp"

namespace nvdepth::io {

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::int64_t parse_int(std::string_view text) {
  text = trim(text);
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::Format, "not an integer: '" + std::string(text) + "'");
  }
  return value;
}

double cell(const CsvTable& t, const std::vector<std::string>& row, std::string_view name) {
  return parse_double(row.at(t.column(name)));
}

const std::string* meta(const CsvTable& t, const std::string& key) {
  const auto it = t.meta.find(key);
  return it == t.meta.end() ? nullptr : &it->second;
}

void require_columns(const CsvTable& t, std::initializer_list<std::string_view> names) {
  for (auto n : names) {
    if (!t.has_column(n)) throw Error(ErrorCode::Format, t.kind + " CSV lacks column " + std::string(n));
  }
}

}  // namespace

std::string format_double(double value) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc()) throw Error(ErrorCode::Format, "cannot format number");
  return std::string(buf.data(), ptr);
}

double parse_double(std::string_view text) {
  text = trim(text);
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw Error(ErrorCode::Format, "not a number: '" + std::string(text) + "'");
  }
  return value;
}

double to_unit(double si, double factor) {
  // Division has no exact inverse for every double, so display values are
  // rounded to 15 significant digits; that makes decode/encode a fixed point.
  const double raw = si / factor;
  if (!std::isfinite(raw) || raw == 0.0) return raw;
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), raw, std::chars_format::general, 15);
  if (ec != std::errc()) return raw;
  double rounded = raw;
  std::from_chars(buf.data(), end, rounded);
  return rounded;
}

double from_unit(double value, double factor) { return value * factor; }

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw Error(ErrorCode::Format, "missing column " + std::string(name));
}

bool CsvTable::has_column(std::string_view name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

std::string write_csv(const CsvTable& table) {
  std::string out = "# nvdepth " + table.kind + " v" + std::to_string(kFormatVersion);
  for (const auto& [k, v] : table.meta) out += " " + k + "=" + v;
  out += "\n";
  for (std::size_t i = 0; i < table.header.size(); ++i) out += (i ? "," : "") + table.header[i];
  out += "\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
    out += "\n";
  }
  return out;
}

CsvTable read_csv(std::string_view text, std::string_view expected_kind) {
  CsvTable table;
  table.kind = std::string(expected_kind);
  bool have_header = false;
  for (auto raw : split(text, '\n')) {
    const auto line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto words = split(trim(line.substr(1)), ' ');
      if (words.size() >= 3 && words[0] == "nvdepth") {
        if (words[1] != expected_kind) {
          throw Error(ErrorCode::Format, "expected a " + std::string(expected_kind) + " file, found " + std::string(words[1]));
        }
        if (words[2] != "v" + std::to_string(kFormatVersion)) {
          throw Error(ErrorCode::VersionMismatch, "unsupported format version " + std::string(words[2]));
        }
        for (std::size_t i = 3; i < words.size(); ++i) {
          const auto eq = words[i].find('=');
          if (eq == std::string_view::npos) continue;
          table.meta[std::string(words[i].substr(0, eq))] = std::string(words[i].substr(eq + 1));
        }
      }
      continue;
    }
    std::vector<std::string> fields;
    for (auto f : split(line, ',')) fields.emplace_back(trim(f));
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
    } else {
      if (fields.size() != table.header.size()) {
        throw Error(ErrorCode::Format, "row has " + std::to_string(fields.size()) + " fields, header has " +
                                           std::to_string(table.header.size()));
      }
      table.rows.push_back(std::move(fields));
    }
  }
  if (!have_header) throw Error(ErrorCode::Format, "CSV has no header row");
  return table;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << contents;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path);
}

std::string encode_trace(const DecayTrace& trace) {
  CsvTable t;
  t.kind = "trace";
  t.meta["sequence"] = sequence_label(trace);
  if (trace.photon) {
    t.meta["n0"] = format_double(trace.photon->n0);
    t.meta["contrast"] = format_double(trace.photon->contrast);
  }
  if (trace.shots > 0) t.meta["shots"] = std::to_string(trace.shots);
  const bool with_sigma = trace.sigma.size() == trace.size() && !trace.sigma.empty();
  t.header = {"t_us", "p0"};
  if (with_sigma) t.header.emplace_back("sigma");
  for (std::size_t i = 0; i < trace.size(); ++i) {
    std::vector<std::string> row{format_double(to_unit(trace.times[i], units::us)), format_double(trace.p0[i])};
    if (with_sigma) row.push_back(format_double(trace.sigma[i]));
    t.rows.push_back(std::move(row));
  }
  return write_csv(t);
}

DecayTrace decode_trace(std::string_view text) {
  const CsvTable t = read_csv(text, "trace");
  require_columns(t, {"t_us", "p0"});
  DecayTrace trace;
  if (const auto* s = meta(t, "sequence")) parse_sequence_label(*s, trace);
  const auto* n0 = meta(t, "n0");
  const auto* c = meta(t, "contrast");
  if (n0 && c) trace.photon = PhotonModel{parse_double(*n0), parse_double(*c)};
  if (const auto* shots = meta(t, "shots")) trace.shots = parse_int(*shots);
  const bool with_sigma = t.has_column("sigma");
  for (const auto& row : t.rows) {
    trace.times.push_back(from_unit(cell(t, row, "t_us"), units::us));
    trace.p0.push_back(cell(t, row, "p0"));
    if (with_sigma) trace.sigma.push_back(cell(t, row, "sigma"));
  }
  trace.validate();
  return trace;
}

std::string encode_nmr_spectrum(const NmrSpectrum& spectrum) {
  CsvTable t;
  t.kind = "nmr";
  t.meta["n_pulses"] = std::to_string(spectrum.n_pulses);
  t.header = {"freq_mhz", "p0_norm"};
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    t.rows.push_back({format_double(to_unit(spectrum.freq[i], units::MHz)), format_double(spectrum.p0_norm[i])});
  }
  return write_csv(t);
}

NmrSpectrum decode_nmr_spectrum(std::string_view text) {
  const CsvTable t = read_csv(text, "nmr");
  require_columns(t, {"freq_mhz", "p0_norm"});
  NmrSpectrum s;
  if (const auto* n = meta(t, "n_pulses")) s.n_pulses = static_cast<int>(parse_int(*n));
  for (const auto& row : t.rows) {
    s.freq.push_back(from_unit(cell(t, row, "freq_mhz"), units::MHz));
    s.p0_norm.push_back(cell(t, row, "p0_norm"));
  }
  return s;
}

std::string encode_noise_spectrum(const NoiseSpectrum& spectrum, const PhysicalConstants& constants) {
  CsvTable t;
  t.kind = "spectrum";
  t.header = {"omega_rad_s", "s_dd_hz", "s_e_v2m2hz", "n_pulses", "tau_us", "p0_sigma"};
  for (const auto& p : spectrum.points) {
    t.rows.push_back({format_double(p.omega), format_double(p.s_dd), format_double(p.s_e(constants)),
                      std::to_string(p.n_pulses), format_double(to_unit(p.tau, units::us)), format_double(p.p0_sigma)});
  }
  return write_csv(t);
}

NoiseSpectrum decode_noise_spectrum(std::string_view text, const PhysicalConstants& constants) {
  const CsvTable t = read_csv(text, "spectrum");
  require_columns(t, {"omega_rad_s", "s_dd_hz", "n_pulses", "tau_us"});
  NoiseSpectrum s;
  for (const auto& row : t.rows) {
    SpectrumPoint p;
    p.omega = cell(t, row, "omega_rad_s");
    p.s_dd = cell(t, row, "s_dd_hz");
    p.n_pulses = static_cast<int>(parse_int(row.at(t.column("n_pulses"))));
    p.tau = from_unit(cell(t, row, "tau_us"), units::us);
    if (t.has_column("p0_sigma")) p.p0_sigma = cell(t, row, "p0_sigma");
    if (t.has_column("s_e_v2m2hz")) {
      const double s_e = cell(t, row, "s_e_v2m2hz");
      if (std::abs(s_e - p.s_e(constants)) > 1e-9 * std::abs(s_e)) {
        throw Error(ErrorCode::Format, "s_e_v2m2hz disagrees with 2 s_dd / d_par^2");
      }
    }
    s.points.push_back(p);
  }
  return s;
}

std::string encode_dd_points(const std::vector<DdPoint>& points) {
  CsvTable t;
  t.kind = "dd";
  t.header = {"n", "t2_us", "sigma_us"};
  for (const auto& p : points) {
    t.rows.push_back({std::to_string(p.n), format_double(to_unit(p.t2, units::us)), format_double(to_unit(p.sigma, units::us))});
  }
  return write_csv(t);
}

std::vector<DdPoint> decode_dd_points(std::string_view text) {
  const CsvTable t = read_csv(text, "dd");
  require_columns(t, {"n", "t2_us"});
  std::vector<DdPoint> out;
  for (const auto& row : t.rows) {
    DdPoint p;
    p.n = static_cast<int>(parse_int(row.at(t.column("n"))));
    p.t2 = from_unit(cell(t, row, "t2_us"), units::us);
    if (t.has_column("sigma_us")) p.sigma = from_unit(cell(t, row, "sigma_us"), units::us);
    out.push_back(p);
  }
  return out;
}

std::string encode_profile(const implant::DepthProfile& profile) {
  CsvTable t;
  t.kind = "profile";
  t.meta["bin_width_nm"] = format_double(profile.bin_width_nm);
  t.header = {"depth_nm", "count", "density_cm3"};
  for (std::size_t k = 0; k < profile.counts.size(); ++k) {
    t.rows.push_back({format_double(k * profile.bin_width_nm), std::to_string(profile.counts[k]),
                      format_double(profile.density_cm3(k))});
  }
  return write_csv(t);
}

nlohmann::json profile_sidecar(const implant::DepthProfile& profile, const implant::IonTransportScenario& s) {
  return {
      {"format", "nvdepth-profile"},
      {"version", kFormatVersion},
      {"scenario",
       {{"ion_z", s.ion_z},
        {"ion_mass_u", s.ion_mass_u},
        {"energy_kev", s.energy_kev},
        {"mask_nm", s.mask_thickness_nm},
        {"dose_cm2", s.dose_cm2},
        {"n_ions", s.n_ions},
        {"seed", s.seed},
        {"incidence_deg", s.incidence_deg}}},
      {"bin_width_nm", profile.bin_width_nm},
      {"n_ions", profile.n_ions},
      {"dose_cm2", profile.dose_cm2},
      {"mask_stopped", profile.mask_stopped},
      {"reflected", profile.reflected},
      {"diamond_total", profile.diamond_total()},
  };
}

implant::DepthProfile decode_profile(std::string_view csv, const nlohmann::json& sidecar) {
  if (sidecar.value("version", 0) != kFormatVersion) {
    throw Error(ErrorCode::VersionMismatch, "unsupported profile sidecar version");
  }
  const CsvTable t = read_csv(csv, "profile");
  require_columns(t, {"depth_nm", "count"});
  implant::DepthProfile p;
  try {
    p.bin_width_nm = sidecar.at("bin_width_nm").get<double>();
    p.n_ions = sidecar.at("n_ions").get<std::int64_t>();
    p.dose_cm2 = sidecar.at("dose_cm2").get<double>();
    p.mask_stopped = sidecar.at("mask_stopped").get<std::int64_t>();
    p.reflected = sidecar.at("reflected").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("profile sidecar: ") + e.what());
  }
  for (const auto& row : t.rows) p.counts.push_back(parse_int(row.at(t.column("count"))));
  if (!p.conserves_ions()) throw Error(ErrorCode::Format, "profile counts do not add up to n_ions");
  return p;
}

nlohmann::json record_to_json(const NvRecord& r) {
  nlohmann::json j = {
      {"id", r.id},
      {"mask_nm", r.mask_thickness_nm},
      {"t2_us", to_unit(r.t2_echo, units::us)},
      {"p", r.p},
      {"d_nv_nm", nullptr},
      {"b0_mt", to_unit(r.b0, units::mT)},
      {"notes", r.notes},
  };
  if (r.d_nv_nm) j["d_nv_nm"] = *r.d_nv_nm;
  return j;
}

NvRecord record_from_json(const nlohmann::json& j) {
  NvRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.mask_thickness_nm = j.at("mask_nm").get<double>();
    r.t2_echo = from_unit(j.at("t2_us").get<double>(), units::us);
    r.p = j.value("p", 1.0);
    if (j.contains("d_nv_nm") && !j.at("d_nv_nm").is_null()) r.d_nv_nm = j.at("d_nv_nm").get<double>();
    r.b0 = from_unit(j.value("b0_mt", 0.0), units::mT);
    r.notes = j.value("notes", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("NV record: ") + e.what());
  }
  r.validate();
  return r;
}

std::string encode_records(const std::vector<NvRecord>& records) {
  std::string out;
  for (const auto& r : records) out += record_to_json(r).dump() + "\n";
  return out;
}

std::vector<NvRecord> decode_records(std::string_view jsonl) {
  std::vector<NvRecord> out;
  for (auto line : split(jsonl, '\n')) {
    line = trim(line);
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Format, std::string("NV record line: ") + e.what());
    }
    out.push_back(record_from_json(j));
  }
  return out;
}

std::string encode_histogram(const DepthHistogram& h) {
  CsvTable t;
  t.kind = "histogram";
  t.meta["mask_nm"] = format_double(h.mask_thickness_nm);
  t.meta["yield"] = format_double(h.yield);
  t.meta["determined"] = format_double(h.determined_count);
  t.meta["undetermined"] = format_double(h.undetermined_count);
  t.meta["undetermined_depth_nm"] = format_double(h.undetermined_center_nm) + "+-" + format_double(h.undetermined_halfwidth_nm);
  t.header = {"bin_center_nm", "mass", "mass_err", "overlay_density"};
  for (const auto& b : h.bins) {
    t.rows.push_back({format_double(b.center_nm), format_double(b.mass), format_double(b.mass_err),
                      format_double(b.overlay_density)});
  }
  return write_csv(t);
}

std::string encode_bound(const AccessibleRegion& region) {
  CsvTable t;
  t.kind = "bound";
  t.meta["t2_floor_us"] = format_double(to_unit(region.t2_floor, units::us));
  t.meta["contrast"] = format_double(region.photon.contrast);
  t.meta["n0"] = format_double(region.photon.n0);
  t.meta["rho_m3"] = format_double(region.rho);
  t.header = {"d_nm", "t2_limit_us"};
  for (std::size_t i = 0; i < region.depth.size(); ++i) {
    t.rows.push_back({format_double(to_unit(region.depth[i], units::nm)),
                      format_double(to_unit(region.t2_limit[i], units::us))});
  }
  return write_csv(t);
}

namespace {

nlohmann::json parameters_to_json(const std::vector<FitParameter>& list) {
  auto out = nlohmann::json::array();
  for (const auto& p : list) {
    out.push_back({{"name", p.name}, {"value", p.value}, {"std_error", p.std_error}, {"ci95", {p.ci_low, p.ci_high}}});
  }
  return out;
}

double number_or_inf(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

std::vector<FitParameter> parameters_from_json(const nlohmann::json& j) {
  std::vector<FitParameter> out;
  for (const auto& e : j) {
    FitParameter p;
    p.name = e.at("name").get<std::string>();
    p.value = e.at("value").get<double>();
    p.std_error = number_or_inf(e.at("std_error"));
    p.ci_low = e.at("ci95").at(0).is_null() ? -std::numeric_limits<double>::infinity() : e.at("ci95").at(0).get<double>();
    p.ci_high = number_or_inf(e.at("ci95").at(1));
    out.push_back(p);
  }
  return out;
}

}  // namespace

nlohmann::json fit_to_json(const FitResult& fit) {
  return {
      {"format", "nvdepth-fit"},
      {"version", kFormatVersion},
      {"model", fit.model},
      {"converged", fit.converged},
      {"iterations", fit.iterations},
      {"stop_reason", fit.stop_reason},
      {"chi2", fit.chi2},
      {"residual_norm", fit.residual_norm},
      {"parameters", parameters_to_json(fit.parameters)},
      {"frozen", parameters_to_json(fit.frozen)},
      {"derived", parameters_to_json(fit.derived)},
      {"flags", fit.flags},
      {"residuals", fit.residuals},
  };
}

FitResult fit_from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != kFormatVersion) throw Error(ErrorCode::VersionMismatch, "unsupported fit report version");
  FitResult fit;
  try {
    fit.model = j.at("model").get<std::string>();
    fit.converged = j.at("converged").get<bool>();
    fit.iterations = j.at("iterations").get<int>();
    fit.stop_reason = j.at("stop_reason").get<std::string>();
    fit.chi2 = j.at("chi2").get<double>();
    fit.residual_norm = j.at("residual_norm").get<double>();
    fit.parameters = parameters_from_json(j.at("parameters"));
    fit.frozen = parameters_from_json(j.at("frozen"));
    fit.derived = parameters_from_json(j.at("derived"));
    fit.flags = j.at("flags").get<std::vector<std::string>>();
    fit.residuals = j.at("residuals").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("fit report: ") + e.what());
  }
  return fit;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::array<char, 32> buf{};
  std::strftime(buf.data(), buf.size(), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf.data();
}

}  // namespace nvdepth::io
