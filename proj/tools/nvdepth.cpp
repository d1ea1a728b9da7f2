// nvdepth: command-line front end for the NV depth toolkit.
#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>

#include "json.hpp"
#include "nvdepth/error.hpp"
#include "nvdepth/estimation.hpp"
#include "nvdepth/implant.hpp"
#include "nvdepth/io.hpp"
#include "nvdepth/models.hpp"
#include "nvdepth/noise.hpp"
#include "nvdepth/profile.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
using namespace nvdepth;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  std::string out;
  std::string manifest;
};

struct Run {
  std::string command;
  CLI::App* app = nullptr;
  std::function<json()> action;
  std::vector<std::string> outputs;
};

Globals g;
Run run;

void bind(CLI::App* sub, std::string command, std::function<json()> action) {
  sub->callback([sub, command = std::move(command), action = std::move(action)] {
    run.command = command;
    run.app = sub;
    run.action = action;
  });
}

void emit(const std::string& path, const std::string& contents) {
  io::write_file(path, contents);
  run.outputs.push_back(path);
}

std::string require_out(const char* what) {
  if (g.out.empty()) throw Error(ErrorCode::InvalidArgument, std::string(what) + " needs --out");
  return g.out;
}

// Resolved configuration of a subcommand, defaults included.
json echo_config(const CLI::App* app) {
  json config = json::object();
  for (const auto* cur = app; cur != nullptr; cur = cur->get_parent()) {
    for (const CLI::Option* opt : cur->get_options()) {
      if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
      std::string name = opt->get_name();
      while (!name.empty() && name.front() == '-') name.erase(name.begin());
      if (config.contains(name)) continue;
      if (opt->count() > 0) {
        const auto& r = opt->results();
        config[name] = r.size() == 1 ? json(r.front()) : json(r);
      } else {
        config[name] = opt->get_default_str();
      }
    }
  }
  return config;
}

json write_trace(const DecayTrace& trace) {
  emit(require_out("synth"), io::encode_trace(trace));
  return json{{"points", trace.size()}, {"sequence", sequence_label(trace)}};
}

void photon_options(CLI::App* sub, PhotonModel& photon) {
  sub->add_option("--n0", photon.n0, "Accumulated mS=0 photon counts")->check(CLI::PositiveNumber);
  sub->add_option("--contrast", photon.contrast, "Readout contrast c")->check(CLI::Range(0.0, 1.0));
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return out;
}

std::vector<implant::MaterialLayer> build_stack(double mask_nm, double sio2_density, const std::string& materials,
                                                const std::string& mask_label, const std::string& substrate_label) {
  std::string db_path = materials;
  if (db_path.empty()) {
    if (const char* env = std::getenv("NVDEPTH_MATERIALS")) db_path = env;
  }
  if (db_path.empty() && mask_label == "SiO2" && substrate_label == "diamond") {
    return implant::standard_stack(mask_nm, sio2_density);
  }
  std::vector<implant::MaterialLayer> db;
  if (!db_path.empty()) db = implant::load_material_database(db_path);
  std::vector<implant::MaterialLayer> stack;
  if (mask_nm > 0.0) {
    auto mask = implant::find_material(db, mask_label);
    if (mask_label == "SiO2" && db_path.empty()) mask.density_g_cm3 = sio2_density;
    mask.thickness_nm = mask_nm;
    stack.push_back(mask);
  }
  auto substrate = implant::find_material(db, substrate_label);
  substrate.thickness_nm = 0.0;
  stack.push_back(substrate);
  return stack;
}

void add_implant(CLI::App& app) {
  static implant::IonTransportScenario s;
  static implant::TransportOptions opt;
  static double sio2_density = 2.2;
  static std::string materials, mask_label = "SiO2", substrate_label = "diamond";
  auto* sub = app.add_subcommand("implant", "Monte Carlo depth profile of implanted ions");
  sub->add_option("--energy-kev", s.energy_kev, "Ion energy")->check(CLI::PositiveNumber);
  sub->add_option("--mask-nm", s.mask_thickness_nm, "Mask thickness")->check(CLI::NonNegativeNumber);
  sub->add_option("--dose-cm2", s.dose_cm2, "Areal dose")->check(CLI::PositiveNumber);
  sub->add_option("--ions", s.n_ions, "Number of simulated ions")->check(CLI::PositiveNumber);
  sub->add_option("--ion-z", s.ion_z, "Projectile atomic number")->check(CLI::PositiveNumber);
  sub->add_option("--ion-mass-u", s.ion_mass_u, "Projectile mass")->check(CLI::PositiveNumber);
  sub->add_option("--incidence-deg", s.incidence_deg, "Angle from the surface normal")->check(CLI::Range(0.0, 89.0));
  sub->add_option("--sio2-density-g-cm3", sio2_density, "Density of the built-in SiO2 mask")->check(CLI::PositiveNumber);
  sub->add_option("--bin-nm", opt.bin_width_nm, "Histogram bin width")->check(CLI::PositiveNumber);
  sub->add_option("--cutoff-ev", opt.cutoff_ev, "Stopping energy")->check(CLI::PositiveNumber);
  sub->add_option("--workers", opt.workers, "Worker threads (0 = all cores)");
  sub->add_option("--materials", materials, "Material database JSON (default: $NVDEPTH_MATERIALS)");
  sub->add_option("--mask-material", mask_label, "Mask material label");
  sub->add_option("--substrate-material", substrate_label, "Substrate material label");
  bind(sub, "implant", [] {
    s.seed = g.seed;
    const auto stack = build_stack(s.mask_thickness_nm, sio2_density, materials, mask_label, substrate_label);
    const auto profile = implant::transport(s, stack, opt);
    if (!g.out.empty()) {
      emit(g.out, io::encode_profile(profile));
      emit(g.out + ".meta.json", io::profile_sidecar(profile, s).dump(2) + "\n");
    }
    return json{{"diamond_total", profile.diamond_total()},
                {"mask_stopped", profile.mask_stopped},
                {"reflected", profile.reflected},
                {"n_ions", profile.n_ions},
                {"peak_bin_nm", static_cast<double>(profile.peak_bin()) * profile.bin_width_nm},
                {"fraction_within_10nm", implant::substrate_fraction_within(profile, 10.0)},
                {"implanted_areal_density_cm2", profile.implanted_areal_density_cm2()}};
  });
}

void add_synth(CLI::App& app) {
  auto* synth = app.add_subcommand("synth", "Synthetic traces with photon shot noise");
  synth->require_subcommand(1);
  static PhotonModel photon;
  static std::int64_t shots = 1;
  static double t2_us = 27.1, p = 0.98;

  auto common = [](CLI::App* sub) {
    photon_options(sub, photon);
    sub->add_option("--shots", shots, "Repetitions accumulated per point")->check(CLI::PositiveNumber);
    sub->add_option("--t2-us", t2_us, "Echo coherence time")->check(CLI::PositiveNumber);
    sub->add_option("--p", p, "Stretch exponent")->check(CLI::Range(0.3, 3.0));
  };

  {
    static double tmax_us = 100.0;
    static int points = 30, n = 1;
    auto* sub = synth->add_subcommand("echo", "Stretched-exponential echo decay");
    common(sub);
    sub->add_option("--tmax-us", tmax_us, "Longest total sequence time")->check(CLI::PositiveNumber);
    sub->add_option("--points", points, "Number of time points")->check(CLI::Range(2, 1000000));
    sub->add_option("--n", n, "Pi pulses (1 = Hahn echo, otherwise XY8-N)")->check(CLI::PositiveNumber);
    bind(sub, "synth echo", [] {
      const DecayModel env{t2_us * units::us, p};
      env.validate();
      const auto times = linspace(tmax_us * units::us / points, tmax_us * units::us, points);
      auto trace = synthesize_trace(EchoTruth{env}, times, photon, shots, g.seed);
      if (n > 1) {
        trace.kind = SequenceKind::Xy;
        trace.xy_order = 8;
        trace.n_pulses = n;
      }
      return write_trace(trace);
    });
  }
  {
    static double d_nm = 17.4, rho = 6e28, b0_mt = 23.2, span_khz = 20.0;
    static int n = 128, points = 801;
    static std::string trace_out;
    auto* sub = synth->add_subcommand("nmr", "Normalized proton NMR spectrum");
    common(sub);
    sub->add_option("--d-nm", d_nm, "NV depth")->check(CLI::PositiveNumber);
    sub->add_option("--rho", rho, "Proton density, m^-3")->check(CLI::PositiveNumber);
    sub->add_option("--b0-mt", b0_mt, "Static field")->check(CLI::PositiveNumber);
    sub->add_option("--n", n, "Pi pulses")->check(CLI::PositiveNumber);
    sub->add_option("--span-khz", span_khz, "Half span around the Larmor frequency")->check(CLI::PositiveNumber);
    sub->add_option("--points", points, "Spectral points")->check(CLI::Range(3, 1000000));
    sub->add_option("--trace-out", trace_out, "Also write the raw XY trace");
    bind(sub, "synth nmr", [] {
      NmrTruth truth{DecayModel{t2_us * units::us, p, ContrastTerm::Nmr}, d_nm * units::nm, rho, n, b0_mt * units::mT};
      truth.envelope.validate();
      const double f_n = proton_larmor(PhysicalConstants::standard(), truth.b0);
      const auto times = nmr_time_grid(f_n, span_khz * units::kHz, points, n);
      auto trace = synthesize_trace(truth, times, photon, shots, g.seed);
      trace.kind = SequenceKind::Xy;
      trace.xy_order = 16;
      trace.n_pulses = n;
      if (!trace_out.empty()) emit(trace_out, io::encode_trace(trace));
      const auto spectrum = normalize_nmr_trace(trace, truth.envelope);
      emit(require_out("synth nmr"), io::encode_nmr_spectrum(spectrum));
      return json{{"points", spectrum.size()}, {"larmor_mhz", f_n / units::MHz},
                  {"resonant_tau_ns", resonant_tau(2.0 * std::numbers::pi * f_n) / units::ns}};
    });
  }
  {
    static double t2_deer_us = 13.1, q = 1.91, tmax_us = 40.0;
    static int points = 30;
    auto* sub = synth->add_subcommand("deer", "Echo decay with an additional DEER factor");
    common(sub);
    sub->add_option("--t2-deer-us", t2_deer_us, "DEER decay time")->check(CLI::PositiveNumber);
    sub->add_option("--q", q, "DEER stretch exponent")->check(CLI::PositiveNumber);
    sub->add_option("--tmax-us", tmax_us, "Longest total sequence time")->check(CLI::PositiveNumber);
    sub->add_option("--points", points, "Number of time points")->check(CLI::Range(2, 1000000));
    bind(sub, "synth deer", [] {
      const DeerTruth truth{DecayModel{t2_us * units::us, p, ContrastTerm::Deer}, t2_deer_us * units::us, q};
      truth.echo.validate();
      const auto times = linspace(tmax_us * units::us / points, tmax_us * units::us, points);
      auto trace = synthesize_trace(truth, times, photon, shots, g.seed);
      trace.kind = SequenceKind::Deer;
      return write_trace(trace);
    });
  }
  {
    static std::string channel = "sq";
    static double t1_ms = 1.06, tmax_ms = 5.0;
    static int points = 30;
    auto* sub = synth->add_subcommand("relax", "Relaxation difference signal");
    photon_options(sub, photon);
    sub->add_option("--shots", shots, "Repetitions accumulated per point")->check(CLI::PositiveNumber);
    sub->add_option("--channel", channel, "sq or dq")->check(CLI::IsMember({"sq", "dq"}));
    sub->add_option("--t1-ms", t1_ms, "Relaxation time")->check(CLI::PositiveNumber);
    sub->add_option("--tmax-ms", tmax_ms, "Longest wait time")->check(CLI::PositiveNumber);
    sub->add_option("--points", points, "Number of time points")->check(CLI::Range(2, 1000000));
    bind(sub, "synth relax", [] {
      const bool sq = channel == "sq";
      const RelaxTruth truth{sq ? RelaxChannel::SingleQuantum : RelaxChannel::DoubleQuantum, t1_ms * units::ms};
      const auto times = linspace(tmax_ms * units::ms / points, tmax_ms * units::ms, points);
      auto trace = synthesize_trace(truth, times, photon, shots, g.seed);
      trace.kind = sq ? SequenceKind::RelaxSq : SequenceKind::RelaxDq;
      return write_trace(trace);
    });
  }
}

void write_fit(const json& report) {
  if (!g.out.empty()) emit(g.out, report.dump(2) + "\n");
}

void add_fit(CLI::App& app) {
  auto* fit = app.add_subcommand("fit", "Least-squares fits");
  fit->require_subcommand(1);
  static std::string in;
  {
    auto* sub = fit->add_subcommand("echo", "Fit T2 and p of a decay trace");
    sub->add_option("--in", in, "Trace CSV")->required();
    bind(sub, "fit echo", [] {
      const auto report = io::fit_to_json(fit_decay(io::decode_trace(io::read_file(in))));
      write_fit(report);
      return report;
    });
  }
  {
    static NmrFitConfig cfg;
    static double b0_mt = 23.2, t2_us = 27.1;
    static std::optional<double> n0, contrast;
    auto* sub = fit->add_subcommand("nmr", "Fit the NV depth of a normalized NMR spectrum");
    sub->add_option("--in", in, "NMR spectrum CSV")->required();
    sub->add_option("--b0-mt", b0_mt, "Static field")->check(CLI::PositiveNumber);
    sub->add_option("--rho", cfg.rho, "Proton density, m^-3")->check(CLI::PositiveNumber);
    sub->add_option("--n", cfg.n_pulses, "Pi pulses")->check(CLI::PositiveNumber);
    sub->add_option("--t2-us", t2_us, "Echo T2 used for normalization")->check(CLI::PositiveNumber);
    sub->add_option("--p", cfg.p, "Echo stretch exponent")->check(CLI::Range(0.3, 3.0));
    sub->add_option("--n0", n0, "Photon counts for shot-noise weights")->check(CLI::PositiveNumber);
    sub->add_option("--contrast", contrast, "Readout contrast for shot-noise weights")->check(CLI::Range(0.0, 1.0));
    bind(sub, "fit nmr", [] {
      cfg.b0 = b0_mt * units::mT;
      cfg.t2 = t2_us * units::us;
      if (n0 || contrast) cfg.photon = PhotonModel{n0.value_or(5e5), contrast.value_or(0.2)};
      const auto report = io::fit_to_json(fit_nmr_depth(io::decode_nmr_spectrum(io::read_file(in)), cfg));
      write_fit(report);
      return report;
    });
  }
  {
    auto* sub = fit->add_subcommand("dd", "Fit T2 scaling with pulse number");
    sub->add_option("--in", in, "CSV with n,t2_us[,sigma_us]")->required();
    bind(sub, "fit dd", [] {
      const auto report = io::fit_to_json(fit_dd_scaling(io::decode_dd_points(io::read_file(in))));
      write_fit(report);
      return report;
    });
  }
}

void add_noise(CLI::App& app) {
  auto* noise = app.add_subcommand("noise", "Noise spectroscopy");
  noise->require_subcommand(1);
  {
    static std::vector<std::string> inputs;
    static double epsilon = 0.02;
    auto* sub = noise->add_subcommand("decompose", "Spectral decomposition of decoupling traces");
    sub->add_option("--in", inputs, "Trace CSV (repeatable)")->required();
    sub->add_option("--epsilon", epsilon, "Drop points with 2P0-1 above 1-epsilon")->check(CLI::Range(0.0, 0.999));
    bind(sub, "noise decompose", [] {
      std::vector<DecayTrace> traces;
      for (const auto& path : inputs) traces.push_back(io::decode_trace(io::read_file(path)));
      const auto spectrum = spectral_decomposition(traces, epsilon);
      emit(require_out("noise decompose"), io::encode_noise_spectrum(spectrum));
      return json{{"points", spectrum.size()}};
    });
  }
  {
    static std::string in;
    auto* sub = noise->add_subcommand("lorentzian", "Lorentzian fit of a noise spectrum");
    sub->add_option("--in", in, "Spectrum CSV")->required();
    bind(sub, "noise lorentzian", [] {
      const auto result = lorentzian_fit(io::decode_noise_spectrum(io::read_file(in)));
      json report = io::fit_to_json(result.fit);
      report["white_degenerate"] = result.white_degenerate;
      report["coupling_sq_v2_m2"] = result.noise.coupling_sq;
      report["tau_c_s"] = result.noise.tau_c;
      report["tau_c_upper_s"] = result.tau_c_upper ? json(*result.tau_c_upper) : json(nullptr);
      write_fit(report);
      return report;
    });
  }
}

void add_relax(CLI::App& app) {
  auto* relax = app.add_subcommand("relax", "SQ/DQ relaxation rates");
  relax->require_subcommand(1);
  static double t1sq_ms = 1.06, t1dq_ms = 1.16;
  auto t1_options = [](CLI::App* sub) {
    sub->add_option("--t1sq-ms", t1sq_ms, "Single-quantum T1")->check(CLI::PositiveNumber);
    sub->add_option("--t1dq-ms", t1dq_ms, "Double-quantum T1")->check(CLI::PositiveNumber);
  };
  auto rates_json = [](const RelaxationRates& r) {
    return json{{"omega_hz", r.omega_rate}, {"gamma_hz", r.gamma_rate}, {"t1sq_ms", r.t1_sq / units::ms},
                {"t1dq_ms", r.t1_dq / units::ms}};
  };
  {
    auto* sub = relax->add_subcommand("rates", "Omega and gamma from the two T1 values");
    t1_options(sub);
    bind(sub, "relax rates", [rates_json] {
      const json out = rates_json(rates_from_t1(t1sq_ms * units::ms, t1dq_ms * units::ms));
      if (!g.out.empty()) emit(g.out, out.dump(2) + "\n");
      return out;
    });
  }
  {
    static double b0_mt = 23.2;
    static std::optional<double> f_sq_mhz, f_dq_mhz;
    auto* sub = relax->add_subcommand("psd", "Convert the rates to electric-field spectral densities");
    t1_options(sub);
    sub->add_option("--b0-mt", b0_mt, "Static field for nominal probe frequencies")->check(CLI::NonNegativeNumber);
    sub->add_option("--f-sq-mhz", f_sq_mhz, "Measured mS=0<->-1 frequency")->check(CLI::PositiveNumber);
    sub->add_option("--f-dq-mhz", f_dq_mhz, "Measured mS=-1<->+1 separation")->check(CLI::PositiveNumber);
    bind(sub, "relax psd", [rates_json] {
      const auto rates = rates_from_t1(t1sq_ms * units::ms, t1dq_ms * units::ms);
      std::optional<double> fsq, fdq;
      if (f_sq_mhz) fsq = *f_sq_mhz * units::MHz;
      if (f_dq_mhz) fdq = *f_dq_mhz * units::MHz;
      const FieldConfig field(b0_mt * units::mT, PhysicalConstants::standard(), fsq, fdq);
      const auto psd = rates_to_psd(rates, field);
      json out = rates_json(rates);
      out["sq_psd_v2m2hz"] = psd.sq_psd;
      out["sq_frequency_mhz"] = psd.sq_frequency / units::MHz;
      out["dq_psd_v2m2hz"] = psd.dq_psd;
      out["dq_frequency_mhz"] = psd.dq_frequency / units::MHz;
      if (!g.out.empty()) emit(g.out, out.dump(2) + "\n");
      return out;
    });
  }
}

void add_bound(CLI::App& app) {
  auto* bound = app.add_subcommand("bound", "NMR accessibility bound");
  bound->require_subcommand(1);
  static PhotonModel photon;
  static double rho = 6e28;
  {
    static double d_min = 1.0, d_max = 100.0;
    static int points = 100;
    auto* sub = bound->add_subcommand("accessible", "T2 limit versus depth");
    photon_options(sub, photon);
    sub->add_option("--rho", rho, "Proton density, m^-3")->check(CLI::PositiveNumber);
    sub->add_option("--d-min-nm", d_min, "Shallowest depth")->check(CLI::PositiveNumber);
    sub->add_option("--d-max-nm", d_max, "Deepest depth")->check(CLI::PositiveNumber);
    sub->add_option("--points", points, "Depth samples")->check(CLI::Range(1, 1000000));
    bind(sub, "bound accessible", [] {
      auto grid = linspace(d_min * units::nm, d_max * units::nm, points);
      const auto region = accessible_region(photon, rho, grid);
      const std::string text = io::encode_bound(region);
      if (!g.out.empty()) {
        emit(g.out, text);
        return json{{"points", region.depth.size()}, {"t2_floor_us", region.t2_floor / units::us}};
      }
      std::cout << text;
      return json();
    });
  }
  {
    static double t2_us = 27.1, d_nm = 17.4;
    auto* sub = bound->add_subcommand("classify", "Classify a (T2, depth) point");
    photon_options(sub, photon);
    sub->add_option("--rho", rho, "Proton density, m^-3")->check(CLI::PositiveNumber);
    sub->add_option("--t2-us", t2_us, "Echo T2")->check(CLI::PositiveNumber);
    sub->add_option("--d-nm", d_nm, "NV depth")->check(CLI::PositiveNumber);
    bind(sub, "bound classify", [] {
      const double limit = t2_limit(d_nm * units::nm, photon, rho);
      const bool ok = is_accessible(t2_us * units::us, d_nm * units::nm, photon, rho);
      return json{{"accessible", ok}, {"t2_limit_us", limit / units::us}, {"t2_floor_us", kT2Floor / units::us}};
    });
  }
}

void add_profile(CLI::App& app) {
  auto* profile = app.add_subcommand("profile", "Population-level depth analysis");
  profile->require_subcommand(1);
  {
    static double areal = 0.0, implanted = 1e11;
    auto* sub = profile->add_subcommand("yield", "NV yield from areal densities");
    sub->add_option("--areal-cm2", areal, "Observed NV areal density")->required()->check(CLI::NonNegativeNumber);
    sub->add_option("--implanted-cm2", implanted, "Implanted areal density")->check(CLI::PositiveNumber);
    bind(sub, "profile yield", [] { return json{{"yield", nv_yield(areal, implanted)}}; });
  }
  {
    static std::string records_path;
    static std::vector<std::string> groups;
    auto* sub = profile->add_subcommand("histogram", "Depth histograms per mask thickness");
    sub->add_option("--records", records_path, "NV records (JSON lines)")->required();
    sub->add_option("--group", groups, "MASK_NM:YIELD[:PROFILE_CSV] (repeatable)")->required();
    bind(sub, "profile histogram", [] {
      const auto records = io::decode_records(io::read_file(records_path));
      std::vector<HistogramGroup> spec;
      for (const auto& text : groups) {
        std::vector<std::string> parts;
        std::stringstream ss(text);
        for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
        if (parts.size() < 2 || parts.size() > 3) throw Error(ErrorCode::InvalidArgument, "bad --group " + text);
        HistogramGroup grp;
        grp.mask_thickness_nm = io::parse_double(parts[0]);
        grp.yield = io::parse_double(parts[1]);
        if (parts.size() == 3) {
          grp.mc_profile = io::decode_profile(io::read_file(parts[2]),
                                              json::parse(io::read_file(parts[2] + ".meta.json")));
        }
        spec.push_back(std::move(grp));
      }
      const auto histograms = assemble_histograms(records, spec);
      json summary = json::array();
      const std::string out = require_out("profile histogram");
      for (const auto& h : histograms) {
        std::string path = out;
        if (histograms.size() > 1) {
          const fs::path p(out);
          path = (p.parent_path() / (p.stem().string() + ".t" + io::format_double(h.mask_thickness_nm) +
                                     p.extension().string()))
                     .string();
        }
        emit(path, io::encode_histogram(h));
        summary.push_back({{"mask_nm", h.mask_thickness_nm},
                           {"determined", h.determined_count},
                           {"undetermined", h.undetermined_count},
                           {"total_mass", h.total_mass()},
                           {"path", path}});
      }
      return json{{"groups", summary}};
    });
  }
}

void add_deer(CLI::App& app) {
  auto* deer = app.add_subcommand("deer", "DEER decay analysis");
  deer->require_subcommand(1);
  static double beta = std::numbers::pi;
  {
    static std::string in;
    static DeerFitConfig cfg;
    static double t2_us = 16.9;
    auto* sub = deer->add_subcommand("fit", "Fit T2,DEER and q with the echo frozen");
    sub->add_option("--in", in, "DEER trace CSV")->required();
    sub->add_option("--t2-us", t2_us, "Frozen echo T2")->check(CLI::PositiveNumber);
    sub->add_option("--p", cfg.p, "Frozen echo stretch exponent")->check(CLI::Range(0.3, 3.0));
    sub->add_option("--beta-rad", beta, "Drive flip angle")->check(CLI::Range(0.0, std::numbers::pi));
    bind(sub, "deer fit", [] {
      cfg.t2 = t2_us * units::us;
      cfg.beta = beta;
      const auto report = io::fit_to_json(fit_deer(io::decode_trace(io::read_file(in)), cfg));
      write_fit(report);
      return report;
    });
  }
  {
    static double tid_us = 12.0;
    auto* sub = deer->add_subcommand("density", "Driven-spin density from the instantaneous-diffusion time");
    sub->add_option("--tid-us", tid_us, "Instantaneous-diffusion time")->check(CLI::PositiveNumber);
    sub->add_option("--beta-rad", beta, "Drive flip angle")->check(CLI::Range(0.0, std::numbers::pi));
    bind(sub, "deer density", [] {
      return json{{"n_d_cm3", defect_density_from_tid(tid_us * units::us, beta) / units::per_cm3}};
    });
  }
}

void print_error(std::string_view code, const std::string& message) {
  std::cerr << json{{"error", code}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NV-center implantation, decoherence and depth inference toolkit", "nvdepth"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--seed", g.seed, "RNG seed");
  app.add_option("--out", g.out, "Primary output path");
  app.add_option("--manifest", g.manifest, "Manifest path (default: <out>.manifest.json)");

  add_implant(app);
  add_synth(app);
  add_fit(app);
  add_noise(app);
  add_relax(app);
  add_bound(app);
  add_profile(app);
  add_deer(app);
  for (auto* sub : app.get_subcommands({})) {
    sub->fallthrough();
    for (auto* leaf : sub->get_subcommands({})) leaf->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }
  if (!run.action) {
    print_error("usage", "no runnable subcommand given");
    return 2;
  }

  try {
    json result = run.action();
    json manifest = {
        {"tool", "nvdepth"},
        {"format_version", io::kFormatVersion},
        {"command", run.command},
        {"config", echo_config(run.app)},
        {"outputs", run.outputs},
        {"created_utc", io::utc_timestamp()},
    };
    std::string manifest_path = g.manifest;
    if (manifest_path.empty() && !g.out.empty()) manifest_path = g.out + ".manifest.json";
    if (!manifest_path.empty()) {
      io::write_file(manifest_path, manifest.dump(2) + "\n");
    }
    if (!result.is_null()) {
      if (manifest_path.empty()) result["manifest"] = manifest;
      std::cout << result.dump(2) << "\n";
    }
  } catch (const Error& e) {
    print_error(to_string(e.code()), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}
