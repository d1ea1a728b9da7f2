#include "nvdepth/implant.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "nvdepth/error.hpp"

namespace nvdepth::implant {

namespace {

constexpr double kBohrRadiusA = 0.52917721;  // Angstrom
constexpr double kE2 = 14.399645;            // e^2 / (4 pi eps0), eV Angstrom
constexpr double kAvogadroScaled = 0.602214076;  // N_A * 1e-24: g/cm^3 / (g/mol) -> atoms/A^3

// ZBL universal screening, sum of four exponentials.
constexpr std::array<double, 4> kZblCoef = {0.18175, 0.50986, 0.28022, 0.028171};
constexpr std::array<double, 4> kZblExp = {3.1998, 0.94229, 0.40290, 0.20162};

// MAGIC fit constants for the universal potential.
constexpr double kMagicC1 = 0.99229;
constexpr double kMagicC2 = 0.011615;
constexpr double kMagicC3 = 0.0071222;
constexpr double kMagicC4 = 14.813;
constexpr double kMagicC5 = 9.3066;

// V(x) = phi(x)/x and dV/dx in reduced units.
void reduced_potential(double x, double& v, double& dv) {
  double sum = 0.0;
  double weighted = 0.0;
  for (std::size_t i = 0; i < kZblCoef.size(); ++i) {
    const double term = kZblCoef[i] * std::exp(-kZblExp[i] * x);
    sum += term;
    weighted += kZblExp[i] * term;
  }
  v = sum / x;
  dv = -(v + weighted) / x;
}

// Distance of closest approach: root of 1 - V(x)/eps - b^2/x^2 = 0.
double closest_approach(double epsilon, double b) {
  double x = b;
  double guess = -2.7 * std::log(epsilon * b);
  if (guess >= b) {
    x = guess;
    guess = -2.7 * std::log(epsilon * guess);
    if (guess >= b) x = guess;
  }
  for (int iter = 0; iter < 100; ++iter) {
    double v = 0.0;
    double dv = 0.0;
    reduced_potential(x, v, dv);
    const double f = b * b / x + v * x / epsilon - x;
    const double df = -b * b / (x * x) + (v + dv * x) / epsilon - 1.0;
    const double step = f / df;
    double next = x - step;
    if (!(next > 0.0)) next = 0.5 * x;
    if (std::abs(next - x) <= 1e-7 * x) return next;
    x = next;
  }
  return x;
}

struct ElementData {
  double screening_length;  // Angstrom
  double reduced_energy_factor;  // epsilon per eV
  double transfer_factor;  // 4 M1 M2 / (M1 + M2)^2
  double mass_ratio;  // M1 / M2
  double fraction;
};

struct PreparedLayer {
  double z_top = 0.0;  // Angstrom
  double z_bottom = 0.0;  // Angstrom; infinity for the substrate
  double atomic_density = 0.0;  // atoms / A^3
  double flight_length = 0.0;  // Angstrom
  double p_max = 0.0;  // Angstrom
  double lindhard_k = 0.0;  // eV^0.5 A^2, atom-fraction weighted
  std::vector<ElementData> elements;
  std::vector<double> cumulative_fraction;
};

PreparedLayer prepare(const MaterialLayer& layer, int z1, double m1, double z_top) {
  layer.validate();
  PreparedLayer out;
  out.z_top = z_top;
  out.z_bottom = layer.semi_infinite() ? std::numeric_limits<double>::infinity()
                                       : z_top + 10.0 * layer.thickness_nm;
  double mean_mass = 0.0;
  for (const auto& atom : layer.atoms) mean_mass += atom.fraction * atom.mass_u;
  out.atomic_density = layer.density_g_cm3 * kAvogadroScaled / mean_mass;
  out.flight_length = std::cbrt(1.0 / out.atomic_density);
  out.p_max = 1.0 / std::sqrt(std::numbers::pi * out.atomic_density * out.flight_length);

  const double z1d = z1;
  double cumulative = 0.0;
  for (const auto& atom : layer.atoms) {
    const double z2 = atom.z;
    const double m2 = atom.mass_u;
    ElementData e{};
    e.screening_length = 0.8854 * kBohrRadiusA / (std::pow(z1d, 0.23) + std::pow(z2, 0.23));
    e.reduced_energy_factor = e.screening_length * m2 / (z1d * z2 * kE2 * (m1 + m2));
    e.transfer_factor = 4.0 * m1 * m2 / ((m1 + m2) * (m1 + m2));
    e.mass_ratio = m1 / m2;
    e.fraction = atom.fraction;
    out.elements.push_back(e);
    cumulative += atom.fraction;
    out.cumulative_fraction.push_back(cumulative);

    // Lindhard-Scharff velocity-proportional electronic stopping.
    const double k = 1.212 * std::pow(z1d, 7.0 / 6.0) * z2 /
                     (std::pow(std::pow(z1d, 2.0 / 3.0) + std::pow(z2, 2.0 / 3.0), 1.5) * std::sqrt(m1));
    out.lindhard_k += atom.fraction * k;
  }
  out.cumulative_fraction.back() = 1.0;
  return out;
}

enum class Fate { Substrate, Mask, Reflected };

struct IonOutcome {
  Fate fate;
  double depth_below_interface_a;
};

class IonTracker {
 public:
  IonTracker(const std::vector<PreparedLayer>& layers, const IonTransportScenario& scenario,
             double cutoff_ev)
      : layers_(layers), scenario_(scenario), cutoff_ev_(cutoff_ev) {}

  IonOutcome run(std::uint64_t ion_index) const {
    std::mt19937_64 rng(detail::ion_stream_seed(scenario_.seed, ion_index));
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    const double alpha = scenario_.incidence_deg * std::numbers::pi / 180.0;
    double dir[3] = {std::sin(alpha), 0.0, std::cos(alpha)};
    double z = 0.0;
    double energy = scenario_.energy_kev * 1000.0;
    std::size_t layer_index = 0;
    bool first_flight = true;
    const double interface = layers_.size() > 1 ? layers_.back().z_top : 0.0;

    for (std::int64_t step = 0;; ++step) {
      if (step > 10'000'000) {
        throw Error(ErrorCode::TransportFailure, "ion " + std::to_string(ion_index) +
                                                     " exceeded the collision budget");
      }
      const PreparedLayer& layer = layers_[layer_index];
      double flight = layer.flight_length;
      if (first_flight) {
        flight *= uniform(rng);
        first_flight = false;
      }

      // Distance to the layer boundary along the current direction.
      double to_boundary = std::numeric_limits<double>::infinity();
      if (dir[2] > 0.0) to_boundary = (layer.z_bottom - z) / dir[2];
      if (dir[2] < 0.0) to_boundary = (layer.z_top - z) / dir[2];

      if (to_boundary <= flight) {
        energy -= layer.atomic_density * to_boundary * layer.lindhard_k * std::sqrt(energy);
        z += to_boundary * dir[2];
        if (dir[2] < 0.0) {
          if (layer_index == 0) return {Fate::Reflected, 0.0};
          --layer_index;
        } else {
          ++layer_index;
        }
        z = std::clamp(z, layers_[layer_index].z_top, layers_[layer_index].z_bottom);
        first_flight = true;
        if (!(energy > cutoff_ev_)) break;
        continue;
      }

      energy -= layer.atomic_density * flight * layer.lindhard_k * std::sqrt(energy);
      z += flight * dir[2];
      if (!(energy > cutoff_ev_)) break;

      // Pick a collision partner and impact parameter.
      const double pick = uniform(rng);
      std::size_t which = 0;
      while (which + 1 < layer.elements.size() && pick > layer.cumulative_fraction[which]) ++which;
      const ElementData& target = layer.elements[which];
      const double p = layer.p_max * std::sqrt(uniform(rng));
      const double azimuth = 2.0 * std::numbers::pi * uniform(rng);

      const double epsilon = target.reduced_energy_factor * energy;
      const double b = p / target.screening_length;
      const double s2 = detail::magic_sin2_half_angle(epsilon, b);
      energy -= target.transfer_factor * energy * s2;

      const double cos_cm = 1.0 - 2.0 * s2;
      const double sin_cm = 2.0 * std::sqrt(std::max(s2 * (1.0 - s2), 0.0));
      // Lab-frame deflection: tan(psi) = sin(theta) / (cos(theta) + M1/M2).
      const double lab_x = cos_cm + target.mass_ratio;
      const double lab_norm = std::hypot(lab_x, sin_cm);
      if (lab_norm > 0.0) rotate(dir, lab_x / lab_norm, sin_cm / lab_norm, azimuth);

      if (!std::isfinite(energy) || !std::isfinite(z)) {
        std::ostringstream msg;
        msg << "non-finite state for ion " << ion_index << " (E=" << energy << " eV, z=" << z
            << " A, eps=" << epsilon << ", b=" << b << ")";
        throw Error(ErrorCode::TransportFailure, msg.str());
      }
      if (!(energy > cutoff_ev_)) break;
    }

    if (layers_.size() > 1 && layer_index + 1 < layers_.size()) return {Fate::Mask, 0.0};
    return {Fate::Substrate, std::max(z - interface, 0.0)};
  }

 private:
  static void rotate(double dir[3], double cp, double sp, double azimuth) {
    const double ca = std::cos(azimuth);
    const double sa = std::sin(azimuth);
    const double s = std::sqrt(std::max(1.0 - dir[2] * dir[2], 0.0));
    double nx, ny, nz;
    if (s > 1e-8) {
      nx = dir[0] * cp + sp * (dir[0] * dir[2] * ca - dir[1] * sa) / s;
      ny = dir[1] * cp + sp * (dir[1] * dir[2] * ca + dir[0] * sa) / s;
      nz = dir[2] * cp - s * sp * ca;
    } else {
      nx = sp * ca;
      ny = sp * sa;
      nz = (dir[2] >= 0.0 ? 1.0 : -1.0) * cp;
    }
    const double norm = std::sqrt(nx * nx + ny * ny + nz * nz);
    dir[0] = nx / norm;
    dir[1] = ny / norm;
    dir[2] = nz / norm;
  }

  const std::vector<PreparedLayer>& layers_;
  const IonTransportScenario& scenario_;
  double cutoff_ev_;
};

struct Tally {
  std::vector<std::int64_t> counts;
  std::int64_t mask = 0;
  std::int64_t reflected = 0;
};

}  // namespace

namespace detail {

double zbl_screening(double x) {
  double sum = 0.0;
  for (std::size_t i = 0; i < kZblCoef.size(); ++i) sum += kZblCoef[i] * std::exp(-kZblExp[i] * x);
  return sum;
}

double magic_sin2_half_angle(double epsilon, double b) {
  if (epsilon > 10.0) {
    // Rutherford limit with the screening correction.
    const double t = 2.0 * epsilon * b;
    return 1.0 / (1.0 + (1.0 + b * (1.0 + b)) * t * t);
  }
  const double r0 = closest_approach(epsilon, b);
  double v = 0.0;
  double dv = 0.0;
  reduced_potential(r0, v, dv);
  const double rc = -2.0 * (epsilon - v) / dv;
  const double sqe = std::sqrt(epsilon);
  const double beta = (kMagicC2 + sqe) / (kMagicC3 + sqe);
  const double a = 2.0 * epsilon * (1.0 + kMagicC1 / sqe) * std::pow(b, beta);
  const double g = ((kMagicC4 + epsilon) / (kMagicC5 + epsilon)) / (std::sqrt(1.0 + a * a) - a);
  const double delta = a * (r0 - b) / (1.0 + g);
  const double c = (b + delta + rc) / (r0 + rc);
  return std::clamp(1.0 - c * c, 0.0, 1.0);
}

double quadrature_sin2_half_angle(double epsilon, double b) {
  const auto g = [&](double x) {
    return 1.0 - zbl_screening(x) / (x * epsilon) - (b * b) / (x * x);
  };
  // Bracket and bisect the turning point.
  double hi = std::max(b, 1e-3) * 2.0 + 1.0;
  while (g(hi) <= 0.0) hi *= 2.0;
  double lo = 1e-12;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0.0 ? hi : lo) = mid;
  }
  const double x0 = hi;
  constexpr int kNodes = 2000;
  double sum = 0.0;
  for (int j = 1; j <= kNodes; ++j) {
    const double u = std::cos((2.0 * j - 1.0) * std::numbers::pi / (4.0 * kNodes));
    const double gx = g(x0 / u);
    sum += std::sqrt((1.0 - u * u) / gx);
  }
  const double theta = std::numbers::pi * (1.0 - b * sum / (kNodes * x0));
  const double s = std::sin(0.5 * theta);
  return s * s;
}

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t ion_stream_seed(std::uint64_t seed, std::uint64_t ion_index) {
  // Hash the seed first: xor-ing a raw seed into the index only permutes the
  // same set of streams between nearby seeds.
  return splitmix64(splitmix64(seed) + ion_index);
}

}  // namespace detail

void MaterialLayer::validate() const {
  if (!(density_g_cm3 > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "material '" + label + "': density must be positive");
  }
  if (atoms.empty()) throw Error(ErrorCode::InvalidArgument, "material '" + label + "' has no atoms");
  double sum = 0.0;
  for (const auto& atom : atoms) {
    if (atom.z < 1 || !(atom.mass_u > 0.0) || !(atom.fraction > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "material '" + label + "': invalid atom entry");
    }
    sum += atom.fraction;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw Error(ErrorCode::InvalidArgument, "material '" + label + "': atom fractions must sum to 1");
  }
}

MaterialLayer silicon_dioxide(double thickness_nm, double density_g_cm3) {
  return {"SiO2", density_g_cm3, {{14, 28.0855, 1.0 / 3.0}, {8, 15.999, 2.0 / 3.0}}, thickness_nm};
}

MaterialLayer diamond() { return {"diamond", 3.52, {{6, 12.011, 1.0}}, 0.0}; }

std::vector<MaterialLayer> load_material_database(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open material database '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, "material database '" + path + "': " + e.what());
  }
  std::vector<MaterialLayer> out;
  try {
    for (const auto& entry : doc.at("materials")) {
      MaterialLayer m;
      m.label = entry.at("label").get<std::string>();
      m.density_g_cm3 = entry.at("density_g_cm3").get<double>();
      for (const auto& a : entry.at("atoms")) {
        m.atoms.push_back({a.at("z").get<int>(), a.at("mass_u").get<double>(),
                           a.at("fraction").get<double>()});
      }
      m.validate();
      out.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, "material database '" + path + "': " + e.what());
  }
  return out;
}

MaterialLayer find_material(std::span<const MaterialLayer> database, const std::string& label) {
  for (const auto& m : database) {
    if (m.label == label) return m;
  }
  if (label == "SiO2") return silicon_dioxide(0.0);
  if (label == "diamond") return diamond();
  throw Error(ErrorCode::InvalidArgument, "unknown material '" + label + "'");
}

void IonTransportScenario::validate() const {
  if (!(energy_kev > 0.0)) throw Error(ErrorCode::InvalidArgument, "energy must be positive");
  if (!(mask_thickness_nm >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "mask thickness must be non-negative");
  }
  if (n_ions < 1) throw Error(ErrorCode::InvalidArgument, "at least one ion is required");
  if (ion_z < 1 || !(ion_mass_u > 0.0)) throw Error(ErrorCode::InvalidArgument, "invalid projectile");
  if (!(dose_cm2 >= 0.0)) throw Error(ErrorCode::InvalidArgument, "dose must be non-negative");
  if (!(incidence_deg >= 0.0 && incidence_deg < 90.0)) {
    throw Error(ErrorCode::InvalidArgument, "incidence must lie in [0, 90) degrees");
  }
}

std::int64_t DepthProfile::diamond_total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

double DepthProfile::density_cm3(std::size_t k) const {
  if (k >= counts.size() || n_ions == 0) return 0.0;
  return static_cast<double>(counts[k]) / static_cast<double>(n_ions) * dose_cm2 /
         (bin_width_nm * 1e-7);
}

std::vector<double> DepthProfile::densities_cm3() const {
  std::vector<double> out(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) out[k] = density_cm3(k);
  return out;
}

double DepthProfile::implanted_areal_density_cm2() const {
  if (n_ions == 0) return 0.0;
  return static_cast<double>(diamond_total()) / static_cast<double>(n_ions) * dose_cm2;
}

std::size_t DepthProfile::peak_bin() const {
  if (counts.empty()) return 0;
  return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

std::vector<MaterialLayer> standard_stack(double mask_thickness_nm, double sio2_density_g_cm3) {
  return {silicon_dioxide(mask_thickness_nm, sio2_density_g_cm3), diamond()};
}

DepthProfile transport(const IonTransportScenario& scenario, std::span<const MaterialLayer> layers,
                       const TransportOptions& options) {
  scenario.validate();
  if (layers.empty()) throw Error(ErrorCode::InvalidArgument, "layer list is empty");
  if (!layers.back().semi_infinite()) {
    throw Error(ErrorCode::InvalidArgument, "the last layer must be the semi-infinite substrate");
  }
  if (!(options.bin_width_nm > 0.0)) throw Error(ErrorCode::InvalidArgument, "bin width must be positive");

  std::vector<PreparedLayer> prepared;
  double z_top = 0.0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    MaterialLayer layer = layers[i];
    if (i == 0 && layers.size() > 1) layer.thickness_nm = scenario.mask_thickness_nm;
    if (i + 1 < layers.size() && layer.semi_infinite()) {
      if (layer.thickness_nm == 0.0) continue;  // zero-thickness mask
      throw Error(ErrorCode::InvalidArgument, "only the last layer may be semi-infinite");
    }
    prepared.push_back(prepare(layer, scenario.ion_z, scenario.ion_mass_u, z_top));
    z_top = prepared.back().z_bottom;
  }

  const IonTracker tracker(prepared, scenario, options.cutoff_ev);
  const double bin_a = 10.0 * options.bin_width_nm;
  const std::uint64_t n = static_cast<std::uint64_t>(scenario.n_ions);
  unsigned workers = options.workers ? options.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::uint64_t>(workers, n));

  std::vector<Tally> tallies(workers);
  std::vector<std::exception_ptr> failures(workers);
  const auto work = [&](unsigned w) {
    try {
      const std::uint64_t begin = n * w / workers;
      const std::uint64_t end = n * (w + 1) / workers;
      Tally& tally = tallies[w];
      for (std::uint64_t i = begin; i < end; ++i) {
        const IonOutcome outcome = tracker.run(i);
        switch (outcome.fate) {
          case Fate::Reflected: ++tally.reflected; break;
          case Fate::Mask: ++tally.mask; break;
          case Fate::Substrate: {
            const auto bin = static_cast<std::size_t>(outcome.depth_below_interface_a / bin_a);
            if (bin >= tally.counts.size()) tally.counts.resize(bin + 1, 0);
            ++tally.counts[bin];
            break;
          }
        }
      }
    } catch (...) {
      failures[w] = std::current_exception();
    }
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) threads.emplace_back(work, w);
    for (auto& t : threads) t.join();
  }
  for (const auto& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }

  DepthProfile profile;
  profile.bin_width_nm = options.bin_width_nm;
  profile.n_ions = scenario.n_ions;
  profile.dose_cm2 = scenario.dose_cm2;
  for (const Tally& tally : tallies) {
    if (tally.counts.size() > profile.counts.size()) profile.counts.resize(tally.counts.size(), 0);
    for (std::size_t k = 0; k < tally.counts.size(); ++k) profile.counts[k] += tally.counts[k];
    profile.mask_stopped += tally.mask;
    profile.reflected += tally.reflected;
  }
  return profile;
}

double stopped_fraction(const DepthProfile& profile, double depth_max_nm) {
  if (!(depth_max_nm >= 0.0)) throw Error(ErrorCode::InvalidArgument, "depth limit must be non-negative");
  if (profile.n_ions == 0) return 0.0;
  std::int64_t within = 0;
  for (std::size_t k = 0; k < profile.counts.size(); ++k) {
    if (static_cast<double>(k + 1) * profile.bin_width_nm > depth_max_nm + 1e-12) break;
    within += profile.counts[k];
  }
  return static_cast<double>(within) / static_cast<double>(profile.n_ions);
}

double substrate_fraction_within(const DepthProfile& profile, double depth_max_nm) {
  const std::int64_t total = profile.diamond_total();
  if (total == 0) return 0.0;
  return stopped_fraction(profile, depth_max_nm) * static_cast<double>(profile.n_ions) /
         static_cast<double>(total);
}

}  // namespace nvdepth::implant
