#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nvdepth::implant {

/// One atomic species of a target layer. `fraction` is the atom fraction.
struct LayerAtom {
  int z = 0;
  double mass_u = 0.0;
  double fraction = 0.0;
};

/// Amorphous target layer. A non-positive thickness marks the semi-infinite
/// substrate, which must come last.
struct MaterialLayer {
  std::string label;
  double density_g_cm3 = 0.0;
  std::vector<LayerAtom> atoms;
  double thickness_nm = 0.0;

  bool semi_infinite() const { return !(thickness_nm > 0.0); }
  /// Atom fractions sum to one and the density is positive; throws otherwise.
  void validate() const;
};

/// Amorphous SiO2 mask; density defaults to 2.2 g/cm^3.
MaterialLayer silicon_dioxide(double thickness_nm, double density_g_cm3 = 2.2);
/// Semi-infinite diamond substrate, 3.52 g/cm^3.
MaterialLayer diamond();

/// Loads named materials from a JSON document of the form
/// {"materials": [{"label", "density_g_cm3", "atoms": [{"z","mass_u","fraction"}]}]}.
std::vector<MaterialLayer> load_material_database(const std::string& path);
/// Looks `label` up in the database, falling back to the built-in entries.
MaterialLayer find_material(std::span<const MaterialLayer> database, const std::string& label);

struct IonTransportScenario {
  int ion_z = 7;
  double ion_mass_u = 14.003;
  double energy_kev = 10.0;
  double mask_thickness_nm = 0.0;
  double dose_cm2 = 1e11;
  std::int64_t n_ions = 10000;
  std::uint64_t seed = 1;
  double incidence_deg = 0.0;

  void validate() const;
};

/// Stopped-ion distribution below the mask/diamond interface.
struct DepthProfile {
  double bin_width_nm = 1.0;
  std::vector<std::int64_t> counts;  // counts[k] covers [k, k+1) * bin_width below the interface
  std::int64_t mask_stopped = 0;
  std::int64_t reflected = 0;
  std::int64_t n_ions = 0;
  double dose_cm2 = 0.0;

  std::int64_t diamond_total() const;
  /// Stopped-ion density of bin k in cm^-3.
  double density_cm3(std::size_t k) const;
  std::vector<double> densities_cm3() const;
  /// Areal density of ions stopped in the substrate, cm^-2.
  double implanted_areal_density_cm2() const;
  /// Index of the most populated bin; 0 for an empty profile.
  std::size_t peak_bin() const;
  bool conserves_ions() const { return mask_stopped + reflected + diamond_total() == n_ions; }
};

struct TransportOptions {
  double cutoff_ev = 100.0;
  double bin_width_nm = 1.0;
  unsigned workers = 0;  // 0 selects hardware concurrency
};

/// Binary-collision transport of `scenario.n_ions` ions through `layers`
/// (surface first). The first layer's thickness is replaced by the scenario's
/// mask thickness unless the list holds only the substrate. Results depend on
/// the seed only, never on the worker count.
DepthProfile transport(const IonTransportScenario& scenario, std::span<const MaterialLayer> layers,
                       const TransportOptions& options = {});

/// Mask of `scenario.mask_thickness_nm` SiO2 over diamond.
std::vector<MaterialLayer> standard_stack(double mask_thickness_nm, double sio2_density_g_cm3 = 2.2);

/// Fraction of all simulated ions stopped in the substrate no deeper than
/// `depth_max_nm` below the interface. Partial bins are not split: a bin counts
/// once its upper edge is within the limit.
double stopped_fraction(const DepthProfile& profile, double depth_max_nm);

/// Fraction of substrate-stopped ions within `depth_max_nm`.
double substrate_fraction_within(const DepthProfile& profile, double depth_max_nm);

// Exposed for tests.
namespace detail {
/// sin^2(theta_cm / 2) for the ZBL universal potential at reduced energy
/// `epsilon` and reduced impact parameter `b` (MAGIC approximation).
double magic_sin2_half_angle(double epsilon, double b);
/// Same quantity from direct Gauss-Mehler quadrature of the classical
/// scattering integral.
double quadrature_sin2_half_angle(double epsilon, double b);
/// ZBL universal screening function.
double zbl_screening(double x);
std::uint64_t ion_stream_seed(std::uint64_t seed, std::uint64_t ion_index);
}  // namespace detail

}  // namespace nvdepth::implant
