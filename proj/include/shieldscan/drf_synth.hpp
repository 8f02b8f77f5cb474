#pragma once

// Synthetic detector response functions and the systematic-error model used
// for sensitivity studies.

#include <cstdint>
#include <vector>

#include "shieldscan/model.hpp"
#include "shieldscan/rng.hpp"

namespace shieldscan {

/// Shape of the background pseudo-nuclide's response: a falling continuum,
/// a flat floor and a few natural-decay lines at detector resolution.
struct BackgroundShape {
  double continuum_scale_mev = 0.35;
  double floor_fraction = 0.05;
  double peak_fraction = 0.15;
  // energy (MeV) and relative weight of each natural line
  std::vector<EmissionLine> peaks{{0.352, 0.20}, {0.609, 0.35}, {1.461, 0.30}, {2.614, 0.15}};
};

struct DetectorSpec {
  std::size_t n_channels = 1024;
  double energy_max = 3.0;    // MeV, upper edge of the last channel
  double fwhm_ref = 0.080;    // MeV at ref_energy
  double ref_energy = 0.662;  // MeV
  double continuum_fraction = 0.5;
  // Expected counts per unit intensity per unit time summed over a column
  // with branching ratio one.
  double count_scale = 1.0;
  BackgroundShape background;

  void validate() const;
  /// Channel centres of a linear 0..energy_max calibration.
  Vector channel_energies() const;
  /// FWHM(E) = fwhm_ref * sqrt(E / ref_energy).
  double fwhm(double energy_mev) const;
};

/// Compton edge energy E (1 - 1 / (1 + 2E / m_e c^2)).
double compton_edge(double energy_mev);

/// One column per library line: branching_ratio * count_scale *
/// [(1 - f) photopeak + f flat continuum up to the Compton edge]. The
/// background column uses BackgroundShape with total mass count_scale.
DRFMatrix synthesize_drf(const DetectorSpec& spec, const NuclideLibrary& library);

/// Integrated random walk run backward from the last channel with
/// m_{N+1} = m_{N+2} = 0 and unit noise scale:
/// m_i = 2 m_{i+1} - m_{i+2} + eta_i.
Vector integrated_random_walk(std::size_t n, Engine& engine);

struct PerturbOptions {
  bool perturb_background = true;
};

/// Multiplies each column elementwise by exp(m), with m an independent
/// integrated random walk rescaled so its sample standard deviation equals
/// `log_sd`. log_sd == 0 returns the input unchanged.
DRFMatrix perturb_drf(const DRFMatrix& drf, const NuclideLibrary& library, double log_sd, std::uint64_t seed,
                      PerturbOptions options = {});

}  // namespace shieldscan
