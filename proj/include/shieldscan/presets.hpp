#pragma once

// Named study configurations for the standard simulation experiments: null
// calibration for single and composite materials, simple and composite
// power curves, the artificial-material comparison and DRF-error
// sensitivity.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "shieldscan/drf_synth.hpp"
#include "shieldscan/montecarlo.hpp"

namespace shieldscan {

/// Source used by every preset: I-131 at 1, Pu-239 at 0.15, background at 1.
Vector default_source();

/// The four physical materials in the order used by the presets.
const std::vector<std::string>& physical_materials();

/// The six composite pairs (first, second).
const std::vector<std::pair<std::string, std::string>>& composite_pairs();

/// Library, detector and DRF shipped under data/.
struct DefaultSetup {
  NuclideLibrary library;
  DetectorSpec detector;
  DRFMatrix drf;
};
DefaultSetup load_default_setup();
StudyInputs default_inputs();

/// Mass thickness giving ~50% LM power per material for the default setup,
/// read from data/presets/x50.json (written by `shieldscan x50`).
using X50Table = std::map<std::string, double>;
X50Table load_x50_table(const std::filesystem::path& path);
X50Table default_x50_table();
std::filesystem::path default_x50_path();

/// Largest artificial-material thickness used on composite grids.
inline constexpr double kArtificialMaxThickness = 0.005;

std::vector<std::string> preset_names();

/// Throws UsageError for unknown names or when a needed x50 entry is missing.
StudyConfig make_preset(const std::string& name, const X50Table& x50);

/// Evenly spaced multiples 0, 1/(n-1), ..., 1 of `end`.
std::vector<Vector> ray_grid(const Vector& end, std::size_t n);

}  // namespace shieldscan
