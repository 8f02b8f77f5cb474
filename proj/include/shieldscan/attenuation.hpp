#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "shieldscan/model.hpp"

namespace shieldscan {

/// Tabulated mass attenuation coefficients mu/rho (cm^2/g) versus photon
/// energy (MeV). Repeated energies mark absorption edges.
struct MaterialTable {
  std::string name;
  std::vector<std::pair<double, double>> grid;  // (energy MeV, cm^2/g)
};

/// Attenuation function c(E) for one shielding material: either a tabulated
/// table interpolated monotonically in log-log space, or the synthetic
/// exp(sin(En)) material.
class Material {
 public:
  static Material from_table(MaterialTable table);
  /// exp(sin(En)) with En = energy in MeV times `units_per_mev`. The builtin
  /// "artificial" evaluates En in keV, which makes c(E) oscillate across the
  /// line energies; "artificial-mev" is the same formula on the MeV scale.
  static Material artificial(double units_per_mev = 1000.0);

  const std::string& name() const { return name_; }
  bool is_artificial() const { return !table_.has_value(); }
  const std::optional<MaterialTable>& table() const { return table_; }
  double min_energy() const;
  double max_energy() const;

  /// c(E) in cm^2/g. Throws RangeError outside the tabulated range.
  double coefficient(double energy_mev) const;

 private:
  // One monotone cubic Hermite piece per run of strictly increasing energies.
  struct Segment {
    std::vector<double> log_e;
    std::vector<double> log_c;
    std::vector<double> slope;
    std::vector<double> value;  // tabulated coefficients, returned verbatim at knots
  };

  std::string name_;
  std::optional<MaterialTable> table_;
  double units_per_mev_ = 1.0;
  std::vector<Segment> segments_;
};

/// Throws RangeError naming the material and its bounds when `energy_mev`
/// falls outside the table.
double interpolate_coefficient(const Material& material, double energy_mev);

/// exp(sin(En)); the caller chooses the unit of En.
double artificial_material(double en);

/// Rows follow the library's flattened line order, columns follow
/// `materials`. The background row is zero.
AttenuationMatrix build_attenuation_matrix(const NuclideLibrary& library,
                                           const std::vector<Material>& materials);

/// Pearson correlations of the materials' attenuation functions sampled on
/// `energy_grid`.
Matrix collinearity_report(const std::vector<Material>& materials, const std::vector<double>& energy_grid);

/// Reads a two-column "energy_MeV,mu_over_rho_cm2_per_g" CSV. Lines starting
/// with '#' are comments; a non-numeric first row is taken as the header.
MaterialTable load_material_table(const std::filesystem::path& path, std::string name);

/// Names accepted by resolve_material() without a path.
const std::vector<std::string>& builtin_material_names();

/// Directory holding shipped data (materials/, library/, detector/).
/// SHIELDSCAN_DATA_DIR overrides the compiled-in location.
std::filesystem::path data_directory();

/// `spec` is either a builtin name (carbon, concrete, lead, water, artificial)
/// or "name=path/to/table.csv".
Material resolve_material(const std::string& spec);

}  // namespace shieldscan
