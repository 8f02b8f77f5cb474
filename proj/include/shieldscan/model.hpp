#pragma once

// Poisson regression model for a possibly shielded pulse-height spectrum.
//
// Channel counts Y_i are independent Poisson with mean
//
//   mu_i = sum_j sum_l S_ijl * a_jl,   a_jl = b_j * tau * exp(-sum_m c_jlm x_m)
//
// where S is the detector response per emission line, b the unshielded
// nuclide intensities per unit time, x the mass thicknesses of the presumed
// shielding materials and c their mass attenuation coefficients. The
// background is carried as a single-line pseudo-nuclide that is never
// attenuated.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace shieldscan {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Default branching-ratio cut applied when a library is generated.
inline constexpr double kDefaultLineThreshold = 0.005;

struct EmissionLine {
  double energy_mev = 0.0;
  double branching_ratio = 0.0;
};

struct Nuclide {
  std::string name;
  std::vector<EmissionLine> lines;
};

/// Ordered nuclides plus the background pseudo-nuclide. Lines are flattened
/// into "columns" in library order; every per-line table (DRF columns,
/// attenuation rows) uses that ordering.
class NuclideLibrary {
 public:
  NuclideLibrary(std::vector<Nuclide> nuclides, std::size_t background_index);

  /// Copy with every non-background line below `min_branching_ratio` removed.
  NuclideLibrary with_line_threshold(double min_branching_ratio) const;

  const std::vector<Nuclide>& nuclides() const { return nuclides_; }
  const Nuclide& nuclide(std::size_t j) const { return nuclides_.at(j); }
  std::size_t size() const { return nuclides_.size(); }
  std::size_t background_index() const { return background_; }
  bool is_background(std::size_t j) const { return j == background_; }

  std::size_t n_columns() const { return owner_.size(); }
  std::size_t first_column(std::size_t j) const { return offsets_.at(j); }
  std::size_t line_count(std::size_t j) const { return nuclides_.at(j).lines.size(); }
  /// Flattened column of line `l` of nuclide `j`.
  std::size_t column(std::size_t j, std::size_t l) const;
  /// Nuclide that owns flattened column `k`.
  std::size_t owner(std::size_t k) const { return owner_.at(k); }
  const EmissionLine& line_of_column(std::size_t k) const;
  /// "name:energy" label used in DRF CSV headers.
  std::string column_label(std::size_t k) const;
  std::size_t index_of(const std::string& name) const;

 private:
  std::vector<Nuclide> nuclides_;
  std::size_t background_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> owner_;
};

/// Mean counts per unit intensity per unit time, one column per emission line.
class DRFMatrix {
 public:
  DRFMatrix(Vector channel_energies, Matrix response);

  std::size_t n_channels() const { return static_cast<std::size_t>(response_.rows()); }
  std::size_t n_columns() const { return static_cast<std::size_t>(response_.cols()); }
  const Vector& channel_energies() const { return energies_; }
  const Matrix& response() const { return response_; }

 private:
  Vector energies_;
  Matrix response_;
};

/// Mass attenuation coefficients c (cm^2/g): one row per DRF column, one
/// column per presumed material.
class AttenuationMatrix {
 public:
  explicit AttenuationMatrix(Matrix coeffs, std::vector<std::string> materials = {});

  const Matrix& coeffs() const { return coeffs_; }
  std::size_t n_materials() const { return static_cast<std::size_t>(coeffs_.cols()); }
  std::size_t n_columns() const { return static_cast<std::size_t>(coeffs_.rows()); }
  const std::vector<std::string>& materials() const { return materials_; }

 private:
  Matrix coeffs_;
  std::vector<std::string> materials_;
};

/// phi = (x, b) together with the detection time.
struct ModelParams {
  Vector x;
  Vector b;
  double tau = 1.0;

  /// Throws UsageError unless x >= 0, b >= 0 and tau > 0.
  void validate() const;
  static ModelParams unshielded(Vector b, std::size_t n_materials, double tau);
};

struct Spectrum {
  std::vector<std::int64_t> counts;

  std::size_t size() const { return counts.size(); }
  Vector as_vector() const;
  std::int64_t total() const;
};

/// Model-derived quantities at one parameter point.
///
/// `grouped` holds t_ij. = sum_l S_ijl exp(-sum_m c_jlm x_m) (N x J),
/// `unit_mean` U_i = sum_j b_j t_ij. and `weighted` holds
/// W_im = sum_jl u_ijl c_jlm (N x M).
struct ModelTerms {
  Vector attenuation;  // exp(-sum_m c_km x_m) per DRF column
  Matrix grouped;
  Vector unit_mean;
  Matrix weighted;
};

/// Library, detector response and presumed attenuation bundled and checked
/// for mutual consistency. Immutable after construction.
class ShieldingModel {
 public:
  ShieldingModel(NuclideLibrary library, DRFMatrix drf, AttenuationMatrix atten);

  const NuclideLibrary& library() const { return library_; }
  const DRFMatrix& drf() const { return drf_; }
  const AttenuationMatrix& attenuation() const { return atten_; }

  std::size_t n_channels() const { return drf_.n_channels(); }
  std::size_t n_nuclides() const { return library_.size(); }
  std::size_t n_materials() const { return atten_.n_materials(); }

  /// Overall unshielded DRF per nuclide, S_ij. = sum_l S_ijl (N x J).
  const Matrix& unshielded_response() const { return grouped_; }
  /// Column sums of unshielded_response().
  const Vector& nuclide_totals() const { return totals_; }

  /// Same library and DRF with a different set of presumed materials.
  ShieldingModel with_attenuation(AttenuationMatrix atten) const;

  ModelTerms terms(const ModelParams& params) const;

 private:
  NuclideLibrary library_;
  DRFMatrix drf_;
  AttenuationMatrix atten_;
  Matrix grouped_;
  Vector totals_;
};

/// a_jl = b_j tau exp(-sum_m c_jlm x_m).
double attenuated_intensity(const ShieldingModel& model, const ModelParams& params,
                            std::size_t j, std::size_t l);

struct MeanSpectrum {
  Vector mean;       // mu_i
  Vector unit_mean;  // U_i = mu_i / tau
};

MeanSpectrum mean_spectrum(const ShieldingModel& model, const ModelParams& params);

}  // namespace shieldscan
