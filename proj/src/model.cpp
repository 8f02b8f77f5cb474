#include "shieldscan/model.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "shieldscan/errors.hpp"

namespace shieldscan {

NuclideLibrary::NuclideLibrary(std::vector<Nuclide> nuclides, std::size_t background_index)
    : nuclides_(std::move(nuclides)), background_(background_index) {
  if (nuclides_.size() < 2) {
    throw UsageError("nuclide library needs at least one nuclide plus the background");
  }
  if (background_ >= nuclides_.size()) {
    throw UsageError("background index out of range");
  }
  if (nuclides_[background_].lines.size() != 1) {
    throw UsageError("background pseudo-nuclide '" + nuclides_[background_].name +
                     "' must have exactly one line");
  }
  std::set<std::string> names;
  for (std::size_t j = 0; j < nuclides_.size(); ++j) {
    const auto& n = nuclides_[j];
    if (n.name.empty()) throw UsageError("nuclide name is empty");
    if (!names.insert(n.name).second) throw UsageError("duplicate nuclide name '" + n.name + "'");
    if (n.lines.empty()) throw UsageError("nuclide '" + n.name + "' has no emission lines");
    for (const auto& line : n.lines) {
      if (!(line.energy_mev > 0.0) || !std::isfinite(line.energy_mev)) {
        throw UsageError("nuclide '" + n.name + "' has a non-positive line energy");
      }
      if (!(line.branching_ratio > 0.0 && line.branching_ratio <= 1.0)) {
        throw UsageError("nuclide '" + n.name + "' has a branching ratio outside (0, 1]");
      }
    }
    offsets_.push_back(owner_.size());
    owner_.insert(owner_.end(), n.lines.size(), j);
  }
}

NuclideLibrary NuclideLibrary::with_line_threshold(double min_branching_ratio) const {
  std::vector<Nuclide> kept;
  for (std::size_t j = 0; j < nuclides_.size(); ++j) {
    Nuclide n{nuclides_[j].name, {}};
    for (const auto& line : nuclides_[j].lines) {
      if (j == background_ || line.branching_ratio >= min_branching_ratio) n.lines.push_back(line);
    }
    if (n.lines.empty()) {
      throw UsageError("line threshold removes every line of '" + n.name + "'");
    }
    kept.push_back(std::move(n));
  }
  return NuclideLibrary(std::move(kept), background_);
}

std::size_t NuclideLibrary::column(std::size_t j, std::size_t l) const {
  if (j >= nuclides_.size() || l >= nuclides_[j].lines.size()) {
    throw UsageError("nuclide/line index out of range");
  }
  return offsets_[j] + l;
}

const EmissionLine& NuclideLibrary::line_of_column(std::size_t k) const {
  const std::size_t j = owner(k);
  return nuclides_[j].lines[k - offsets_[j]];
}

std::string NuclideLibrary::column_label(std::size_t k) const {
  std::ostringstream os;
  os.precision(10);
  os << nuclides_[owner(k)].name << ':' << line_of_column(k).energy_mev;
  return os.str();
}

std::size_t NuclideLibrary::index_of(const std::string& name) const {
  for (std::size_t j = 0; j < nuclides_.size(); ++j) {
    if (nuclides_[j].name == name) return j;
  }
  throw UsageError("unknown nuclide '" + name + "'");
}

DRFMatrix::DRFMatrix(Vector channel_energies, Matrix response)
    : energies_(std::move(channel_energies)), response_(std::move(response)) {
  if (energies_.size() != response_.rows()) {
    throw UsageError("DRF channel energy count does not match response rows");
  }
  if (response_.rows() == 0 || response_.cols() == 0) throw UsageError("DRF is empty");
  for (Eigen::Index i = 1; i < energies_.size(); ++i) {
    if (!(energies_[i] > energies_[i - 1])) {
      throw UsageError("DRF channel energies must be strictly increasing");
    }
  }
  if (!response_.allFinite() || (response_.array() < 0.0).any()) {
    throw UsageError("DRF entries must be finite and nonnegative");
  }
  for (Eigen::Index k = 0; k < response_.cols(); ++k) {
    if (!(response_.col(k).maxCoeff() > 0.0)) {
      throw UsageError("DRF column " + std::to_string(k) + " has no positive entry");
    }
  }
}

AttenuationMatrix::AttenuationMatrix(Matrix coeffs, std::vector<std::string> materials)
    : coeffs_(std::move(coeffs)), materials_(std::move(materials)) {
  if (!coeffs_.allFinite() || (coeffs_.array() < 0.0).any()) {
    throw UsageError("attenuation coefficients must be finite and nonnegative");
  }
  if (materials_.empty()) {
    for (Eigen::Index m = 0; m < coeffs_.cols(); ++m) materials_.push_back("m" + std::to_string(m));
  }
  if (materials_.size() != static_cast<std::size_t>(coeffs_.cols())) {
    throw UsageError("attenuation material names do not match column count");
  }
}

void ModelParams::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw UsageError("detection time must be positive");
  if (!x.allFinite() || (x.array() < 0.0).any()) throw UsageError("mass thickness must be >= 0");
  if (!b.allFinite() || (b.array() < 0.0).any()) throw UsageError("intensities must be >= 0");
}

ModelParams ModelParams::unshielded(Vector b, std::size_t n_materials, double tau) {
  return ModelParams{Vector::Zero(static_cast<Eigen::Index>(n_materials)), std::move(b), tau};
}

Vector Spectrum::as_vector() const {
  Vector y(static_cast<Eigen::Index>(counts.size()));
  for (std::size_t i = 0; i < counts.size(); ++i) y[static_cast<Eigen::Index>(i)] = static_cast<double>(counts[i]);
  return y;
}

std::int64_t Spectrum::total() const {
  std::int64_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

ShieldingModel::ShieldingModel(NuclideLibrary library, DRFMatrix drf, AttenuationMatrix atten)
    : library_(std::move(library)), drf_(std::move(drf)), atten_(std::move(atten)) {
  if (drf_.n_columns() != library_.n_columns()) {
    throw UsageError("DRF has " + std::to_string(drf_.n_columns()) + " columns but the library has " +
                     std::to_string(library_.n_columns()) + " lines");
  }
  if (atten_.n_columns() != library_.n_columns()) {
    throw UsageError("attenuation matrix rows do not match library lines");
  }
  const std::size_t bg = library_.first_column(library_.background_index());
  if (atten_.n_materials() > 0 && atten_.coeffs().row(static_cast<Eigen::Index>(bg)).cwiseAbs().maxCoeff() != 0.0) {
    throw UsageError("background line must not be attenuated");
  }

  const auto n = static_cast<Eigen::Index>(drf_.n_channels());
  const auto J = static_cast<Eigen::Index>(library_.size());
  grouped_ = Matrix::Zero(n, J);
  for (std::size_t k = 0; k < library_.n_columns(); ++k) {
    grouped_.col(static_cast<Eigen::Index>(library_.owner(k))) += drf_.response().col(static_cast<Eigen::Index>(k));
  }
  totals_ = grouped_.colwise().sum().transpose();

  // A channel with no response from any line has zero mean for every b.
  const Vector channel_total = grouped_.rowwise().sum();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(channel_total[i] > 0.0)) {
      throw IdentifiabilityError("channel " + std::to_string(i + 1) +
                                 " has zero response for every nuclide; the unshielded mean "
                                 "spectrum must be positive in every channel");
    }
  }
}

ShieldingModel ShieldingModel::with_attenuation(AttenuationMatrix atten) const {
  return ShieldingModel(library_, drf_, std::move(atten));
}

ModelTerms ShieldingModel::terms(const ModelParams& params) const {
  const auto J = static_cast<Eigen::Index>(library_.size());
  const auto M = static_cast<Eigen::Index>(atten_.n_materials());
  if (params.b.size() != J || params.x.size() != M) {
    throw UsageError("parameter dimensions do not match the model (J=" + std::to_string(J) +
                     ", M=" + std::to_string(M) + ")");
  }
  const auto K = static_cast<Eigen::Index>(library_.n_columns());
  const Matrix& S = drf_.response();

  ModelTerms t;
  if (M > 0) {
    t.attenuation = (-(atten_.coeffs() * params.x)).array().exp();
  } else {
    t.attenuation = Vector::Ones(K);
  }

  const bool unshielded = M == 0 || params.x.isZero(0.0);
  if (unshielded) {
    t.grouped = grouped_;
  } else {
    t.grouped = Matrix::Zero(S.rows(), J);
    for (Eigen::Index k = 0; k < K; ++k) {
      t.grouped.col(static_cast<Eigen::Index>(library_.owner(static_cast<std::size_t>(k)))) +=
          t.attenuation[k] * S.col(k);
    }
  }
  t.unit_mean = t.grouped * params.b;

  if (M > 0) {
    // weight per column: e_k * b_owner(k); W = S * diag(weight) * C
    Matrix scaled_c = atten_.coeffs();
    for (Eigen::Index k = 0; k < K; ++k) {
      scaled_c.row(k) *= t.attenuation[k] * params.b[static_cast<Eigen::Index>(library_.owner(static_cast<std::size_t>(k)))];
    }
    t.weighted = S * scaled_c;
  } else {
    t.weighted = Matrix::Zero(S.rows(), 0);
  }
  return t;
}

double attenuated_intensity(const ShieldingModel& model, const ModelParams& params, std::size_t j,
                            std::size_t l) {
  const std::size_t k = model.library().column(j, l);
  if (static_cast<std::size_t>(params.b.size()) != model.n_nuclides() ||
      static_cast<std::size_t>(params.x.size()) != model.n_materials()) {
    throw UsageError("parameter dimensions do not match the model");
  }
  double exponent = 0.0;
  for (std::size_t m = 0; m < model.n_materials(); ++m) {
    exponent += model.attenuation().coeffs()(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m)) *
                params.x[static_cast<Eigen::Index>(m)];
  }
  return params.b[static_cast<Eigen::Index>(j)] * params.tau * std::exp(-exponent);
}

MeanSpectrum mean_spectrum(const ShieldingModel& model, const ModelParams& params) {
  ModelTerms t = model.terms(params);
  MeanSpectrum out;
  out.unit_mean = std::move(t.unit_mean);
  out.mean = params.tau * out.unit_mean;
  return out;
}

}  // namespace shieldscan
