#include "shieldscan/drf_synth.hpp"

#include <cmath>
#include <numeric>

#include "shieldscan/errors.hpp"

namespace shieldscan {

namespace {

constexpr double kElectronMassMeV = 0.51099895;
constexpr double kFwhmPerSigma = 2.3548200450309493;

// Gaussian integrated over channel bins, truncated at +-5 sigma and
// normalised to unit mass.
Vector photopeak(const DetectorSpec& spec, double energy) {
  const auto n = static_cast<Eigen::Index>(spec.n_channels);
  const double width = spec.energy_max / static_cast<double>(spec.n_channels);
  const double sigma = spec.fwhm(energy) / kFwhmPerSigma;
  const double lo = energy - 5.0 * sigma;
  const double hi = energy + 5.0 * sigma;
  Vector peak = Vector::Zero(n);
  const auto cdf = [&](double e) { return 0.5 * std::erfc(-(e - energy) / (sigma * std::sqrt(2.0))); };
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = std::max(lo, static_cast<double>(i) * width);
    const double b = std::min(hi, static_cast<double>(i + 1) * width);
    if (b > a) peak[i] = cdf(b) - cdf(a);
  }
  const double mass = peak.sum();
  if (!(mass > 0.0)) throw UsageError("photopeak has no support inside the channel range");
  return peak / mass;
}

Vector flat_continuum(const DetectorSpec& spec, double energy) {
  const double width = spec.energy_max / static_cast<double>(spec.n_channels);
  const double edge = compton_edge(energy);
  auto last = static_cast<Eigen::Index>(std::floor(edge / width));
  last = std::clamp<Eigen::Index>(last, 0, static_cast<Eigen::Index>(spec.n_channels) - 1);
  Vector c = Vector::Zero(static_cast<Eigen::Index>(spec.n_channels));
  c.head(last + 1).setConstant(1.0 / static_cast<double>(last + 1));
  return c;
}

Vector background_column(const DetectorSpec& spec) {
  const auto& bg = spec.background;
  const Vector e = spec.channel_energies();
  Vector falling = (-e.array() / bg.continuum_scale_mev).exp();
  falling /= falling.sum();
  const Vector floor = Vector::Constant(e.size(), 1.0 / static_cast<double>(e.size()));
  Vector col = (1.0 - bg.floor_fraction - bg.peak_fraction) * falling + bg.floor_fraction * floor;
  double weight_total = 0.0;
  for (const auto& p : bg.peaks) weight_total += p.branching_ratio;
  for (const auto& p : bg.peaks) {
    col += bg.peak_fraction * (p.branching_ratio / weight_total) * photopeak(spec, p.energy_mev);
  }
  return col / col.sum();
}

}  // namespace

void DetectorSpec::validate() const {
  if (n_channels < 16) throw UsageError("detector needs at least 16 channels");
  if (!(energy_max > 0.0)) throw UsageError("energy_max must be positive");
  if (!(fwhm_ref > 0.0 && fwhm_ref < energy_max)) throw UsageError("fwhm_ref must lie in (0, energy_max)");
  if (!(ref_energy > 0.0)) throw UsageError("ref_energy must be positive");
  if (!(continuum_fraction >= 0.0 && continuum_fraction < 1.0)) {
    throw UsageError("continuum_fraction must lie in [0, 1)");
  }
  if (!(count_scale > 0.0) || !std::isfinite(count_scale)) throw UsageError("count_scale must be positive");
  const auto& bg = background;
  if (!(bg.continuum_scale_mev > 0.0)) throw UsageError("background continuum scale must be positive");
  if (!(bg.floor_fraction >= 0.0 && bg.peak_fraction >= 0.0 && bg.floor_fraction + bg.peak_fraction < 1.0)) {
    throw UsageError("background floor and peak fractions must be nonnegative and sum below one");
  }
  if (bg.peak_fraction > 0.0 && bg.peaks.empty()) throw UsageError("background peak_fraction needs peaks");
  for (const auto& p : bg.peaks) {
    if (!(p.energy_mev > 0.0 && p.energy_mev < energy_max) || !(p.branching_ratio > 0.0)) {
      throw UsageError("background peaks need energies in (0, energy_max) and positive weights");
    }
  }
}

Vector DetectorSpec::channel_energies() const {
  const double width = energy_max / static_cast<double>(n_channels);
  Vector e(static_cast<Eigen::Index>(n_channels));
  for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = (static_cast<double>(i) + 0.5) * width;
  return e;
}

double DetectorSpec::fwhm(double energy_mev) const { return fwhm_ref * std::sqrt(energy_mev / ref_energy); }

double compton_edge(double energy_mev) {
  return energy_mev * (1.0 - 1.0 / (1.0 + 2.0 * energy_mev / kElectronMassMeV));
}

DRFMatrix synthesize_drf(const DetectorSpec& spec, const NuclideLibrary& library) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(spec.n_channels);
  const auto K = static_cast<Eigen::Index>(library.n_columns());
  Matrix response(n, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    const EmissionLine& line = library.line_of_column(kk);
    if (library.is_background(library.owner(kk))) {
      response.col(k) = line.branching_ratio * spec.count_scale * background_column(spec);
      continue;
    }
    if (!(line.energy_mev < spec.energy_max)) {
      throw UsageError("line " + library.column_label(kk) + " lies above the detector range");
    }
    Vector col = (1.0 - spec.continuum_fraction) * photopeak(spec, line.energy_mev);
    if (spec.continuum_fraction > 0.0) col += spec.continuum_fraction * flat_continuum(spec, line.energy_mev);
    response.col(k) = line.branching_ratio * spec.count_scale * col;
  }
  return DRFMatrix(spec.channel_energies(), std::move(response));
}

Vector integrated_random_walk(std::size_t n, Engine& engine) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector m(static_cast<Eigen::Index>(n));
  double next = 0.0;       // m_{i+1}
  double next_next = 0.0;  // m_{i+2}
  for (auto i = static_cast<Eigen::Index>(n) - 1; i >= 0; --i) {
    m[i] = 2.0 * next - next_next + normal(engine);
    next_next = next;
    next = m[i];
  }
  return m;
}

DRFMatrix perturb_drf(const DRFMatrix& drf, const NuclideLibrary& library, double log_sd, std::uint64_t seed,
                      PerturbOptions options) {
  if (!(log_sd >= 0.0)) throw UsageError("perturbation scale must be nonnegative");
  if (log_sd == 0.0) return drf;
  if (drf.n_columns() != library.n_columns()) throw UsageError("DRF does not match the library");
  Matrix response = drf.response();
  for (Eigen::Index k = 0; k < response.cols(); ++k) {
    const auto kk = static_cast<std::size_t>(k);
    if (!options.perturb_background && library.is_background(library.owner(kk))) continue;
    Engine engine(derive_seed(seed, {kk}));
    Vector m = integrated_random_walk(drf.n_channels(), engine);
    const double mean = m.mean();
    const double sd = std::sqrt((m.array() - mean).square().sum() / static_cast<double>(m.size() - 1));
    m *= log_sd / sd;
    response.col(k).array() *= m.array().exp();
  }
  return DRFMatrix(drf.channel_energies(), std::move(response));
}

}  // namespace shieldscan
