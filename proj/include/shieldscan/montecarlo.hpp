#pragma once

// Replicated simulate-then-test studies: size, power, misspecified and
// composite shielding, and sensitivity to systematic DRF errors.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "shieldscan/attenuation.hpp"
#include "shieldscan/inference.hpp"
#include "shieldscan/model.hpp"
#include "shieldscan/rng.hpp"

namespace shieldscan {

/// Independent Poisson draws with the given channel means.
Spectrum simulate_spectrum(const Vector& mean, Engine& engine);
Spectrum simulate_spectrum(const Vector& mean, std::uint64_t seed);
/// Draws from the model mean at `params`.
Spectrum simulate_spectrum(const ShieldingModel& model, const ModelParams& params, std::uint64_t seed);

struct StudyConfig {
  std::string name;
  Vector b;
  double tau = 1.0;
  /// Materials shielding the simulated source; grid entries are their mass
  /// thicknesses (g/cm^2) in this order.
  std::vector<std::string> true_materials;
  std::vector<Vector> grid;
  /// Each entry is one LM/Wald/LR test applied to every simulated spectrum.
  std::vector<std::vector<std::string>> presumed;
  std::size_t replicates = 2000;
  double level = 0.05;
  std::uint64_t seed = 1;
  /// Target sample sd of the log-scale DRF error; 0 disables perturbation.
  double drf_error_sd = 0.0;
  bool perturb_background = true;
  TestKind method = TestKind::LM;
  /// 0 means one worker per hardware thread.
  std::size_t threads = 0;
  /// Keep every statistic and p-value (needed for KS checks and size
  /// correction).
  bool keep_samples = false;
  std::string note;

  /// Throws UsageError on inconsistent settings.
  void validate() const;
};

struct CellResult {
  std::size_t rejections = 0;
  std::size_t valid = 0;     // replicates whose test finished
  std::size_t failures = 0;  // fit or identifiability failures, not counted as rejections
  double rate = 0.0;
  double se = 0.0;
  double mean_statistic = 0.0;
  std::vector<double> statistics;  // replicate order; NaN for failures
  std::vector<double> p_values;
};

struct StudyResult {
  StudyConfig config;
  /// cells[test][grid point]
  std::vector<std::vector<CellResult>> cells;
  /// Size-corrected p-value cutoff per test (sensitivity studies only) and
  /// the power obtained with it.
  std::vector<double> corrected_cutoff;
  std::vector<std::vector<double>> corrected_rate;
  double seconds = 0.0;
};

/// Resolves material names; defaults to resolve_material().
using MaterialResolver = std::function<Material(const std::string&)>;

struct StudyInputs {
  NuclideLibrary library;
  DRFMatrix drf;
  MaterialResolver resolve = resolve_material;
};

/// Seed of replicate r at grid point g.
std::uint64_t replicate_seed(std::uint64_t master, std::size_t replicate, std::size_t grid_index);

StudyResult run_study(const StudyInputs& inputs, const StudyConfig& config);

/// run_study() after checking that every grid point is x = 0.
StudyResult run_size_study(const StudyInputs& inputs, const StudyConfig& config);
/// run_study() after checking that the grid has at least two points.
StudyResult run_power_study(const StudyInputs& inputs, const StudyConfig& config);

/// Power study on perturbed-DRF data tested with the unperturbed DRF. The
/// corrected cutoff for each test is the empirical level-quantile of its
/// null p-values, taken from the x = 0 grid points or, if the grid has
/// none, from an extra null batch; corrected power rejects when p < cutoff.
StudyResult run_sensitivity_study(const StudyInputs& inputs, const StudyConfig& config);

/// Sorted p-values' element at floor(level * n): the fraction of `p_values`
/// strictly below the returned cutoff differs from `level` by at most 1/n
/// when there are no ties.
double empirical_cutoff(std::vector<double> p_values, double level);

struct X50Options {
  double lo = 0.0;
  double hi = 30.0;
  double power_tolerance = 0.02;
  std::size_t max_steps = 60;
  /// Start from [lo, min(hi, 4 x_local)], x_local being the thickness at
  /// which the local-power approximation gives 50%; the upper end doubles
  /// (up to hi) until the empirical power reaches one half. Heavily shielded
  /// spectra make the null fit slow and, once the source is wiped out, power
  /// falls back towards the level, so [0, hi] need not bracket x50.
  bool local_bracket = true;
};

struct X50Result {
  double x = 0.0;
  double power = 0.0;
  std::size_t steps = 0;
  bool converged = false;
};

/// Bisection for the thickness of `material` at which the level-`level` LM
/// test presuming the same material rejects about half the time. Every
/// evaluation reuses the same replicate seeds so the estimated power is
/// close to monotone in x.
X50Result find_x50(const StudyInputs& inputs, const std::string& material, const Vector& b, double tau,
                   std::size_t replicates, double level, std::uint64_t seed, std::size_t threads = 0,
                   const X50Options& options = {});

/// Worker count from an explicit request, SHIELDSCAN_THREADS, or the
/// hardware, in that order.
std::size_t resolve_threads(std::size_t requested);

}  // namespace shieldscan
