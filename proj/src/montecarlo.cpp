#include "shieldscan/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <thread>

#include "shieldscan/distributions.hpp"
#include "shieldscan/drf_synth.hpp"
#include "shieldscan/errors.hpp"

namespace shieldscan {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

AttenuationMatrix attenuation_for(const StudyInputs& inputs, const std::vector<std::string>& names) {
  std::vector<Material> materials;
  materials.reserve(names.size());
  for (const auto& n : names) materials.push_back(inputs.resolve(n));
  return build_attenuation_matrix(inputs.library, materials);
}

// Noncentrality at which the df = 1 chi-square test at `level` has power 1/2.
double half_power_ncp(double level) {
  const double q = chi_squared_quantile(1.0 - level, 1);
  double lo = 0.0, hi = 100.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (noncentral_chi_squared_sf(q, 1, mid) < 0.5 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

bool is_zero(const Vector& x) { return x.size() == 0 || (x.array() == 0.0).all(); }

// Runs every (grid point, replicate) task on `threads` workers. `task`
// receives the flattened index; results are written by index, so the
// outcome does not depend on scheduling.
template <typename Task>
void parallel_for(std::size_t n, std::size_t threads, Task task) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          task(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next.store(n);
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

CellResult summarise(std::vector<double> stats, std::vector<double> pvals, double level, bool keep) {
  CellResult cell;
  double sum = 0.0;
  for (std::size_t r = 0; r < stats.size(); ++r) {
    if (std::isnan(stats[r])) {
      ++cell.failures;
      continue;
    }
    ++cell.valid;
    sum += stats[r];
    if (pvals[r] <= level) ++cell.rejections;
  }
  if (cell.valid > 0) {
    const double n = static_cast<double>(cell.valid);
    cell.rate = static_cast<double>(cell.rejections) / n;
    cell.se = std::sqrt(cell.rate * (1.0 - cell.rate) / n);
    cell.mean_statistic = sum / n;
  }
  if (keep) {
    cell.statistics = std::move(stats);
    cell.p_values = std::move(pvals);
  }
  return cell;
}

// Grid point g of `config` uses replicate seeds for grid index g + grid_offset.
StudyResult run_study_impl(const StudyInputs& inputs, const StudyConfig& config, std::size_t grid_offset) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const NuclideLibrary& lib = inputs.library;
  const AttenuationMatrix true_atten = attenuation_for(inputs, config.true_materials);
  const ShieldingModel truth(lib, inputs.drf, true_atten);

  std::vector<ShieldingModel> tests;
  tests.reserve(config.presumed.size());
  for (const auto& set : config.presumed) tests.push_back(truth.with_attenuation(attenuation_for(inputs, set)));

  const std::size_t G = config.grid.size();
  const std::size_t R = config.replicates;
  const std::size_t T = tests.size();
  std::vector<ModelParams> truth_params;
  std::vector<Vector> means;
  for (const auto& x : config.grid) {
    ModelParams p{x, config.b, config.tau};
    p.validate();
    truth_params.push_back(p);
    means.push_back(mean_spectrum(truth, p).mean);
  }

  // stats[t][g * R + r]
  std::vector<std::vector<double>> stats(T, std::vector<double>(G * R, kNaN));
  std::vector<std::vector<double>> pvals(T, std::vector<double>(G * R, kNaN));
  TestOptions options;
  options.fit.track_likelihood = false;
  PerturbOptions perturb;
  perturb.perturb_background = config.perturb_background;

  parallel_for(G * R, resolve_threads(config.threads), [&](std::size_t idx) {
    const std::size_t g = idx / R;
    const std::size_t r = idx % R;
    const std::uint64_t seed = replicate_seed(config.seed, r, g + grid_offset);
    Spectrum y;
    if (config.drf_error_sd > 0.0) {
      const DRFMatrix drf =
          perturb_drf(inputs.drf, lib, config.drf_error_sd, derive_seed(seed, {1}), perturb);
      const ShieldingModel perturbed(lib, drf, true_atten);
      y = simulate_spectrum(mean_spectrum(perturbed, truth_params[g]).mean, derive_seed(seed, {0}));
    } else {
      y = simulate_spectrum(means[g], derive_seed(seed, {0}));
    }
    for (std::size_t t = 0; t < T; ++t) {
      try {
        const TestReport rep = run_test(config.method, tests[t], y, config.tau, options);
        stats[t][idx] = rep.statistic;
        pvals[t][idx] = rep.p_value;
      } catch (const ConvergenceError&) {
      } catch (const IdentifiabilityError&) {
      } catch (const EvaluationError&) {
      }
    }
  });

  StudyResult result;
  result.config = config;
  result.cells.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t g = 0; g < G; ++g) {
      const auto first = static_cast<std::ptrdiff_t>(g * R);
      const auto last = static_cast<std::ptrdiff_t>((g + 1) * R);
      result.cells[t].push_back(summarise(std::vector<double>(stats[t].begin() + first, stats[t].begin() + last),
                                          std::vector<double>(pvals[t].begin() + first, pvals[t].begin() + last),
                                          config.level, config.keep_samples));
    }
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace

Spectrum simulate_spectrum(const Vector& mean, Engine& engine) {
  Spectrum s;
  s.counts.resize(static_cast<std::size_t>(mean.size()));
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double m = mean[i];
    if (!(m >= 0.0) || !std::isfinite(m)) throw UsageError("Poisson mean must be finite and nonnegative");
    if (m == 0.0) {
      s.counts[static_cast<std::size_t>(i)] = 0;
      continue;
    }
    std::poisson_distribution<std::int64_t> draw(m);
    s.counts[static_cast<std::size_t>(i)] = draw(engine);
  }
  return s;
}

Spectrum simulate_spectrum(const Vector& mean, std::uint64_t seed) {
  Engine engine(seed);
  return simulate_spectrum(mean, engine);
}

Spectrum simulate_spectrum(const ShieldingModel& model, const ModelParams& params, std::uint64_t seed) {
  return simulate_spectrum(mean_spectrum(model, params).mean, seed);
}

void StudyConfig::validate() const {
  if (replicates < 1) throw UsageError("replicates must be at least 1");
  if (!(level > 0.0 && level <= 1.0)) throw UsageError("level must lie in (0, 1]");
  if (!(tau > 0.0)) throw UsageError("tau must be positive");
  if (b.size() == 0) throw UsageError("source intensities b are required");
  if ((b.array() < 0.0).any() || !b.allFinite()) throw UsageError("source intensities must be nonnegative");
  if (grid.empty()) throw UsageError("study grid is empty");
  for (const auto& x : grid) {
    if (x.size() != static_cast<Eigen::Index>(true_materials.size())) {
      throw UsageError("each grid point needs one thickness per true material");
    }
    if ((x.array() < 0.0).any() || !x.allFinite()) throw UsageError("grid thicknesses must be nonnegative");
  }
  if (presumed.empty()) throw UsageError("at least one presumed material set is required");
  for (const auto& set : presumed) {
    if (set.empty()) throw UsageError("a presumed material set is empty");
  }
  if (!(drf_error_sd >= 0.0) || !std::isfinite(drf_error_sd)) throw UsageError("drf_error_sd must be nonnegative");
}

std::uint64_t replicate_seed(std::uint64_t master, std::size_t replicate, std::size_t grid_index) {
  return derive_seed(master, {static_cast<std::uint64_t>(replicate), static_cast<std::uint64_t>(grid_index)});
}

StudyResult run_study(const StudyInputs& inputs, const StudyConfig& config) { return run_study_impl(inputs, config, 0); }

StudyResult run_size_study(const StudyInputs& inputs, const StudyConfig& config) {
  for (const auto& x : config.grid) {
    if (!is_zero(x)) throw UsageError("a size study grid may only contain x = 0");
  }
  return run_study(inputs, config);
}

StudyResult run_power_study(const StudyInputs& inputs, const StudyConfig& config) {
  if (config.grid.size() < 2) throw UsageError("a power study needs at least two grid points");
  return run_study(inputs, config);
}

double empirical_cutoff(std::vector<double> p_values, double level) {
  p_values.erase(std::remove_if(p_values.begin(), p_values.end(), [](double p) { return std::isnan(p); }),
                 p_values.end());
  if (p_values.empty()) throw UsageError("no null p-values to calibrate against");
  std::sort(p_values.begin(), p_values.end());
  const auto k = static_cast<std::size_t>(std::floor(level * static_cast<double>(p_values.size())));
  if (k >= p_values.size()) return std::numeric_limits<double>::infinity();
  return p_values[k];
}

StudyResult run_sensitivity_study(const StudyInputs& inputs, const StudyConfig& config) {
  StudyConfig cfg = config;
  cfg.keep_samples = true;
  StudyResult result = run_study(inputs, cfg);
  const std::size_t T = result.cells.size();
  const std::size_t G = cfg.grid.size();

  std::vector<std::vector<double>> null_p(T);
  for (std::size_t g = 0; g < G; ++g) {
    if (!is_zero(cfg.grid[g])) continue;
    for (std::size_t t = 0; t < T; ++t) {
      const auto& p = result.cells[t][g].p_values;
      null_p[t].insert(null_p[t].end(), p.begin(), p.end());
    }
  }
  if (null_p.empty() || null_p.front().empty()) {
    StudyConfig null_cfg = cfg;
    null_cfg.grid = {Vector::Zero(static_cast<Eigen::Index>(cfg.true_materials.size()))};
    const StudyResult null_run = run_study_impl(inputs, null_cfg, G);
    for (std::size_t t = 0; t < T; ++t) null_p[t] = null_run.cells[t][0].p_values;
  }

  result.corrected_cutoff.resize(T);
  result.corrected_rate.assign(T, std::vector<double>(G, 0.0));
  for (std::size_t t = 0; t < T; ++t) {
    const double cutoff = empirical_cutoff(null_p[t], cfg.level);
    result.corrected_cutoff[t] = cutoff;
    for (std::size_t g = 0; g < G; ++g) {
      const auto& cell = result.cells[t][g];
      std::size_t hits = 0;
      for (double p : cell.p_values) {
        if (!std::isnan(p) && p < cutoff) ++hits;
      }
      result.corrected_rate[t][g] = cell.valid ? static_cast<double>(hits) / static_cast<double>(cell.valid) : 0.0;
    }
  }
  if (!config.keep_samples) {
    for (auto& row : result.cells) {
      for (auto& cell : row) {
        cell.statistics.clear();
        cell.p_values.clear();
      }
    }
  }
  result.config.keep_samples = config.keep_samples;
  return result;
}

X50Result find_x50(const StudyInputs& inputs, const std::string& material, const Vector& b, double tau,
                   std::size_t replicates, double level, std::uint64_t seed, std::size_t threads,
                   const X50Options& options) {
  if (!(options.lo >= 0.0 && options.hi > options.lo)) throw UsageError("x50 bracket must satisfy 0 <= lo < hi");
  StudyConfig cfg;
  cfg.name = "x50-" + material;
  cfg.b = b;
  cfg.tau = tau;
  cfg.true_materials = {material};
  cfg.presumed = {{material}};
  cfg.replicates = replicates;
  cfg.level = level;
  cfg.seed = seed;
  cfg.threads = threads;
  const auto power_at = [&](double x) {
    cfg.grid = {Vector::Constant(1, x)};
    return run_study(inputs, cfg).cells[0][0].rate;
  };

  X50Result out;
  double lo = options.lo;
  double hi = options.hi;
  double p_hi = 0.0;
  if (options.local_bracket) {
    const ShieldingModel model(inputs.library, inputs.drf, attenuation_for(inputs, {material}));
    const FisherBlocks fb = fisher_blocks(model, ModelParams::unshielded(b, 1, tau));
    const double x_local = std::sqrt(half_power_ncp(level) / (tau * fb.schur(0, 0)));
    double top = std::min(options.hi, std::max(4.0 * x_local, options.lo + 1e-12));
    for (;;) {
      p_hi = power_at(top);
      if (p_hi >= 0.5 - options.power_tolerance || top >= options.hi) break;
      lo = top;
      top = std::min(options.hi, 2.0 * top);
    }
    hi = top;
  } else {
    p_hi = power_at(hi);
  }
  out.x = hi;
  out.power = p_hi;
  if (p_hi < 0.5 - options.power_tolerance) return out;
  if (std::abs(p_hi - 0.5) <= options.power_tolerance) {
    out.converged = true;
    return out;
  }
  for (std::size_t step = 1; step <= options.max_steps; ++step) {
    const double mid = 0.5 * (lo + hi);
    const double p = power_at(mid);
    out.x = mid;
    out.power = p;
    out.steps = step;
    if (std::abs(p - 0.5) <= options.power_tolerance) {
      out.converged = true;
      break;
    }
    (p < 0.5 ? lo : hi) = mid;
  }
  return out;
}

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SHIELDSCAN_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    throw UsageError("SHIELDSCAN_THREADS must be a positive integer");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace shieldscan
