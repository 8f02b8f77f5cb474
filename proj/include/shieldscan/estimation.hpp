#pragma once

#include <atomic>
#include <cstddef>
#include <optional>

#include "shieldscan/errors.hpp"
#include "shieldscan/model.hpp"

namespace shieldscan {

struct FitOptions {
  double tol = 1e-9;
  std::size_t max_iter = 100000;
  /// Evaluate the log likelihood after every iteration and record whether it
  /// ever decreased.
  bool track_likelihood = true;
  /// After EM has met `tol`, up to this many Fisher-scoring steps on b, each
  /// kept only if it raises L. EM's relative-change rule stops well short of
  /// the maximiser on large-count spectra, where its error can rival the
  /// sampling error of the statistics. 0 leaves the EM iterate as is.
  std::size_t polish_steps = 20;
};

struct FitResult {
  ModelParams params;
  double log_likelihood = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  double criterion_value = 0.0;  // final relative L1 change of the estimate
  /// Largest information-scaled projected-gradient entry (full fit only).
  double kkt_residual = 0.0;
  /// False if the log likelihood decreased between any two iterations by
  /// more than floating-point noise. Only meaningful with track_likelihood.
  bool monotone = true;
  double worst_decrease = 0.0;
  /// Accepted Fisher-scoring steps after EM (null fit only).
  std::size_t polish_steps = 0;
};

/// Thrown by procedures that need a converged fit; carries the partial fit.
class FitFailure : public ConvergenceError {
 public:
  FitFailure(const std::string& what, FitResult fit) : ConvergenceError(what), fit_(std::move(fit)) {}
  const FitResult& fit() const { return fit_; }

 private:
  FitResult fit_;
};

/// L(phi; Y) = -tau sum U_i + sum Y_i log(tau U_i) - sum log(Y_i!).
/// Returns -infinity when some channel has zero mean and a positive count.
double log_likelihood(const ShieldingModel& model, const ModelParams& params, const Spectrum& spectrum);

/// L(a) - L(b), summed per channel so that the difference keeps its
/// precision when L itself is large.
double log_likelihood_difference(const ShieldingModel& model, const ModelParams& a, const ModelParams& b,
                                 const Spectrum& spectrum);

/// Moment start b_k = sum_i Y_i / (J tau sum_i S_ik.).
Vector moment_start(const ShieldingModel& model, const Spectrum& spectrum, double tau);

/// Constrained MLE of b with x = 0 by the multiplicative EM update
///   b_k <- b_k * [sum_i Y_i S_ik. / U_i] / [tau sum_i S_ik.]
/// stopped when sum_k |b_k' - b_k| / sum_k |b_k| < tol, then polished (see
/// FitOptions::polish_steps).
FitResult fit_null_em(const ShieldingModel& model, const Spectrum& spectrum, double tau,
                      std::optional<Vector> b_init = std::nullopt, const FitOptions& options = {});

/// Unconstrained MLE over x >= 0, b >= 0 by projected Fisher-scoring
/// (Newton with expected information) and backtracking on L. Every accepted
/// step increases L.
FitResult fit_full(const ShieldingModel& model, const Spectrum& spectrum, const ModelParams& init,
                   const FitOptions& options = {});

/// Number of fit_full calls made by this process.
std::size_t fit_full_invocations();

}  // namespace shieldscan
