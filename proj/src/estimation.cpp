#include "shieldscan/estimation.hpp"

#include <cassert>
#include <cmath>
#include <limits>

#include "shieldscan/inference.hpp"

namespace shieldscan {

namespace {

std::atomic<std::size_t> g_fit_full_calls{0};

// Projected score in standard-deviation units below which a stalled line
// search is accepted as stationary.
constexpr double kStationaryKkt = 1e-5;

double log_factorial_sum(const Spectrum& spectrum) {
  double s = 0.0;
  for (auto y : spectrum.counts) s += std::lgamma(static_cast<double>(y) + 1.0);
  return s;
}

// L from a precomputed unit mean; `lfact` is sum log(Y_i!).
double likelihood_from_mean(const Vector& unit_mean, const Spectrum& spectrum, double tau, double lfact) {
  double l = 0.0;
  for (Eigen::Index i = 0; i < unit_mean.size(); ++i) {
    const auto y = spectrum.counts[static_cast<std::size_t>(i)];
    const double mu = tau * unit_mean[i];
    if (y > 0) {
      if (!(mu > 0.0)) return -std::numeric_limits<double>::infinity();
      l += static_cast<double>(y) * std::log(mu);
    }
    l -= mu;
  }
  return l - lfact;
}

// Magnitude of the terms summed in L; decreases smaller than a few ulps of
// this are rounding noise.
double likelihood_scale(const Vector& unit_mean, const Spectrum& spectrum, double tau) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < unit_mean.size(); ++i) {
    const double mu = tau * unit_mean[i];
    const auto y = static_cast<double>(spectrum.counts[static_cast<std::size_t>(i)]);
    s += mu + (y > 0.0 ? y * (1.0 + std::abs(std::log(mu))) : 0.0);
  }
  return s;
}

struct LikelihoodChange {
  double delta;
  double noise;
};

// L(new) - L(old) summed from per-channel differences, so small steps are
// not swamped by the magnitude of L itself. The noise bound covers rounding
// in the sum and in the means themselves: an error of a few ulps in mu_i
// moves L by about (y_i - mu_i) times that error.
LikelihoodChange likelihood_change(const Vector& old_mean, const Vector& new_mean, const Vector& y, double tau) {
  double delta = 0.0;
  double magnitude = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double diff = new_mean[i] - old_mean[i];
    const double linear = -tau * diff;
    const double logterm = y[i] > 0.0 ? y[i] * std::log1p(diff / old_mean[i]) : 0.0;
    delta += linear + logterm;
    magnitude += std::abs(linear) + std::abs(logterm) + std::abs(y[i] - tau * new_mean[i]);
  }
  return {delta, 64.0 * std::numeric_limits<double>::epsilon() * magnitude + 1e-300};
}

void check_spectrum(const ShieldingModel& model, const Spectrum& spectrum) {
  if (spectrum.size() != model.n_channels()) {
    throw UsageError("spectrum has " + std::to_string(spectrum.size()) + " channels but the DRF has " +
                     std::to_string(model.n_channels()));
  }
  for (auto y : spectrum.counts) {
    if (y < 0) throw UsageError("spectrum counts must be nonnegative");
  }
}

Vector concat(const Vector& a, const Vector& b) {
  Vector out(a.size() + b.size());
  out << a, b;
  return out;
}

ModelParams split(const Vector& phi, Eigen::Index m, double tau) {
  return ModelParams{phi.head(m), phi.tail(phi.size() - m), tau};
}

// Fisher scoring on b with x = 0, starting from a converged EM iterate.
void polish_null(const ShieldingModel& model, const Spectrum& spectrum, FitResult& fit, const Vector& y,
                 Vector& unit_mean, const FitOptions& options) {
  const Matrix& S = model.unshielded_response();
  const double tau = fit.params.tau;
  const auto M = static_cast<Eigen::Index>(model.n_materials());
  for (std::size_t step = 0; step < options.polish_steps; ++step) {
    const ScoreVector sc = score(model, fit.params, spectrum);
    const Matrix info = tau * information_matrix(model, fit.params);
    const Eigen::LDLT<Matrix> ldlt(info.bottomRightCorner(info.rows() - M, info.cols() - M));
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return;
    const Vector dir = ldlt.solve(sc.score_b);
    const Vector& b = fit.params.b;
    if (!dir.allFinite() || dir.cwiseAbs().maxCoeff() <= 1e-15 * b.cwiseAbs().maxCoeff()) return;
    double t = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 30 && !accepted; ++ls, t *= 0.5) {
      const Vector next = b + t * dir;
      if ((next.array() <= 0.0).any()) continue;
      const Vector next_mean = S * next;
      // the rounding bound used for EM is far wider than these gains
      const double delta = likelihood_change(unit_mean, next_mean, y, tau).delta;
      if (delta > 0.0) {
        fit.params.b = next;
        unit_mean = next_mean;
        ++fit.polish_steps;
        accepted = true;
      }
    }
    if (!accepted) return;
  }
}

}  // namespace

double log_likelihood_difference(const ShieldingModel& model, const ModelParams& a, const ModelParams& b,
                                 const Spectrum& spectrum) {
  check_spectrum(model, spectrum);
  if (a.tau != b.tau) throw UsageError("likelihood difference needs a common detection time");
  const Vector ua = model.terms(a).unit_mean;
  const Vector ub = model.terms(b).unit_mean;
  const auto [delta, noise] = likelihood_change(ub, ua, spectrum.as_vector(), a.tau);
  (void)noise;
  return delta;
}

double log_likelihood(const ShieldingModel& model, const ModelParams& params, const Spectrum& spectrum) {
  check_spectrum(model, spectrum);
  const ModelTerms t = model.terms(params);
  return likelihood_from_mean(t.unit_mean, spectrum, params.tau, log_factorial_sum(spectrum));
}

Vector moment_start(const ShieldingModel& model, const Spectrum& spectrum, double tau) {
  const double total = static_cast<double>(spectrum.total());
  const auto J = static_cast<double>(model.n_nuclides());
  Vector b = (total / (J * tau)) * model.nuclide_totals().cwiseInverse();
  // an empty spectrum still needs a strictly positive start
  if (total == 0.0) b = model.nuclide_totals().cwiseInverse() / (J * tau);
  return b;
}

FitResult fit_null_em(const ShieldingModel& model, const Spectrum& spectrum, double tau, std::optional<Vector> b_init,
                      const FitOptions& options) {
  check_spectrum(model, spectrum);
  if (!(tau > 0.0)) throw UsageError("detection time must be positive");
  const Matrix& S = model.unshielded_response();
  const Vector& totals = model.nuclide_totals();
  for (Eigen::Index k = 0; k < totals.size(); ++k) {
    if (!(totals[k] > 0.0)) {
      throw UsageError("nuclide '" + model.library().nuclide(static_cast<std::size_t>(k)).name +
                       "' has a zero overall response");
    }
  }
  Vector b = b_init ? *b_init : moment_start(model, spectrum, tau);
  if (b.size() != totals.size()) throw UsageError("initial intensity vector has the wrong length");
  if (!b.allFinite() || (b.array() <= 0.0).any()) throw UsageError("EM start must be strictly positive");

  const Vector y = spectrum.as_vector();
  const double lfact = log_factorial_sum(spectrum);
  const Vector denom = tau * totals;

  FitResult fit;
  Vector unit_mean = S * b;
  double ll = likelihood_from_mean(unit_mean, spectrum, tau, lfact);

  Vector ratio(y.size());
  for (std::size_t it = 1; it <= options.max_iter; ++it) {
    for (Eigen::Index i = 0; i < y.size(); ++i) ratio[i] = y[i] > 0.0 ? y[i] / unit_mean[i] : 0.0;
    const Vector next = b.cwiseProduct(S.transpose() * ratio).cwiseQuotient(denom);
    const double crit = (next - b).lpNorm<1>() / b.lpNorm<1>();
    Vector next_mean = S * next;
    fit.iterations = it;
    fit.criterion_value = crit;
    if (options.track_likelihood) {
      const auto [delta, noise] = likelihood_change(unit_mean, next_mean, y, tau);
      if (delta < -noise) {
        fit.monotone = false;
        fit.worst_decrease = std::max(fit.worst_decrease, -delta);
      }
      assert(delta >= -noise && "EM log likelihood decreased");
      ll += delta;
    }
    b = next;
    unit_mean = std::move(next_mean);
    if (crit < options.tol) {
      fit.converged = true;
      break;
    }
  }
  fit.params = ModelParams::unshielded(b, model.n_materials(), tau);
  if (fit.converged) polish_null(model, spectrum, fit, y, unit_mean, options);
  fit.log_likelihood = likelihood_from_mean(unit_mean, spectrum, tau, lfact);
  return fit;
}

FitResult fit_full(const ShieldingModel& model, const Spectrum& spectrum, const ModelParams& init,
                   const FitOptions& options) {
  g_fit_full_calls.fetch_add(1, std::memory_order_relaxed);
  check_spectrum(model, spectrum);
  init.validate();
  const double tau = init.tau;
  const auto M = static_cast<Eigen::Index>(model.n_materials());
  const double lfact = log_factorial_sum(spectrum);
  const auto eval = [&](const Vector& phi) {
    return likelihood_from_mean(model.terms(split(phi, M, tau)).unit_mean, spectrum, tau, lfact);
  };

  Vector phi = concat(init.x, init.b);
  const Eigen::Index n = phi.size();
  double ll = eval(phi);
  if (!std::isfinite(ll)) throw UsageError("log likelihood is not finite at the initial point");
  const double noise =
      4.0 * std::numeric_limits<double>::epsilon() * likelihood_scale(model.terms(init).unit_mean, spectrum, tau);

  FitResult fit;
  bool stalled = false;
  Vector grad(n);
  Matrix info(n, n);
  for (std::size_t it = 1; it <= options.max_iter; ++it) {
    fit.iterations = it;
    const ModelParams current = split(phi, M, tau);
    const ScoreVector sc = score(model, current, spectrum);
    grad = concat(sc.score_x, sc.score_b);
    info = tau * information_matrix(model, current);

    std::vector<Eigen::Index> free;
    for (Eigen::Index p = 0; p < n; ++p) {
      if (phi[p] > 0.0 || grad[p] > 0.0) free.push_back(p);
    }
    Vector dir = Vector::Zero(n);
    if (!free.empty()) {
      const auto nf = static_cast<Eigen::Index>(free.size());
      Matrix f_ff(nf, nf);
      Vector g_f(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        g_f[a] = grad[free[static_cast<std::size_t>(a)]];
        for (Eigen::Index c = 0; c < nf; ++c) f_ff(a, c) = info(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(c)]);
      }
      Eigen::LDLT<Matrix> ldlt(f_ff);
      Vector d_f;
      if (ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 0.0).all()) {
        d_f = ldlt.solve(g_f);
      }
      if (d_f.size() != nf || !d_f.allFinite()) d_f = g_f.cwiseQuotient(f_ff.diagonal().cwiseMax(1e-300));
      for (Eigen::Index a = 0; a < nf; ++a) dir[free[static_cast<std::size_t>(a)]] = d_f[a];
    }

    // backtracking along the projection arc
    double step = 1.0;
    bool accepted = false;
    Vector trial;
    double ll_trial = ll;
    for (int ls = 0; ls < 60; ++ls) {
      trial = (phi + step * dir).cwiseMax(0.0);
      ll_trial = eval(trial);
      if (std::isfinite(ll_trial) && ll_trial >= ll + 1e-4 * grad.dot(trial - phi) && ll_trial >= ll) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // no representable ascent left along the scoring direction
      stalled = true;
      break;
    }
    const double change = (trial - phi).lpNorm<1>() / std::max(phi.lpNorm<1>(), 1e-300);
    if (ll - ll_trial > noise) {
      fit.monotone = false;
      fit.worst_decrease = std::max(fit.worst_decrease, ll - ll_trial);
    }
    phi = trial;
    ll = ll_trial;
    fit.criterion_value = change;
    if (change < options.tol) {
      fit.converged = true;
      break;
    }
  }

  fit.params = split(phi, M, tau);
  fit.log_likelihood = ll;
  {
    const ScoreVector sc = score(model, fit.params, spectrum);
    grad = concat(sc.score_x, sc.score_b);
    info = tau * information_matrix(model, fit.params);
    double kkt = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      const double pg = phi[p] > 0.0 ? grad[p] : std::max(grad[p], 0.0);
      const double scale = std::sqrt(std::max(info(p, p), 1e-300));
      kkt = std::max(kkt, std::abs(pg) / scale);
    }
    fit.kkt_residual = kkt;
    if (stalled) fit.converged = kkt < kStationaryKkt;
  }
  return fit;
}

std::size_t fit_full_invocations() { return g_fit_full_calls.load(std::memory_order_relaxed); }

}  // namespace shieldscan
