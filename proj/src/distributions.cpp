#include "shieldscan/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/special_functions/gamma.hpp>

#include "shieldscan/errors.hpp"

namespace shieldscan {

double chi_squared_sf(double x, double df) {
  if (!(df > 0.0)) throw UsageError("chi-squared degrees of freedom must be positive");
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(df / 2.0, x / 2.0);
}

double chi_squared_cdf(double x, double df) {
  if (!(df > 0.0)) throw UsageError("chi-squared degrees of freedom must be positive");
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return boost::math::gamma_p(df / 2.0, x / 2.0);
}

double chi_squared_quantile(double p, double df) {
  if (!(p > 0.0 && p < 1.0)) throw UsageError("quantile probability must lie in (0, 1)");
  return 2.0 * boost::math::gamma_p_inv(df / 2.0, p);
}

double noncentral_chi_squared_sf(double x, double df, double ncp, double tail_tol) {
  if (!(ncp >= 0.0)) throw UsageError("noncentrality must be nonnegative");
  if (ncp == 0.0) return chi_squared_sf(x, df);
  if (x <= 0.0) return 1.0;
  const double lambda = ncp / 2.0;
  const auto mode = static_cast<long>(std::floor(lambda));
  const auto log_weight = [&](long j) {
    return -lambda + static_cast<double>(j) * std::log(lambda) - std::lgamma(static_cast<double>(j) + 1.0);
  };
  double total_weight = 0.0;
  double sum = 0.0;
  // walk up from the mode
  for (long j = mode;; ++j) {
    const double w = std::exp(log_weight(j));
    total_weight += w;
    sum += w * chi_squared_sf(x, df + 2.0 * static_cast<double>(j));
    if (1.0 - total_weight < tail_tol) return std::clamp(sum, 0.0, 1.0);
    if (j > mode && w < tail_tol * 1e-3) break;
  }
  for (long j = mode - 1; j >= 0; --j) {
    const double w = std::exp(log_weight(j));
    total_weight += w;
    sum += w * chi_squared_sf(x, df + 2.0 * static_cast<double>(j));
    if (1.0 - total_weight < tail_tol) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

double noncentral_chi_squared_cdf(double x, double df, double ncp, double tail_tol) {
  return 1.0 - noncentral_chi_squared_sf(x, df, ncp, tail_tol);
}

double kolmogorov_sf(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.3) {
    // small-lambda form converges faster: sqrt(2 pi)/lambda sum exp(-(2k-1)^2 pi^2 / (8 lambda^2))
    const double pi = 3.14159265358979323846;
    double s = 0.0;
    for (int k = 1; k < 50; ++k) {
      const double t = (2.0 * k - 1.0) * pi / lambda;
      s += std::exp(-t * t / 8.0);
    }
    return std::clamp(1.0 - std::sqrt(2.0 * pi) / lambda * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k < 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

KsResult ks_test_chi_squared(std::vector<double> sample, double df) {
  if (sample.empty()) throw UsageError("KS test needs a nonempty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = chi_squared_cdf(sample[i], df);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  const double sq = std::sqrt(n);
  return {d, kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d)};
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw UsageError("KS test needs nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d)};
}

}  // namespace shieldscan
