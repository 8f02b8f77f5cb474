#pragma once

#include <cstddef>
#include <vector>

namespace shieldscan {

/// Upper tail of chi^2_df, from the regularised incomplete gamma function.
double chi_squared_sf(double x, double df);
double chi_squared_cdf(double x, double df);
/// Quantile of chi^2_df at probability p.
double chi_squared_quantile(double p, double df);

/// Noncentral chi^2 upper tail as a Poisson(ncp/2) mixture of central
/// chi^2_{df+2j} tails, summed outward from the mixture mode until the
/// unvisited Poisson weight is below `tail_tol`.
double noncentral_chi_squared_sf(double x, double df, double ncp, double tail_tol = 1e-12);
double noncentral_chi_squared_cdf(double x, double df, double ncp, double tail_tol = 1e-12);

/// Asymptotic Kolmogorov upper tail P(K > lambda).
double kolmogorov_sf(double lambda);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// One-sample KS test of `sample` against chi^2_df.
KsResult ks_test_chi_squared(std::vector<double> sample, double df);
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

}  // namespace shieldscan
