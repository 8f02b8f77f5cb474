#include "shieldscan/inference.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "shieldscan/distributions.hpp"

namespace shieldscan {

namespace {

// Y_i / U_i with the 0/0 = 0 convention; a positive count over a zero mean
// cannot be evaluated.
Vector count_ratio(const Vector& unit_mean, const Spectrum& spectrum) {
  if (spectrum.size() != static_cast<std::size_t>(unit_mean.size())) {
    throw UsageError("spectrum length does not match the DRF");
  }
  Vector r(unit_mean.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const auto y = spectrum.counts[static_cast<std::size_t>(i)];
    if (y == 0) {
      r[i] = 0.0;
    } else if (unit_mean[i] > 0.0) {
      r[i] = static_cast<double>(y) / unit_mean[i];
    } else {
      throw EvaluationError("channel " + std::to_string(i + 1) + " has zero mean but " + std::to_string(y) +
                            " counts");
    }
  }
  return r;
}

Vector inverse_mean(const Vector& unit_mean) {
  if ((unit_mean.array() <= 0.0).any()) {
    throw IdentifiabilityError("mean spectrum is not positive in every channel (assumption A1 fails)");
  }
  return unit_mean.cwiseInverse();
}

// x^T A^{-1} x for symmetric positive definite A; nullopt when A is not PD.
constexpr double kSingularRtol = 1e-12;

// x^T a^{-1} x for the Schur complement `a`; nullopt when `a` is singular
// relative to `scale`, the largest diagonal entry of I11. Collinear
// materials leave rounding-level positive eigenvalues that LLT would accept.
std::optional<double> quadratic_inverse(const Matrix& a, const Vector& x, double scale) {
  if (a.rows() == 0) return 0.0;
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(a, Eigen::EigenvaluesOnly);
  const double top = std::max(eig.eigenvalues().cwiseAbs().maxCoeff(), scale);
  if (!(eig.eigenvalues().minCoeff() > kSingularRtol * top)) return std::nullopt;
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Vector z = llt.matrixL().solve(x);
  return z.squaredNorm();
}

void finish_statistic(TestReport& report, double raw, const TestOptions& options) {
  if (raw < 0.0) {
    if (raw < -options.negative_tolerance) {
      std::ostringstream os;
      os << to_string(report.kind) << " statistic " << raw << " is negative; clamped to 0";
      report.warnings.push_back(os.str());
    }
    raw = 0.0;
  }
  report.statistic = raw;
  report.p_value = report.df == 0 ? 1.0 : chi_squared_sf(raw, static_cast<double>(report.df));
}

FitResult converged_null_fit(const ShieldingModel& model, const Spectrum& spectrum, double tau,
                             const TestOptions& options) {
  FitResult fit = fit_null_em(model, spectrum, tau, std::nullopt, options.fit);
  if (!fit.converged) {
    throw FitFailure("EM fit of the unshielded model did not converge after " + std::to_string(fit.iterations) +
                         " iterations",
                     fit);
  }
  return fit;
}

FitResult converged_full_fit(const ShieldingModel& model, const Spectrum& spectrum, const FitResult& null_fit,
                             const TestOptions& options) {
  FitResult fit = fit_full(model, spectrum, null_fit.params, options.fit);
  if (!fit.converged) {
    throw FitFailure("full-model fit did not converge (KKT residual " + std::to_string(fit.kkt_residual) + ")", fit);
  }
  return fit;
}

}  // namespace

Matrix FisherBlocks::full() const {
  const Eigen::Index m = i11.rows();
  const Eigen::Index j = i22.rows();
  Matrix f(m + j, m + j);
  f.topLeftCorner(m, m) = i11;
  f.topRightCorner(m, j) = i12;
  f.bottomLeftCorner(j, m) = i12.transpose();
  f.bottomRightCorner(j, j) = i22;
  return f;
}

ScoreVector score(const ShieldingModel& model, const ModelParams& params, const Spectrum& spectrum) {
  const ModelTerms t = model.terms(params);
  const Vector r = count_ratio(t.unit_mean, spectrum);
  const Vector excess = r.array() - params.tau;  // Y_i / U_i - tau
  return ScoreVector{-(t.weighted.transpose() * excess), t.grouped.transpose() * excess};
}

Matrix information_matrix(const ShieldingModel& model, const ModelParams& params) {
  const ModelTerms t = model.terms(params);
  const Vector inv_u = inverse_mean(t.unit_mean);
  const Matrix w_scaled = inv_u.asDiagonal() * t.weighted;
  const Matrix t_scaled = inv_u.asDiagonal() * t.grouped;
  const Eigen::Index m = t.weighted.cols();
  const Eigen::Index j = t.grouped.cols();
  Matrix f(m + j, m + j);
  f.topLeftCorner(m, m) = t.weighted.transpose() * w_scaled;
  f.topRightCorner(m, j) = -(t.weighted.transpose() * t_scaled);
  f.bottomLeftCorner(j, m) = f.topRightCorner(m, j).transpose();
  f.bottomRightCorner(j, j) = t.grouped.transpose() * t_scaled;
  return f;
}

FisherBlocks fisher_blocks(const ShieldingModel& model, const ModelParams& params) {
  const Matrix f = information_matrix(model, params);
  const auto m = static_cast<Eigen::Index>(model.n_materials());
  const Eigen::Index j = f.rows() - m;
  FisherBlocks fb;
  fb.i11 = f.topLeftCorner(m, m);
  fb.i12 = f.topRightCorner(m, j);
  fb.i22 = f.bottomRightCorner(j, j);
  Eigen::LDLT<Matrix> ldlt(fb.i22);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || !(ldlt.vectorD().array() > 0.0).all()) {
    throw IdentifiabilityError(
        "information block I22 is singular: nuclide responses are linearly dependent (assumption A1 fails)");
  }
  fb.schur = fb.i11 - fb.i12 * ldlt.solve(fb.i12.transpose());
  fb.schur = 0.5 * (fb.schur + fb.schur.transpose());
  return fb;
}

Matrix observed_information(const ShieldingModel& model, const ModelParams& params, const Spectrum& spectrum) {
  const ModelTerms t = model.terms(params);
  const Vector r = count_ratio(t.unit_mean, spectrum);
  const Vector inv_u = inverse_mean(t.unit_mean);
  const Vector excess = params.tau - r.array();  // tau - Y_i / U_i
  const Vector r_over_u = r.cwiseProduct(inv_u);  // Y_i / U_i^2
  const auto& lib = model.library();
  const Matrix& S = model.drf().response();
  const Matrix& C = model.attenuation().coeffs();
  const auto M = static_cast<Eigen::Index>(model.n_materials());
  const auto J = static_cast<Eigen::Index>(model.n_nuclides());
  const auto K = static_cast<Eigen::Index>(lib.n_columns());

  Matrix f = Matrix::Zero(M + J, M + J);
  // x-x: sum_i [(tau - Y/U) H_i + Y/U^2 W W], H_i = sum_k u_ik c_km' c_km''
  for (Eigen::Index a = 0; a < M; ++a) {
    for (Eigen::Index c = a; c < M; ++c) {
      Vector w(K);
      for (Eigen::Index k = 0; k < K; ++k) {
        w[k] = t.attenuation[k] * params.b[static_cast<Eigen::Index>(lib.owner(static_cast<std::size_t>(k)))] *
               C(k, a) * C(k, c);
      }
      const Vector h = S * w;
      const double v = excess.dot(h) + (r_over_u.array() * t.weighted.col(a).array() * t.weighted.col(c).array()).sum();
      f(a, c) = f(c, a) = v;
    }
  }
  // x-b: -sum_i [(tau - Y/U) G_ikm + Y/U^2 W_im T_ik], G_ikm = sum_l t_ikl c_klm
  for (Eigen::Index a = 0; a < M; ++a) {
    Matrix g = Matrix::Zero(S.rows(), J);
    for (Eigen::Index k = 0; k < K; ++k) {
      g.col(static_cast<Eigen::Index>(lib.owner(static_cast<std::size_t>(k)))) += t.attenuation[k] * C(k, a) * S.col(k);
    }
    for (Eigen::Index h = 0; h < J; ++h) {
      const double v = -(excess.dot(g.col(h)) +
                         (r_over_u.array() * t.weighted.col(a).array() * t.grouped.col(h).array()).sum());
      f(a, M + h) = f(M + h, a) = v;
    }
  }
  // b-b: sum_i Y/U^2 T_ik T_ih
  f.bottomRightCorner(J, J) = t.grouped.transpose() * r_over_u.asDiagonal() * t.grouped;
  return f;
}

std::string to_string(TestKind kind) {
  switch (kind) {
    case TestKind::LM: return "LM";
    case TestKind::Wald: return "Wald";
    case TestKind::LR: return "LR";
  }
  return "?";
}

TestKind parse_test_kind(const std::string& name) {
  if (name == "lm" || name == "LM") return TestKind::LM;
  if (name == "wald" || name == "Wald" || name == "W") return TestKind::Wald;
  if (name == "lr" || name == "LR") return TestKind::LR;
  throw UsageError("unknown test method '" + name + "' (expected lm|wald|lr)");
}

TestReport lm_test(const ShieldingModel& model, const Spectrum& spectrum, double tau, const TestOptions& options) {
  TestReport report;
  report.kind = TestKind::LM;
  report.df = model.n_materials();
  report.fit = converged_null_fit(model, spectrum, tau, options);
  const ScoreVector sc = score(model, report.fit.params, spectrum);
  const FisherBlocks fb = fisher_blocks(model, report.fit.params);
  report.score_x = sc.score_x;
  report.schur = fb.schur;
  const auto q = quadratic_inverse(fb.schur, sc.score_x, fb.i11.diagonal().maxCoeff());
  if (!q) {
    throw IdentifiabilityError(
        "Schur complement of the information is singular: the presumed materials' attenuation directions are "
        "collinear with each other or with the nuclide responses (assumption A1 fails)");
  }
  finish_statistic(report, *q / tau, options);
  return report;
}

TestReport wald_test(const ShieldingModel& model, const Spectrum& spectrum, double tau,
                     const TestOptions& options) {
  TestReport report;
  report.kind = TestKind::Wald;
  report.df = model.n_materials();
  const FitResult null_fit = converged_null_fit(model, spectrum, tau, options);
  report.fit = converged_full_fit(model, spectrum, null_fit, options);
  const FisherBlocks fb = fisher_blocks(model, report.fit.params);
  report.schur = fb.schur;
  const Vector& xhat = report.fit.params.x;
  finish_statistic(report, tau * xhat.dot(fb.schur * xhat), options);
  return report;
}

TestReport lr_test(const ShieldingModel& model, const Spectrum& spectrum, double tau, const TestOptions& options) {
  TestReport report;
  report.kind = TestKind::LR;
  report.df = model.n_materials();
  FitResult null_fit = converged_null_fit(model, spectrum, tau, options);
  report.fit = converged_full_fit(model, spectrum, null_fit, options);
  const double raw = 2.0 * log_likelihood_difference(model, report.fit.params, null_fit.params, spectrum);
  report.null_fit = std::move(null_fit);
  finish_statistic(report, raw, options);
  return report;
}

TestReport run_test(TestKind kind, const ShieldingModel& model, const Spectrum& spectrum, double tau,
                    const TestOptions& options) {
  switch (kind) {
    case TestKind::LM: return lm_test(model, spectrum, tau, options);
    case TestKind::Wald: return wald_test(model, spectrum, tau, options);
    case TestKind::LR: return lr_test(model, spectrum, tau, options);
  }
  throw UsageError("unknown test kind");
}

double local_power(const FisherBlocks& fisher, const Vector& h1, double level) {
  if (!(level > 0.0 && level < 1.0)) throw UsageError("level must lie in (0, 1)");
  if (h1.size() != fisher.schur.rows()) throw UsageError("local alternative has the wrong dimension");
  Eigen::LLT<Matrix> llt(fisher.schur);
  if (fisher.schur.rows() == 0 || llt.info() != Eigen::Success) {
    throw IdentifiabilityError("Schur complement is not positive definite; local power is undefined");
  }
  const double df = static_cast<double>(h1.size());
  const double ncp = h1.dot(fisher.schur * h1);
  const double critical = chi_squared_quantile(1.0 - level, df);
  return noncentral_chi_squared_sf(critical, df, std::max(ncp, 0.0));
}

Conditioning condition_number(const Matrix& symmetric) {
  if (symmetric.rows() != symmetric.cols() || symmetric.rows() == 0) {
    throw UsageError("condition number needs a nonempty square matrix");
  }
  if (!symmetric.isApprox(symmetric.transpose(), 1e-10)) throw UsageError("condition number needs a symmetric matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetric, Eigen::EigenvaluesOnly);
  Conditioning c;
  c.lambda_min = eig.eigenvalues().minCoeff();
  c.lambda_max = eig.eigenvalues().maxCoeff();
  if (!(c.lambda_min > 0.0)) {
    c.value = std::numeric_limits<double>::infinity();
    std::ostringstream os;
    os << "matrix is singular or indefinite (smallest eigenvalue " << c.lambda_min << ")";
    c.diagnostic = os.str();
    return c;
  }
  c.value = std::sqrt(c.lambda_max / c.lambda_min);
  if (c.value > 30.0) c.diagnostic = "ill-conditioned (condition number above 30)";
  return c;
}

A1Report check_a1(const ShieldingModel& model, const ModelParams& null_params, double rtol) {
  A1Report rep;
  const auto M = static_cast<Eigen::Index>(model.n_materials());
  const auto J = static_cast<Eigen::Index>(model.n_nuclides());
  rep.required_rank = static_cast<std::size_t>(M + J);
  const ModelParams at_null = ModelParams::unshielded(null_params.b, model.n_materials(), null_params.tau);
  const ModelTerms t = model.terms(at_null);

  rep.min_unit_mean = t.unit_mean.minCoeff();
  rep.positive_mean = rep.min_unit_mean > 0.0;

  Matrix v(t.unit_mean.size(), M + J);
  v.leftCols(M) = -t.weighted;
  v.rightCols(J) = model.unshielded_response();
  for (Eigen::Index q = 0; q < v.cols(); ++q) {
    const double norm = v.col(q).norm();
    if (norm > 0.0) v.col(q) /= norm;
  }
  Eigen::JacobiSVD<Matrix> svd(v);
  rep.singular_values = svd.singularValues();
  const double largest = rep.singular_values.size() > 0 ? rep.singular_values[0] : 0.0;
  for (Eigen::Index q = 0; q < rep.singular_values.size(); ++q) {
    if (rep.singular_values[q] > rtol * largest) ++rep.rank;
  }
  rep.passes = rep.positive_mean && rep.rank == rep.required_rank;
  std::ostringstream os;
  if (!rep.positive_mean) os << "unshielded mean is not positive in every channel (min " << rep.min_unit_mean << "); ";
  if (rep.rank < rep.required_rank) {
    os << "direction matrix has rank " << rep.rank << " < " << rep.required_rank
       << ": attenuation or nuclide signatures are linearly dependent";
  }
  rep.diagnostic = os.str();
  return rep;
}

}  // namespace shieldscan
