#pragma once

// Score, Fisher information and the three classical tests for shielding
// (Lagrange multiplier, Wald, likelihood ratio).

#include <string>
#include <vector>

#include "shieldscan/estimation.hpp"
#include "shieldscan/model.hpp"

namespace shieldscan {

struct ScoreVector {
  Vector score_x;  // dL/dx_m
  Vector score_b;  // dL/db_k
};

/// Per-unit-time information blocks; the Fisher information is tau times
/// [[I11, I12], [I12^T, I22]]. I12 carries the negative sign that follows
/// from attenuation lowering the mean.
struct FisherBlocks {
  Matrix i11;
  Matrix i12;
  Matrix i22;
  Matrix schur;  // I11 - I12 I22^{-1} I21

  /// Full (M+J) x (M+J) per-unit-time information.
  Matrix full() const;
};

ScoreVector score(const ShieldingModel& model, const ModelParams& params, const Spectrum& spectrum);

/// Throws IdentifiabilityError when I22 or the Schur complement is singular.
FisherBlocks fisher_blocks(const ShieldingModel& model, const ModelParams& params);

/// [[I11, I12], [I12^T, I22]] without factorising anything.
Matrix information_matrix(const ShieldingModel& model, const ModelParams& params);

/// -d^2 L / dphi dphi^T from the analytic second derivatives.
Matrix observed_information(const ShieldingModel& model, const ModelParams& params, const Spectrum& spectrum);

enum class TestKind { LM, Wald, LR };

std::string to_string(TestKind kind);
TestKind parse_test_kind(const std::string& name);

struct TestReport {
  TestKind kind = TestKind::LM;
  double statistic = 0.0;
  std::size_t df = 0;
  double p_value = 1.0;
  FitResult fit;                     // null fit for LM, full fit for Wald and LR
  std::optional<FitResult> null_fit;  // LR only
  Vector score_x;                    // LM only
  Matrix schur;
  std::vector<std::string> warnings;
};

struct TestOptions {
  FitOptions fit;
  /// Negative statistics within this magnitude are rounding noise.
  double negative_tolerance = 1e-8;
};

/// xi_LM = (1/tau) U1^T schur^{-1} U1 at the constrained fit. Only the null
/// model is fitted.
TestReport lm_test(const ShieldingModel& model, const Spectrum& spectrum, double tau, const TestOptions& options = {});

/// xi_W = tau xhat^T schur(phihat) xhat.
TestReport wald_test(const ShieldingModel& model, const Spectrum& spectrum, double tau,
                     const TestOptions& options = {});

/// xi_LR = 2 (L(phihat) - L(phitilde)).
TestReport lr_test(const ShieldingModel& model, const Spectrum& spectrum, double tau, const TestOptions& options = {});

TestReport run_test(TestKind kind, const ShieldingModel& model, const Spectrum& spectrum, double tau,
                    const TestOptions& options = {});

/// P(noncentral chi^2_M(ncp) > chi^2_M quantile at 1 - level) with
/// ncp = h1^T schur h1.
double local_power(const FisherBlocks& fisher, const Vector& h1, double level);

struct Conditioning {
  double value = 1.0;  // sqrt(lambda_max / lambda_min); +inf when singular
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  std::string diagnostic;
};

Conditioning condition_number(const Matrix& symmetric);

struct A1Report {
  std::size_t rank = 0;
  std::size_t required_rank = 0;
  Vector singular_values;  // of the column-normalised direction matrix
  bool positive_mean = false;
  double min_unit_mean = 0.0;
  bool passes = false;
  std::string diagnostic;
};

/// Checks positivity of the unshielded mean and linear independence of the
/// M attenuation directions v_q = -sum_j b_j sum_l S_ijl c_jlq and the J
/// nuclide responses S_iq.
A1Report check_a1(const ShieldingModel& model, const ModelParams& null_params, double rtol = 1e-10);

}  // namespace shieldscan
