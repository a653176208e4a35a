#pragma once

// Reference solvers and Monte Carlo verifiers used to check the fast
// estimators and the analytical results they rest on. Everything here is
// meant for small or desk-scale problems.

#include "factorlens/core.hpp"
#include "factorlens/nonuniform.hpp"
#include "factorlens/uniform.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace factorlens {

/// A reference computation could not reach its tolerance; the comparison it
/// was meant to support is inconclusive rather than failed.
class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Reference solver for the trace-penalized problems
//
//   max log det P - tr(P S) - lambda' tr G,  P = V - G,  G >= 0,  lambda' = 2 lambda / N
//
// with V = v I (uniform) or V diagonal, by two-block ADMM on
//   P = Y,  G + Y = V,
// blocks (P, G) and (Y, V), fixed penalty and over-relaxation.

enum class SdpFormulation { kUniform, kDiagonal };

struct AdmmOptions {
  double rho = 1.0;          // on the problem rescaled to unit mean diagonal
  double relaxation = 1.6;
  int max_iter = 100000;
  double tol = 1e-10;        // primal and dual residual norms
  double kkt_tol = 1e-6;
  Index max_m = 30;          // reference scale; raise deliberately for benchmarks
};

struct SdpSolution {
  CovMatrix sigma;
  int iterations;
  double primal_residual;
  double dual_residual;
  double kkt_residual;  // relative, see sdp_kkt_residual
};

SdpSolution sdp_reference_solve(SdpFormulation formulation, const CovMatrix& sample_cov,
                                Index n, double lambda, const AdmmOptions& options = {});

/// First-order optimality of (Sigma, G) with V = Sigma^-1 + G: stationarity in
/// V (trace or diagonal of Sigma - S), Sigma - S + lambda' I >= 0, G >= 0,
/// G (Sigma - S + lambda' I) = 0 and V of the required shape. Each term is
/// relative; the maximum is returned.
double sdp_kkt_residual(SdpFormulation formulation, const CovMatrix& sample_cov, Index n,
                        double lambda, const Matrix& sigma, const Matrix& g);

// ---------------------------------------------------------------------------
// Optimal eigenvalues for a fixed basis

struct OptimalEigenvalues {
  Vector h_star;  // h_i = b_i^T Sigma_* b_i
};

OptimalEigenvalues optimal_eigenvalues(const Matrix& basis, const CovMatrix& sigma_star);
inline OptimalEigenvalues optimal_eigenvalues(const EigenSystem& eig, const CovMatrix& sigma_star) {
  return optimal_eigenvalues(eig.basis, sigma_star);
}

// ---------------------------------------------------------------------------
// T-step reference: minimizes t^T (Sigma^-1 o S) t subject to sum(log t) = 0
// by restarted Nelder-Mead over free log-scales. Small M only.

ScalingMatrix tstep_reference_solve(const CovMatrix& sigma, const CovMatrix& sample_cov);

// ---------------------------------------------------------------------------
// Spiked covariance Monte Carlo

struct SpikedModel {
  Index m;
  Index n;
  double sigma2 = 1.0;
  std::vector<double> spikes;  // descending, each > sigma2

  double rho() const { return static_cast<double>(m) / static_cast<double>(n); }
  void validate() const;
  /// diag(spikes..., sigma2, ..., sigma2)
  Vector population_diagonal() const;
  /// l + rho l sigma^2 / (l - sigma^2): limit of the top sample eigenvalue.
  double spike_location(std::size_t i) const;
  bool supercritical(std::size_t i) const;
};

struct MonteCarloStat {
  double mean;
  double se;
};
MonteCarloStat mc_stat(const std::vector<double>& values);

struct Theorem2Report {
  std::vector<double> offsets;      // s_1 - h_1* per trial
  std::vector<double> top_eigs;     // s_1 per trial
  MonteCarloStat offset;
  MonteCarloStat top_eig;
  double bracket_lo;                // 2 rho sigma^2 - tol
  double bracket_hi;                // (2 + 2 sigma^2 / (l - sigma^2)) rho sigma^2 + tol
  double spike_prediction;
  double spike_rel_err;
  double tol;
  double spike_rel_tol;
  double lambda_guidance_correction;  // 2 lambda / N at lambda = M sigma^2
  bool offset_pass;
  bool spike_pass;
  bool pass() const { return offset_pass && spike_pass; }
};

/// Offsets of the leading eigenvalue. Requires the leading spike to be
/// supercritical, l > (1 + sqrt(rho)) sigma^2.
Theorem2Report verify_theorem2(const SpikedModel& model, int trials, std::uint64_t seed,
                               double tol = 0.15, double spike_rel_tol = 0.05);

struct Prop1Report {
  std::vector<double> ratios;  // tr S / tr Sigma_*
  double epsilon;
  int deviations;              // trials with |ratio - 1| >= epsilon
  double deviation_frequency;
};

Prop1Report verify_prop1_trace(const SpikedModel& model, int trials, double epsilon,
                               std::uint64_t seed);

// ---------------------------------------------------------------------------
// Closed forms for the residual-bias examples, R_* = diag(r, 1, ..., 1),
// F_* = 1 1^T

struct Prop2Result {
  double q;      // top eigenvalue of R_* + F_*
  double ratio;  // f_1 / f_i of its eigenvector
};
Prop2Result prop2_eigvector_ratio(Index m, double r);
/// Same quantities from a dense eigendecomposition.
Prop2Result prop2_numeric(Index m, double r);

struct Prop3Result {
  Index rank;                   // rank of the estimated factor part
  std::optional<double> ratio;  // f_1 / f_i from the estimate, when rank 1
  double q_plus;                // larger root of the characteristic quadratic
  double ratio_closed_form;     // r (q_+ + 1 - M)
};

/// Idealized TM with S = Sigma_* and V = R_*^-1, computed with the closed-form
/// G-step; the closed-form quantities are returned alongside.
Prop3Result prop3_idealized_tm(Index m, Index n, double lambda, double r);
double prop3_q_plus(Index m, double lambda_prime, double r);

// ---------------------------------------------------------------------------
// Verification harness

enum class CheckStatus { kPass, kFail, kInconclusive };
std::string to_string(CheckStatus s);

struct CheckResult {
  std::string section;
  std::string name;
  CheckStatus status;
  double value;
  double tolerance;
  std::string detail;
};

/// Implementations under test; tests substitute faulty doubles to confirm the
/// harness notices.
struct VerifyHooks {
  std::function<UtmSolution(const CovMatrix&, Index, double)> utm =
      [](const CovMatrix& s, Index n, double lambda) { return utm_fit(s, n, UtmParams{lambda}); };
  std::function<FactorModelEstimate(const CovMatrix&, Index, double)> tm =
      [](const CovMatrix& s, Index n, double lambda) {
        TmParams p;
        p.lambda = lambda;
        return tm_fit(s, n, p).estimate;
      };
  std::function<GStepResult(const CovMatrix&, const Vector&, double)> gstep =
      [](const CovMatrix& s, const Vector& v, double lp) { return lemma1_gstep(s, v, lp); };
  std::function<Prop2Result(Index, double)> prop2 = prop2_eigvector_ratio;
  std::function<Prop3Result(Index, Index, double, double)> prop3 = prop3_idealized_tm;
};

struct VerifyOptions {
  std::set<std::string> only;  // empty runs every section
  std::uint64_t seed = 20130223;
  int oracle_instances = 20;
  int structure_spectra = 200;
  int theorem2_trials = 20;
  int prop1_trials = 100;
  int threads = 1;
};

const std::vector<std::string>& verify_sections();

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool any_fail() const;
  bool any_inconclusive() const;
  std::string to_json() const;
};

VerifyReport run_verification(const VerifyOptions& options, const VerifyHooks& hooks = {});

}  // namespace factorlens
