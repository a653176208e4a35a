#pragma once

// General (nonuniform) residual-variance estimators:
//   MRH  PCA factors with residuals chosen to keep the sample marginal variances
//   EM   zero-mean factor-analysis EM, initialized from MRH
//   TM   trace penalty with Sigma^-1 = V - G, V diagonal; G in closed form for
//        fixed V, V by quasi-Newton ascent on the resulting reduced objective
//   STM  trace penalty on componentwise-rescaled data, alternating UTM with a
//        unit-determinant diagonal rescaling T

#include "factorlens/core.hpp"
#include "factorlens/uniform.hpp"

#include <optional>
#include <stdexcept>

namespace factorlens {

/// Iterative solver stopped at its cap before meeting its tolerance. Carries
/// the best iterate found.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what,
                   std::optional<FactorModelEstimate> best = std::nullopt)
      : std::runtime_error(what), best_(std::move(best)) {}
  const std::optional<FactorModelEstimate>& best() const noexcept { return best_; }

 private:
  std::optional<FactorModelEstimate> best_;
};

// ---------------------------------------------------------------------------
// MRH

FactorModelEstimate mrh_fit(const CovMatrix& sample_cov, Index k);
FactorModelEstimate mrh_from_eigen(const CovMatrix& sample_cov,
                                   const EigenSystem& eig, Index k);
FactorModelEstimate mrh_fit(const Dataset& data, Index k);

// ---------------------------------------------------------------------------
// EM

struct EmParams {
  Index k = 0;
  int max_iter = 1000;
  double rel_tol = 1e-3;       // max_i |dR_ii / R_ii|
  double residual_floor = 1e-8;  // relative to mean(diag Sigma_SAM)
};

struct EmResult {
  FactorModelEstimate estimate;
  int iterations;
  bool converged;
  std::vector<double> loglik_trace;  // in-sample avg log-likelihood, start + each iteration
};

EmResult em_fit(const CovMatrix& sample_cov, const EmParams& params,
                const std::optional<FactorModelEstimate>& init = std::nullopt);
EmResult em_fit(const Dataset& data, const EmParams& params,
                const std::optional<FactorModelEstimate>& init = std::nullopt);

// ---------------------------------------------------------------------------
// TM

struct TmParams {
  double lambda = 0.0;
  int max_sweeps = 500;  // quasi-Newton iterations, one G-step each
  double stationarity_tol = 1e-6;  // max_i |Sigma_ii - S_ii| / S_ii
  std::optional<Vector> v_init;    // warm start for the diagonal V
};

struct TmResult {
  FactorModelEstimate estimate;
  Vector v;                         // diagonal of V at the solution
  int sweeps;
  double stationarity;
  std::vector<double> objective_trace;  // (log p - lambda tr G) / N per iteration
};

/// Closed-form maximizer over G >= 0 for a fixed diagonal V:
/// Sigma = V^-1/2 U max(D, 1) U^T V^-1/2 with U D U^T = V^1/2 (S - lambda' I) V^1/2.
/// Returned as a factor-model estimate with residual V^-1.
struct GStepResult {
  FactorModelEstimate estimate;
  Vector d;       // eigenvalues D (descending)
  Matrix u;       // eigenvectors U
};
GStepResult lemma1_gstep(const CovMatrix& sample_cov, const Vector& v,
                         double lambda_prime);

/// (log p(X | Sigma) - lambda tr(G)) / N for Sigma^-1 = V - G.
double tm_objective(const CovMatrix& sample_cov, Index n, double lambda,
                    const Matrix& precision, const Vector& v);

TmResult tm_fit(const CovMatrix& sample_cov, Index n, const TmParams& params);
TmResult tm_fit(const Dataset& data, const TmParams& params);

// ---------------------------------------------------------------------------
// STM

/// Positive diagonal scaling t_1..t_M.
struct ScalingMatrix {
  Vector diag;
};

struct StmParams {
  double lambda = 0.0;
  double rel_tol = 1e-3;  // max_i |dT_ii / T_ii|
  int max_sweeps = 200;
  std::optional<Vector> t_init;
};

struct StmResult {
  FactorModelEstimate estimate;
  ScalingMatrix scaling;
  int sweeps;
  bool converged;
  std::vector<double> objective_trace;  // (log p(TX | Sigma) - lambda tr G) / N per sweep
};

/// Minimizes t^T (Sigma^-1 o S) t over t > 0 with sum(log t) = 0.
/// Throws DegenerateInputError if a row of Sigma^-1 o S vanishes.
ScalingMatrix tstep_solve(const CovMatrix& sigma, const CovMatrix& sample_cov,
                          const std::optional<Vector>& init = std::nullopt);
ScalingMatrix tstep_solve_precision(const Matrix& precision,
                                    const CovMatrix& sample_cov,
                                    const std::optional<Vector>& init = std::nullopt);

/// Objective of the scaled trace-penalized problem divided by N.
double stm_objective(const CovMatrix& sample_cov, Index n, double lambda,
                     const UtmSolution& utm, const Vector& t);

StmResult stm_fit(const CovMatrix& sample_cov, Index n, const StmParams& params);
StmResult stm_fit(const Dataset& data, const StmParams& params);

}  // namespace factorlens
