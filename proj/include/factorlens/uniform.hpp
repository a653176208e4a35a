#pragma once

// Uniform-residual estimators.
//
// URM: rank-constrained maximum likelihood with R = sigma^2 I, solved in
// closed form by PCA. UTM: trace-penalized maximum likelihood over
// Sigma^-1 = v I - G, solved by soft-thresholding the sample eigenvalues by
// 2 lambda / N while preserving the trace.
//
// Both accept either a Dataset or a precomputed covariance (plus N for UTM),
// and expose *_from_eigen variants so a parameter grid can share one
// eigendecomposition.

#include "factorlens/core.hpp"

namespace factorlens {

struct UrmParams {
  Index k = 0;  // number of factors, 0 <= k <= M-1
};

struct UtmParams {
  double lambda = 0.0;  // trace-penalty coefficient, >= 0
};

struct UtmSolution {
  FactorModelEstimate estimate;
  double v_hat;          // reciprocal of the flat (residual) eigenvalue level
  Index k_effective;     // eigenvalues strictly above the threshold
  Vector eigenvalues;    // h_1 >= ... >= h_M
  double threshold;      // 2 lambda / N
};

/// Residual variance of URM: mean of the trailing M-K sample eigenvalues.
double urm_residual_variance(const Vector& desc_values, Index k);

FactorModelEstimate urm_from_eigen(const EigenSystem& eig, UrmParams params);
FactorModelEstimate urm_fit(const CovMatrix& sample_cov, UrmParams params);
FactorModelEstimate urm_fit(const Dataset& data, UrmParams params);

/// The O(M) tail of the UTM procedure: given descending sample eigenvalues and
/// threshold 2 lambda / N, returns (K, 1/v_hat, h).
struct UtmSpectrum {
  Index k;
  double flat_level;  // 1 / v_hat
  Vector h;
};
UtmSpectrum utm_spectrum(const Vector& desc_values, double threshold);

UtmSolution utm_from_eigen(const EigenSystem& eig, Index n, UtmParams params);
UtmSolution utm_fit(const CovMatrix& sample_cov, Index n, UtmParams params);
UtmSolution utm_fit(const Dataset& data, UtmParams params);

/// Assembles sum_k (h_k - flat) b_k b_k^T + flat I as a factor-model estimate.
FactorModelEstimate spectral_estimate(const Matrix& basis, const Vector& h,
                                      Index k, double flat_level,
                                      std::vector<std::string> warnings = {});

}  // namespace factorlens
