#pragma once

// Shared numerical foundation: datasets, covariance matrices, symmetric
// eigendecomposition, Gaussian log-likelihoods and the factor-model estimate
// type produced by every estimator.
//
// The generative model is zero-mean, so nothing in this library subtracts a
// sample mean. Callers working with non-centred data must centre it first.

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace factorlens {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Errors

/// Malformed or out-of-domain input data.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data that is well formed but degenerate for the requested operation.
class DegenerateInputError : public InputError {
 public:
  using InputError::InputError;
};

/// Invalid algorithm parameter (K too large, window out of range, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Domain types

/// N x M sample matrix, one observation per row. Entries are finite.
class Dataset {
 public:
  explicit Dataset(Matrix samples);

  const Matrix& samples() const noexcept { return samples_; }
  Index n() const noexcept { return samples_.rows(); }
  Index m() const noexcept { return samples_.cols(); }

  /// Rows [begin, begin + count).
  Dataset slice(Index begin, Index count) const;
  Dataset head(Index count) const { return slice(0, count); }
  Dataset select_rows(std::span<const Index> rows) const;

 private:
  Matrix samples_;
};

/// Symmetric M x M covariance matrix.
///
/// The constructor checks finiteness and symmetry (1e-12 relative to the
/// largest entry) and then symmetrizes exactly. Positive semidefiniteness is
/// guaranteed by every producer in this library; `checked` additionally
/// verifies it for matrices arriving from outside.
class CovMatrix {
 public:
  explicit CovMatrix(Matrix entries);
  static CovMatrix checked(Matrix entries);
  static CovMatrix identity(Index m) { return CovMatrix(Matrix::Identity(m, m)); }

  const Matrix& matrix() const noexcept { return entries_; }
  Index m() const noexcept { return entries_.rows(); }
  double trace() const { return entries_.trace(); }

 private:
  Matrix entries_;
};

/// Orthonormal basis with eigenvalues sorted in descending order.
struct EigenSystem {
  Matrix basis;   // columns b_1..b_M
  Vector values;  // s_1 >= ... >= s_M
};

/// Factor-model covariance Sigma = W W^T + diag(residual).
///
/// `loadings` is the M x K matrix W whose outer product is the factor part F.
/// Sigma is assembled from the parts at construction; if it is positive
/// definite the inverse is stored as well.
class FactorModelEstimate {
 public:
  FactorModelEstimate(Matrix loadings, Vector residual,
                      std::vector<std::string> warnings = {});

  const Matrix& loadings() const noexcept { return loadings_; }
  const Vector& residual() const noexcept { return residual_; }
  const CovMatrix& sigma() const noexcept { return sigma_; }
  const std::optional<Matrix>& inverse() const noexcept { return inverse_; }
  Index rank() const noexcept { return loadings_.cols(); }
  Index m() const noexcept { return residual_.size(); }
  Matrix factor_part() const { return loadings_ * loadings_.transpose(); }

  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  void add_warning(std::string w) { warnings_.push_back(std::move(w)); }

 private:
  Matrix loadings_;
  Vector residual_;
  CovMatrix sigma_;
  std::optional<Matrix> inverse_;
  std::vector<std::string> warnings_;
};

// ---------------------------------------------------------------------------
// Operations

/// (1/N) sum_n x_n x_n^T. No mean subtraction.
CovMatrix sample_covariance(const Dataset& data);

/// Eigendecomposition with descending eigenvalues. Each eigenvector's first
/// component with magnitude above 1e-10 is made positive; equal eigenvalues
/// keep the solver's order.
EigenSystem eigh_desc(const CovMatrix& m);
EigenSystem eigh_desc(const Matrix& symmetric);

/// log det of a symmetric positive definite matrix, or nullopt when the matrix
/// is singular. Uses Cholesky and falls back to the eigenvalue sum when the
/// factorization fails on a matrix that is positive definite within tolerance.
std::optional<double> log_det_spd(const Matrix& a);

/// Average in-sample log-likelihood log p(X | Sigma) / N. Returns -inf when
/// Sigma is singular.
double avg_loglik(const CovMatrix& sigma, const Dataset& data);

/// Total log p(X | Sigma) = N * avg_loglik.
double total_loglik(const CovMatrix& sigma, const Dataset& data);

/// Expected log-density of N(0, Sigma_*) samples under N(0, Sigma):
/// -1/2 (M log 2 pi + log det Sigma + tr(Sigma^-1 Sigma_*)).
/// Returns -inf when Sigma is singular.
double expected_loglik(const CovMatrix& sigma, const CovMatrix& sigma_star);

/// KL( N(0, Sigma_*) || N(0, Sigma) ). +inf when Sigma is singular.
double kl_divergence(const CovMatrix& sigma_star, const CovMatrix& sigma);

/// Largest |a_ij - b_ij| relative to max(1, max |b_ij|).
double max_rel_diff(const Matrix& a, const Matrix& b);

/// ||a - b||_F / ||b||_F.
double rel_frobenius(const Matrix& a, const Matrix& b);

}  // namespace factorlens
