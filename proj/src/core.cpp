#include "factorlens/core.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace factorlens {

namespace {

constexpr double kSymmetryTol = 1e-12;
constexpr double kPsdTol = 1e-10;
// Pivot ratio below which a matrix is treated as numerically singular.
constexpr double kSingularRatio = 1e-14;

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double max_abs(const Matrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

// Cholesky of an SPD matrix, rejecting numerically singular ones.
std::optional<Eigen::LLT<Matrix>> factor_spd(const Matrix& a) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Vector pivots = llt.matrixLLT().diagonal().array().square();
  const double scale = a.diagonal().cwiseAbs().maxCoeff();
  if (!pivots.allFinite() || pivots.minCoeff() <= kSingularRatio * scale)
    return std::nullopt;
  return llt;
}

double gaussian_term(Index m, double log_det, double trace_term) {
  return -0.5 * (static_cast<double>(m) * kLog2Pi + log_det + trace_term);
}

}  // namespace

// ---------------------------------------------------------------------------

Dataset::Dataset(Matrix samples) : samples_(std::move(samples)) {
  if (samples_.rows() < 1 || samples_.cols() < 1)
    throw InputError("Dataset: need at least one row and one column");
  if (!samples_.allFinite())
    throw InputError("Dataset: samples contain non-finite entries");
}

Dataset Dataset::slice(Index begin, Index count) const {
  if (begin < 0 || count < 1 || begin + count > n())
    throw ParameterError("Dataset::slice: rows [" + std::to_string(begin) +
                         ", " + std::to_string(begin + count) +
                         ") out of range for " + std::to_string(n()) + " rows");
  return Dataset(samples_.middleRows(begin, count));
}

Dataset Dataset::select_rows(std::span<const Index> rows) const {
  Matrix out(static_cast<Index>(rows.size()), m());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= n())
      throw ParameterError("Dataset::select_rows: row index out of range");
    out.row(static_cast<Index>(i)) = samples_.row(rows[i]);
  }
  return Dataset(std::move(out));
}

CovMatrix::CovMatrix(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols() || entries_.rows() < 1)
    throw InputError("CovMatrix: matrix must be square and non-empty");
  if (!entries_.allFinite())
    throw InputError("CovMatrix: non-finite entries");
  const double asym = max_abs(entries_ - entries_.transpose());
  if (asym > kSymmetryTol * std::max(1.0, max_abs(entries_)))
    throw InputError("CovMatrix: matrix is not symmetric (max asymmetry " +
                     std::to_string(asym) + ")");
  entries_ = 0.5 * (entries_ + entries_.transpose()).eval();
}

CovMatrix CovMatrix::checked(Matrix entries) {
  CovMatrix c(std::move(entries));
  Eigen::SelfAdjointEigenSolver<Matrix> es(c.entries_, Eigen::EigenvaluesOnly);
  const double norm = es.eigenvalues().cwiseAbs().maxCoeff();
  if (es.eigenvalues().minCoeff() < -kPsdTol * std::max(norm, 1e-300))
    throw InputError("CovMatrix: matrix is not positive semidefinite");
  return c;
}

FactorModelEstimate::FactorModelEstimate(Matrix loadings, Vector residual,
                                         std::vector<std::string> warnings)
    : loadings_(std::move(loadings)),
      residual_(std::move(residual)),
      sigma_(Matrix::Identity(1, 1)),
      warnings_(std::move(warnings)) {
  const Index m = residual_.size();
  if (m < 1 || loadings_.rows() != m)
    throw InputError("FactorModelEstimate: loadings/residual size mismatch");
  if (!loadings_.allFinite() || !residual_.allFinite())
    throw InputError("FactorModelEstimate: non-finite parameters");
  if (residual_.minCoeff() < 0.0)
    throw InputError("FactorModelEstimate: negative residual variance");

  Matrix sigma = loadings_ * loadings_.transpose();
  sigma.diagonal() += residual_;
  sigma_ = CovMatrix(std::move(sigma));

  if (residual_.minCoeff() > 0.0) {
    // Woodbury: (R + W W^T)^-1 = R^-1 - R^-1 W (I + W^T R^-1 W)^-1 W^T R^-1
    const Vector rinv = residual_.cwiseInverse();
    const Matrix rw = rinv.asDiagonal() * loadings_;
    Matrix core = Matrix::Identity(rank(), rank()) + loadings_.transpose() * rw;
    Matrix inv = rinv.asDiagonal();
    if (rank() > 0) inv -= rw * core.llt().solve(rw.transpose());
    inverse_ = 0.5 * (inv + inv.transpose());
  } else if (auto llt = factor_spd(sigma_.matrix())) {
    inverse_ = llt->solve(Matrix::Identity(m, m));
  }
}

// ---------------------------------------------------------------------------

CovMatrix sample_covariance(const Dataset& data) {
  const Matrix& x = data.samples();
  Matrix s = Matrix::Zero(x.cols(), x.cols());
  s.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
  s.triangularView<Eigen::StrictlyUpper>() = s.transpose();
  s /= static_cast<double>(x.rows());
  return CovMatrix(std::move(s));
}

EigenSystem eigh_desc(const Matrix& a) {
  if (a.rows() != a.cols())
    throw InputError("eigh_desc: matrix is not square");
  return eigh_desc(CovMatrix(a));
}

EigenSystem eigh_desc(const CovMatrix& c) {
  const Index m = c.m();
  Eigen::SelfAdjointEigenSolver<Matrix> es(c.matrix());
  if (es.info() != Eigen::Success)
    throw InputError("eigh_desc: eigendecomposition failed");

  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Index{0});
  const Vector& asc = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(),
                   [&](Index i, Index j) { return asc(i) > asc(j); });

  EigenSystem out{Matrix(m, m), Vector(m)};
  for (Index k = 0; k < m; ++k) {
    const Index src = order[static_cast<std::size_t>(k)];
    out.values(k) = asc(src);
    auto col = out.basis.col(k);
    col = es.eigenvectors().col(src);
    for (Index i = 0; i < m; ++i) {
      if (std::abs(col(i)) > 1e-10) {
        if (col(i) < 0.0) col = -col;
        break;
      }
    }
  }
  return out;
}

std::optional<double> log_det_spd(const Matrix& a) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success) {
    const Vector pivots = llt.matrixLLT().diagonal().array().square();
    const double scale = a.diagonal().cwiseAbs().maxCoeff();
    if (pivots.allFinite() && pivots.minCoeff() > kSingularRatio * scale)
      return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return std::nullopt;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  const Vector& ev = es.eigenvalues();
  if (ev.minCoeff() <= kSingularRatio * std::max(ev.maxCoeff(), 0.0))
    return std::nullopt;
  return ev.array().log().sum();
}

double avg_loglik(const CovMatrix& sigma, const Dataset& data) {
  if (sigma.m() != data.m())
    throw InputError("avg_loglik: dimension mismatch");
  auto llt = factor_spd(sigma.matrix());
  if (!llt) {
    // Cholesky can fail on a positive definite matrix through rounding; let
    // the eigenvalue route decide.
    if (!log_det_spd(sigma.matrix())) return kNegInf;
    Eigen::SelfAdjointEigenSolver<Matrix> es(sigma.matrix());
    const Matrix y = es.eigenvectors().transpose() * data.samples().transpose();
    const double quad =
        (es.eigenvalues().cwiseInverse().asDiagonal() * y.cwiseAbs2()).sum();
    return gaussian_term(sigma.m(), es.eigenvalues().array().log().sum(),
                         quad / static_cast<double>(data.n()));
  }
  const double log_det = 2.0 * llt->matrixLLT().diagonal().array().log().sum();
  const Matrix y = llt->matrixL().solve(data.samples().transpose());
  return gaussian_term(sigma.m(), log_det,
                       y.squaredNorm() / static_cast<double>(data.n()));
}

double total_loglik(const CovMatrix& sigma, const Dataset& data) {
  return static_cast<double>(data.n()) * avg_loglik(sigma, data);
}

double expected_loglik(const CovMatrix& sigma, const CovMatrix& sigma_star) {
  if (sigma.m() != sigma_star.m())
    throw InputError("expected_loglik: dimension mismatch");
  auto llt = factor_spd(sigma.matrix());
  if (!llt) {
    auto ld = log_det_spd(sigma.matrix());
    if (!ld) return kNegInf;
    Eigen::SelfAdjointEigenSolver<Matrix> es(sigma.matrix());
    const Matrix inv = es.eigenvectors() *
                       es.eigenvalues().cwiseInverse().asDiagonal() *
                       es.eigenvectors().transpose();
    return gaussian_term(sigma.m(), *ld,
                         inv.cwiseProduct(sigma_star.matrix()).sum());
  }
  const double log_det = 2.0 * llt->matrixLLT().diagonal().array().log().sum();
  return gaussian_term(sigma.m(), log_det,
                       llt->solve(sigma_star.matrix()).trace());
}

double kl_divergence(const CovMatrix& sigma_star, const CovMatrix& sigma) {
  const double a = expected_loglik(sigma_star, sigma_star);
  const double b = expected_loglik(sigma, sigma_star);
  if (b == kNegInf) return std::numeric_limits<double>::infinity();
  return a - b;
}

double max_rel_diff(const Matrix& a, const Matrix& b) {
  return max_abs(a - b) / std::max(1.0, max_abs(b));
}

double rel_frobenius(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / b.norm();
}

}  // namespace factorlens
