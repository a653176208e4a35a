#include "factorlens/uniform.hpp"

#include <cmath>
#include <limits>

namespace factorlens {

namespace {

void check_urm_k(Index k, Index m) {
  if (k < 0 || k > m - 1)
    throw ParameterError("URM: number of factors K=" + std::to_string(k) +
                         " must lie in [0, M-1] with M=" + std::to_string(m));
}

}  // namespace

FactorModelEstimate spectral_estimate(const Matrix& basis, const Vector& h,
                                      Index k, double flat_level,
                                      std::vector<std::string> warnings) {
  const Index m = basis.rows();
  Matrix loadings(m, k);
  for (Index j = 0; j < k; ++j)
    loadings.col(j) = std::sqrt(std::max(h(j) - flat_level, 0.0)) * basis.col(j);
  return FactorModelEstimate(std::move(loadings),
                             Vector::Constant(m, std::max(flat_level, 0.0)),
                             std::move(warnings));
}

// ---------------------------------------------------------------------------
// URM

double urm_residual_variance(const Vector& desc_values, Index k) {
  const Index m = desc_values.size();
  check_urm_k(k, m);
  return desc_values.tail(m - k).sum() / static_cast<double>(m - k);
}

FactorModelEstimate urm_from_eigen(const EigenSystem& eig, UrmParams params) {
  const Index m = eig.values.size();
  const double sigma2 = std::max(urm_residual_variance(eig.values, params.k), 0.0);
  std::vector<std::string> warnings;
  Vector h = eig.values;
  for (Index j = 0; j < params.k; ++j) {
    if (h(j) < sigma2) {
      warnings.push_back("URM: factor " + std::to_string(j + 1) +
                         " coefficient s_k - sigma^2 < 0 clamped to 0");
      h(j) = sigma2;
    }
  }
  h.tail(m - params.k).setConstant(sigma2);
  return spectral_estimate(eig.basis, h, params.k, sigma2, std::move(warnings));
}

FactorModelEstimate urm_fit(const CovMatrix& sample_cov, UrmParams params) {
  check_urm_k(params.k, sample_cov.m());
  return urm_from_eigen(eigh_desc(sample_cov), params);
}

FactorModelEstimate urm_fit(const Dataset& data, UrmParams params) {
  return urm_fit(sample_covariance(data), params);
}

// ---------------------------------------------------------------------------
// UTM

UtmSpectrum utm_spectrum(const Vector& s, double threshold) {
  const Index m = s.size();
  // suffix(k) = sum_{j >= k} s_j (0-based)
  Vector suffix(m + 1);
  suffix(m) = 0.0;
  for (Index j = m - 1; j >= 0; --j) suffix(j) = suffix(j + 1) + s(j);

  // k counts leading eigenvalues kept above the flat level; k = 0 always
  // qualifies (s_0 = +inf).
  Index k_best = 0;
  double flat_best = suffix(0) / static_cast<double>(m);
  for (Index k = 1; k < m; ++k) {
    const double flat = (static_cast<double>(k) * threshold + suffix(k)) /
                        static_cast<double>(m - k);
    if (s(k - 1) - threshold > flat) {
      k_best = k;
      flat_best = flat;
    }
  }

  UtmSpectrum out{k_best, flat_best, Vector::Constant(m, flat_best)};
  for (Index j = 0; j < k_best; ++j) out.h(j) = s(j) - threshold;
  return out;
}

UtmSolution utm_from_eigen(const EigenSystem& eig, Index n, UtmParams params) {
  if (!(params.lambda >= 0.0) || !std::isfinite(params.lambda))
    throw ParameterError("UTM: lambda must be finite and nonnegative");
  if (n < 1) throw ParameterError("UTM: sample count N must be >= 1");
  const double threshold = 2.0 * params.lambda / static_cast<double>(n);
  UtmSpectrum sp = utm_spectrum(eig.values, threshold);
  const double flat = std::max(sp.flat_level, 0.0);
  const double v_hat = flat > 0.0 ? 1.0 / flat
                                  : std::numeric_limits<double>::infinity();
  auto est = spectral_estimate(eig.basis, sp.h, sp.k, flat);
  return UtmSolution{std::move(est), v_hat, sp.k, std::move(sp.h), threshold};
}

UtmSolution utm_fit(const CovMatrix& sample_cov, Index n, UtmParams params) {
  return utm_from_eigen(eigh_desc(sample_cov), n, params);
}

UtmSolution utm_fit(const Dataset& data, UtmParams params) {
  return utm_fit(sample_covariance(data), data.n(), params);
}

}  // namespace factorlens
