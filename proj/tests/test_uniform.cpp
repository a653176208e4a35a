#include "test_util.hpp"

#include "factorlens/oracles.hpp"
#include "factorlens/uniform.hpp"

using namespace factorlens;
using namespace factorlens::testing;

namespace {

CovMatrix diag_cov(std::initializer_list<double> d) {
  Vector v(static_cast<Index>(d.size()));
  Index i = 0;
  for (double x : d) v(i++) = x;
  return CovMatrix(Matrix(v.asDiagonal()));
}

// Flat level c with sum_m max(s_m - tau, c) = sum_m s_m, found by bisection.
double flat_by_bisection(const Vector& s, double tau) {
  double lo = 0.0, hi = s.maxCoeff();
  for (int i = 0; i < 200; ++i) {
    const double c = 0.5 * (lo + hi);
    const double total = (s.array() - tau).max(c).sum();
    (total > s.sum() ? hi : lo) = c;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_SUITE("uniform") {

TEST_CASE("URM worked examples") {
  const FactorModelEstimate a = urm_fit(diag_cov({5, 2, 1}), UrmParams{1});
  CHECK(a.residual().isApprox(Vector::Constant(3, 1.5)));
  CHECK(eigh_desc(a.sigma()).values.isApprox(Vector{{5.0, 1.5, 1.5}}));

  const CovMatrix s = diag_cov({4, 2, 1});
  const FactorModelEstimate full = urm_fit(s, UrmParams{2});
  CHECK(full.residual()(0) == doctest::Approx(1.0));
  CHECK(max_rel_diff(full.sigma().matrix(), s.matrix()) < 1e-12);
}

TEST_CASE("URM with no factors is isotropic at the average eigenvalue") {
  std::mt19937_64 rng(3);
  const CovMatrix s = random_spd(5, rng);
  const FactorModelEstimate e = urm_fit(s, UrmParams{0});
  CHECK(e.rank() == 0);
  CHECK(max_rel_diff(e.sigma().matrix(), Matrix::Identity(5, 5) * s.trace() / 5.0) < 1e-12);
}

TEST_CASE("URM rejects K outside [0, M-1]") {
  CHECK_THROWS_AS(urm_fit(diag_cov({3, 2, 1}), UrmParams{3}), ParameterError);
  CHECK_THROWS_AS(urm_fit(diag_cov({3, 2, 1}), UrmParams{-1}), ParameterError);
}

TEST_CASE("property: URM keeps the top K eigenvalues and averages the rest") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const Index m = 2 + static_cast<Index>(rng() % 9);
    const Index k = static_cast<Index>(rng() % static_cast<std::uint64_t>(m));
    const CovMatrix s = random_spd(m, rng);
    const Vector sv = eigh_desc(s).values;
    const Vector hv = eigh_desc(urm_fit(s, UrmParams{k}).sigma()).values;
    const double tail = sv.tail(m - k).mean();
    for (Index i = 0; i < m; ++i) {
      const double expected = i < k ? sv(i) : tail;
      CHECK(hv(i) == doctest::Approx(expected).epsilon(1e-10));
    }
  }
}

TEST_CASE("UTM worked example: s = (5, 2, 1), threshold 1") {
  const UtmSolution u = utm_fit(diag_cov({5, 2, 1}), 2, UtmParams{1.0});
  CHECK(u.threshold == doctest::Approx(1.0));
  CHECK(u.k_effective == 1);
  CHECK(1.0 / u.v_hat == doctest::Approx(2.0));
  CHECK(u.eigenvalues.isApprox(Vector{{4.0, 2.0, 2.0}}));
  CHECK(u.estimate.sigma().trace() == doctest::Approx(8.0));
}

TEST_CASE("UTM with lambda = 0 returns the sample covariance") {
  std::mt19937_64 rng(9);
  const CovMatrix s = random_spd(6, rng);
  CHECK(max_rel_diff(utm_fit(s, 10, UtmParams{0.0}).estimate.sigma().matrix(), s.matrix()) < 1e-10);
}

TEST_CASE("UTM on a flat spectrum returns it unchanged") {
  const UtmSolution u = utm_fit(CovMatrix::identity(4), 10, UtmParams{3.0});
  CHECK(u.k_effective == 0);
  CHECK(max_rel_diff(u.estimate.sigma().matrix(), Matrix::Identity(4, 4)) < 1e-14);
}

TEST_CASE("UTM collapses to isotropic once the threshold exceeds s_1 - tr/M") {
  const CovMatrix s = diag_cov({6, 3, 2, 1});
  const double gap = 6.0 - 12.0 / 4.0;
  for (double thr : {gap, gap * 1.5, gap * 10.0}) {
    const UtmSolution u = utm_fit(s, 4, UtmParams{thr * 4.0 / 2.0});
    CHECK(u.k_effective == 0);
    CHECK(max_rel_diff(u.estimate.sigma().matrix(), Matrix::Identity(4, 4) * 3.0) < 1e-12);
  }
}

TEST_CASE("property: UTM spectrum matches an independent trace-preservation oracle") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Index m = 1 + static_cast<Index>(rng() % 30);
    Vector s(m);
    for (Index i = 0; i < m; ++i) s(i) = std::exp(3.0 * u01(rng));
    std::sort(s.data(), s.data() + m, std::greater<>());
    const double tau = u01(rng) * 2.0 * s(0);
    const UtmSpectrum sp = utm_spectrum(s, tau);
    const double flat = flat_by_bisection(s, tau);
    CHECK(sp.flat_level == doctest::Approx(flat).epsilon(1e-9));
    // Trace preserved, soft-threshold identity, descending order.
    CHECK(std::abs(sp.h.sum() - s.sum()) / s.sum() <= 1e-10);
    for (Index i = 0; i < m; ++i) {
      CHECK(sp.h(i) == doctest::Approx(std::max(s(i) - tau, sp.flat_level)).epsilon(1e-12));
      if (i > 0) CHECK(sp.h(i) <= sp.h(i - 1));
    }
  }
}

TEST_CASE("property: UTM shares eigenvectors with the sample covariance") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const CovMatrix s = random_spd(8, rng);
    const Matrix sig = utm_fit(s, 20, UtmParams{2.0}).estimate.sigma().matrix();
    const Matrix comm = sig * s.matrix() - s.matrix() * sig;
    CHECK(comm.cwiseAbs().maxCoeff() <= 1e-8 * s.matrix().squaredNorm());
  }
}

TEST_CASE("property: k_effective is non-increasing in lambda") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    const CovMatrix s = random_spd(10, rng);
    const EigenSystem eig = eigh_desc(s);
    Index prev = 10;
    for (double lambda = 0.0; lambda <= 40.0; lambda += 0.5) {
      const Index k = utm_from_eigen(eig, 20, UtmParams{lambda}).k_effective;
      CHECK(k <= prev);
      prev = k;
    }
  }
}

TEST_CASE("UTM is consistent: growing N with fixed lambda recovers the input") {
  std::mt19937_64 rng(23);
  const CovMatrix s = random_spd(6, rng);
  double prev = 1e300;
  for (Index n : {10, 100, 1000, 10000, 1000000}) {
    const double err = rel_frobenius(utm_fit(s, n, UtmParams{5.0}).estimate.sigma().matrix(), s.matrix());
    CHECK(err <= prev);
    prev = err;
  }
  CHECK(prev < 1e-4);
}

TEST_CASE("UTM matches the reference semidefinite solver") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 5; ++trial) {
    const Index m = 3 + static_cast<Index>(rng() % 8);
    const Index n = m + 5;
    const Dataset x(random_normal(n, m, rng) * Vector::LinSpaced(m, 0.5, 2.0).asDiagonal());
    const CovMatrix s = sample_covariance(x);
    const double lambda = (trial + 1) * 0.15 * m * s.trace() / n;
    const SdpSolution ref = sdp_reference_solve(SdpFormulation::kUniform, s, n, lambda);
    const UtmSolution u = utm_fit(s, n, UtmParams{lambda});
    CHECK(rel_frobenius(u.estimate.sigma().matrix(), ref.sigma.matrix()) <= 1e-4);
  }
}

TEST_CASE("UTM rejects a negative lambda") {
  CHECK_THROWS_AS(utm_fit(CovMatrix::identity(2), 5, UtmParams{-1.0}), ParameterError);
}

}  // TEST_SUITE
