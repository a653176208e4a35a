#include "test_util.hpp"

#include "factorlens/oracles.hpp"

#include <json.hpp>

using namespace factorlens;
using namespace factorlens::testing;

TEST_SUITE("oracles") {

// ---------------------------------------------------------------------------
// Reference solver

TEST_CASE("reference solver with lambda = 0 returns the sample covariance") {
  std::mt19937_64 rng(1);
  const CovMatrix s = random_spd(5, rng);
  for (auto form : {SdpFormulation::kUniform, SdpFormulation::kDiagonal}) {
    const SdpSolution r = sdp_reference_solve(form, s, 20, 0.0);
    CHECK(rel_frobenius(r.sigma.matrix(), s.matrix()) < 1e-6);
    CHECK(r.kkt_residual <= 1e-6);
  }
}

TEST_CASE("reference solver reports non-convergence and scale limits") {
  std::mt19937_64 rng(2);
  const CovMatrix s = random_spd(6, rng);
  AdmmOptions o;
  o.max_iter = 3;
  CHECK_THROWS_AS(sdp_reference_solve(SdpFormulation::kUniform, s, 20, 1.0, o), OracleError);
  CHECK_THROWS_AS(sdp_reference_solve(SdpFormulation::kUniform, random_spd(31, rng), 40, 1.0),
                  ParameterError);
}

TEST_CASE("KKT residual is small at the UTM solution and large elsewhere") {
  std::mt19937_64 rng(3);
  const CovMatrix s = random_spd(6, rng);
  const UtmSolution u = utm_fit(s, 20, UtmParams{2.0});
  const Matrix g = u.v_hat * Matrix::Identity(6, 6) - *u.estimate.inverse();
  CHECK(sdp_kkt_residual(SdpFormulation::kUniform, s, 20, 2.0, u.estimate.sigma().matrix(), g) < 1e-8);
  CHECK(sdp_kkt_residual(SdpFormulation::kUniform, s, 20, 2.0, s.matrix(), Matrix::Zero(6, 6)) > 1e-3);
}

// ---------------------------------------------------------------------------
// Optimal eigenvalues

TEST_CASE("optimal eigenvalues in the true eigenbasis are the true eigenvalues") {
  std::mt19937_64 rng(4);
  const CovMatrix star = random_spd(6, rng);
  const EigenSystem e = eigh_desc(star);
  CHECK((optimal_eigenvalues(e, star).h_star - e.values).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("optimal eigenvalues of the identity are ones in any basis") {
  std::mt19937_64 rng(5);
  const EigenSystem e = eigh_desc(random_spd(5, rng));
  CHECK((optimal_eigenvalues(e, CovMatrix::identity(5)).h_star.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("optimal eigenvalues maximize the expected log-likelihood (golden-section oracle)") {
  std::mt19937_64 rng(6);
  const CovMatrix star = random_spd(5, rng);
  const EigenSystem basis = eigh_desc(random_spd(5, rng));
  const Vector h = optimal_eigenvalues(basis, star).h_star;
  for (Index i = 0; i < 5; ++i) {
    // Coordinate search on h_i with the others held at the claimed optimum.
    auto f = [&](double hi) {
      Vector d = h;
      d(i) = hi;
      return expected_loglik(CovMatrix(basis.basis * d.asDiagonal() * basis.basis.transpose()), star);
    };
    CHECK(golden_max(f, 1e-3, 50.0) == doctest::Approx(h(i)).epsilon(1e-6));
  }
}

// ---------------------------------------------------------------------------
// Spiked model

TEST_CASE("spiked model arithmetic and validation") {
  SpikedModel m{400, 800, 1.0, {10.0}};
  CHECK(m.rho() == 0.5);
  CHECK(m.spike_location(0) == doctest::Approx(10.0 + 0.5 * 10.0 / 9.0));
  CHECK(m.supercritical(0));
  SpikedModel weak{400, 800, 1.0, {1.5}};
  CHECK_FALSE(weak.supercritical(0));
  CHECK_THROWS_AS(verify_theorem2(weak, 2, 1), ParameterError);
  SpikedModel bad{10, 10, 1.0, {0.5}};
  CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("trace ratio is near one for the identity at large N") {
  const Prop1Report r = verify_prop1_trace(SpikedModel{10, 1000000, 1.0, {}}, 1, 0.01, 7);
  CHECK(std::abs(r.ratios[0] - 1.0) < 0.01);
}

TEST_CASE("leading-eigenvalue offset at a reduced scale") {
  const Theorem2Report r = verify_theorem2(SpikedModel{100, 200, 1.0, {10.0}}, 10, 8, 0.3, 0.1);
  CHECK(r.offset_pass);
  CHECK(r.lambda_guidance_correction == doctest::Approx(2.0 * 0.5));
}

// ---------------------------------------------------------------------------
// Residual-bias closed forms

TEST_CASE("eigenvector ratio for M = 2, r = 2 is the golden ratio") {
  const Prop2Result p = prop2_eigvector_ratio(2, 2.0);
  CHECK(p.q == doctest::Approx((5.0 + std::sqrt(5.0)) / 2.0).epsilon(1e-14));
  CHECK(p.ratio == doctest::Approx((1.0 + std::sqrt(5.0)) / 2.0).epsilon(1e-14));
  // Top eigenvector of [[3, 1], [1, 2]] computed directly.
  const Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix{{3.0, 1.0}, {1.0, 2.0}});
  const Vector v = es.eigenvectors().col(1);
  CHECK(v(0) / v(1) == doctest::Approx(p.ratio).epsilon(1e-8));
}

TEST_CASE("eigenvector ratio closed form agrees with the eigendecomposition") {
  for (Index m : {2, 5, 20})
    for (double r : {2.0, 4.0, 16.0}) {
      const Prop2Result a = prop2_eigvector_ratio(m, r), b = prop2_numeric(m, r);
      CHECK(a.q == doctest::Approx(b.q).epsilon(1e-8));
      CHECK(a.ratio == doctest::Approx(b.ratio).epsilon(1e-8));
    }
}

TEST_CASE("eigenvector ratio increases in r and tends to one as r -> 1") {
  for (Index m : {2, 5, 20}) {
    double prev = 0.0;
    for (double r : {2.0, 4.0, 8.0, 16.0}) {
      const double ratio = prop2_eigvector_ratio(m, r).ratio;
      CHECK(ratio > prev);
      prev = ratio;
    }
    CHECK(prop2_eigvector_ratio(m, 1.0 + 1e-9).ratio == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("idealized TM worked example M = 3, N = 2, r = 4, lambda' = 2") {
  const Prop3Result p = prop3_idealized_tm(3, 2, 2.0, 4.0);
  CHECK(p.rank == 1);
  REQUIRE(p.ratio.has_value());
  CHECK(p.q_plus == doctest::Approx((15.0 + std::sqrt(33.0)) / 8.0).epsilon(1e-14));
  CHECK(p.q_plus == doctest::Approx(2.5931).epsilon(1e-4));
  CHECK(*p.ratio == doctest::Approx(2.3724).epsilon(1e-4));
  CHECK(*p.ratio == doctest::Approx(p.ratio_closed_form).epsilon(1e-8));
}

TEST_CASE("idealized TM is rank one exactly below lambda = MN / 2") {
  for (auto [m, n] : {std::pair<Index, Index>{3, 2}, {5, 4}}) {
    const double edge = static_cast<double>(m * n) / 2.0;
    for (double r : {2.0, 4.0}) {
      CHECK(prop3_idealized_tm(m, n, 0.9 * edge, r).rank == 1);
      CHECK(prop3_idealized_tm(m, n, 0.999 * edge, r).rank == 1);
      CHECK(prop3_idealized_tm(m, n, edge, r).rank != 1);
      CHECK(prop3_idealized_tm(m, n, 1.1 * edge, r).rank != 1);
    }
  }
}

TEST_CASE("idealized TM ratio tends to one as the penalty vanishes") {
  const Prop3Result p = prop3_idealized_tm(5, 4, 1e-7, 4.0);
  REQUIRE(p.ratio.has_value());
  CHECK(*p.ratio == doctest::Approx(1.0).epsilon(1e-5));
}

// ---------------------------------------------------------------------------
// Harness

TEST_CASE("single-section run reports only that section") {
  VerifyOptions o;
  o.only = {"prop2"};
  const VerifyReport r = run_verification(o);
  REQUIRE(!r.checks.empty());
  for (const auto& c : r.checks) CHECK(c.section == "prop2");
  CHECK_FALSE(r.any_fail());
  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j.at("schema") == "factorlens.verify/1");
  CHECK(j.at("summary") == "pass");
}

TEST_CASE("a perturbed UTM threshold is detected") {
  VerifyOptions o;
  o.only = {"theorem1"};
  o.oracle_instances = 6;
  o.structure_spectra = 20;
  VerifyHooks faulty;
  faulty.utm = [](const CovMatrix& s, Index n, double lambda) {
    return utm_fit(s, n, UtmParams{lambda * 1.05});
  };
  const VerifyReport r = run_verification(o, faulty);
  CHECK(r.any_fail());
}

TEST_CASE("faulty closed forms are detected") {
  VerifyOptions o;
  o.only = {"prop2", "prop3", "lemma1"};
  o.oracle_instances = 4;
  VerifyHooks faulty;
  faulty.prop2 = [](Index m, double r) {
    Prop2Result p = prop2_eigvector_ratio(m, r);
    p.ratio *= 1.001;
    return p;
  };
  faulty.gstep = [](const CovMatrix& s, const Vector& v, double lp) {
    return lemma1_gstep(s, v, lp * 1.1);
  };
  const VerifyReport r = run_verification(o, faulty);
  int fails_prop2 = 0, fails_lemma1 = 0;
  for (const auto& c : r.checks) {
    if (c.status != CheckStatus::kFail) continue;
    fails_prop2 += c.section == "prop2";
    fails_lemma1 += c.section == "lemma1";
  }
  CHECK(fails_prop2 > 0);
  CHECK(fails_lemma1 > 0);
}

TEST_CASE("a diverging reference solver is inconclusive, not failed") {
  VerifyOptions o;
  o.only = {"lemma1"};
  o.oracle_instances = 2;
  VerifyHooks hooks;
  hooks.tm = [](const CovMatrix&, Index, double) -> FactorModelEstimate {
    throw OracleError("simulated");
  };
  const VerifyReport r = run_verification(o, hooks);
  CHECK(r.any_inconclusive());
}

}  // TEST_SUITE
