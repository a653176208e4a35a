#include "test_util.hpp"

#include "factorlens/synth.hpp"

#include <json.hpp>

using namespace factorlens;
using namespace factorlens::testing;

TEST_SUITE("synth") {

TEST_CASE("defaults are the desk-scale uniform setting") {
  const SynthSpec s;
  CHECK(s.m == 200);
  CHECK(s.k_star == 10);
  CHECK(s.sigma_f == 5.0);
  CHECK(s.sigma_r == 0.0);
}

TEST_CASE("no factors gives the identity") {
  SynthSpec s;
  s.m = 7;
  s.k_star = 0;
  s.n = 3;
  const SynthSample x = gen_uniform(s);
  CHECK(x.truth.sigma_star.matrix() == Matrix::Identity(7, 7));
  CHECK(x.data.n() == 3);
}

TEST_CASE("true spectrum is f_k^2 + 1 then ones") {
  SynthSpec s;
  s.m = 30;
  s.k_star = 4;
  s.seed = 3;
  const GroundTruth t = gen_truth(s, false);
  Vector expected = Vector::Ones(30);
  const Vector f2 = t.loadings_star.colwise().squaredNorm().transpose();
  for (Index k = 0; k < 4; ++k) expected(k) = f2(k) + 1.0;
  std::sort(expected.data(), expected.data() + 30, std::greater<>());
  CHECK((eigh_desc(t.sigma_star).values - expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("property: Haar frames are orthonormal") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Index m = 5 + static_cast<Index>(seed * 7 % 60);
    const Index k = 1 + static_cast<Index>(seed % 5);
    const Matrix phi = haar_frame(m, k, seed);
    CHECK((phi.transpose() * phi - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("Haar frame first column is uniform on the sphere in distribution") {
  // E[phi_11^2] = 1 / M for a uniformly random unit vector.
  const Index m = 8;
  double mean = 0.0;
  const int trials = 4000;
  for (int i = 0; i < trials; ++i) mean += std::pow(haar_frame(m, 2, 1000 + i)(0, 0), 2) / trials;
  CHECK(mean == doctest::Approx(1.0 / m).epsilon(0.1));
}

TEST_CASE("identical seeds give bit-identical output; different seeds differ") {
  SynthSpec s;
  s.m = 20;
  s.k_star = 3;
  s.n = 15;
  s.sigma_r = 0.5;
  s.seed = 77;
  const SynthSample a = gen_nonuniform(s), b = gen_nonuniform(s);
  CHECK(a.data.samples() == b.data.samples());
  CHECK(a.truth.sigma_star.matrix() == b.truth.sigma_star.matrix());
  s.seed = 78;
  CHECK(gen_nonuniform(s).data.samples() != a.data.samples());
}

TEST_CASE("samples do not depend on N beyond their count") {
  SynthSpec s;
  s.m = 10;
  s.k_star = 2;
  s.seed = 5;
  s.n = 10;
  const Matrix small = gen_uniform(s).data.samples();
  s.n = 30;
  const Matrix large = gen_uniform(s).data.samples();
  CHECK(large.topRows(10) == small);
}

TEST_CASE("small sigma_r recovers unit residuals") {
  SynthSpec s;
  s.m = 50;
  s.k_star = 2;
  s.sigma_r = 1e-9;
  const GroundTruth t = gen_truth(s, true);
  CHECK((t.residual_star.array() - 1.0).abs().maxCoeff() < 1e-7);
}

TEST_CASE("log residuals have mean 0 and variance sigma_r^2") {
  SynthSpec s;
  s.m = 2000;
  s.k_star = 1;
  s.sigma_r = 0.8;
  s.seed = 9;
  const Vector r = gen_truth(s, true).residual_star.array().log();
  const double mean = r.mean();
  const double var = (r.array() - mean).square().mean();
  CHECK(std::abs(mean) < 4 * 0.8 / std::sqrt(2000.0));
  CHECK(var == doctest::Approx(0.64).epsilon(0.1));
}

TEST_CASE("empirical covariance of many samples approaches the truth") {
  SynthSpec s;
  s.m = 5;
  s.k_star = 2;
  s.sigma_f = 2.0;
  s.sigma_r = 0.5;
  s.n = 1000000;
  s.seed = 11;
  const SynthSample x = gen_nonuniform(s);
  const Matrix diff = sample_covariance(x.data).matrix() - x.truth.sigma_star.matrix();
  CHECK(diff.cwiseAbs().maxCoeff() <= 0.01 * x.truth.sigma_star.matrix().cwiseAbs().maxCoeff());
}

TEST_CASE("spec validation") {
  SynthSpec s;
  s.k_star = 201;
  CHECK_THROWS_AS(validate(s), ParameterError);
  s = SynthSpec{};
  s.sigma_f = 0.0;
  CHECK_THROWS_AS(validate(s), ParameterError);
  s = SynthSpec{};
  s.sigma_r = -0.1;
  CHECK_THROWS_AS(validate(s), ParameterError);
  s = SynthSpec{};
  CHECK_THROWS_AS(gen_nonuniform(s), ParameterError);
}

TEST_CASE("derived seeds are distinct and stable") {
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("ground-truth sidecar is versioned JSON") {
  SynthSpec s;
  s.m = 4;
  s.k_star = 1;
  const GroundTruth t = gen_truth(s, false);
  const auto j = nlohmann::json::parse(ground_truth_json(s, t, false));
  CHECK(j.at("schema") == "factorlens.ground_truth/1");
  CHECK(j.at("generator") == kGeneratorName);
}

}  // TEST_SUITE
