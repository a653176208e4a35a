#include "factorlens/synth.hpp"

#include <Eigen/QR>
#include <json.hpp>

#include <cmath>
#include <random>

namespace factorlens {

namespace {

using Rng = std::mt19937_64;

Matrix gaussian_matrix(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> normal;
  Matrix a(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) a(i, j) = normal(rng);
  return a;
}

Matrix orthonormalize(const Matrix& a) {
  const Index m = a.rows(), k = a.cols();
  if (k == 0) return Matrix(m, 0);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(m, k);
  // Sign fix against diag(R) makes the frame Haar distributed.
  const Matrix& r = qr.matrixQR();
  for (Index j = 0; j < k; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

struct Draw {
  GroundTruth truth;
  Rng rng;
};

Draw draw_truth(const SynthSpec& spec, bool nonuniform) {
  validate(spec);
  if (nonuniform && !(spec.sigma_r > 0.0))
    throw ParameterError("gen_nonuniform: sigma_r must be > 0");
  Rng rng(spec.seed);
  std::normal_distribution<double> normal;
  const Matrix phi = orthonormalize(gaussian_matrix(spec.m, spec.k_star, rng));
  Matrix loadings = phi;
  for (Index k = 0; k < spec.k_star; ++k) loadings.col(k) *= spec.sigma_f * normal(rng);
  Vector residual = Vector::Ones(spec.m);
  if (nonuniform)
    for (Index i = 0; i < spec.m; ++i) residual(i) = std::exp(spec.sigma_r * normal(rng));
  Matrix sigma = loadings * loadings.transpose();
  sigma.diagonal() += residual;
  return Draw{GroundTruth{CovMatrix(std::move(sigma)), std::move(loadings),
                          std::move(residual), spec.seed},
              std::move(rng)};
}

SynthSample sample(const SynthSpec& spec, bool nonuniform) {
  Draw d = draw_truth(spec, nonuniform);
  std::normal_distribution<double> normal;
  const Vector root = d.truth.residual_star.cwiseSqrt();
  const Index k = spec.k_star;
  Matrix x(spec.n, spec.m);
  Vector z(k), w(spec.m);
  for (Index row = 0; row < spec.n; ++row) {
    for (Index j = 0; j < k; ++j) z(j) = normal(d.rng);
    for (Index i = 0; i < spec.m; ++i) w(i) = normal(d.rng);
    x.row(row) = (d.truth.loadings_star * z + root.cwiseProduct(w)).transpose();
  }
  return SynthSample{Dataset(std::move(x)), std::move(d.truth)};
}

}  // namespace

void validate(const SynthSpec& spec) {
  if (spec.m < 1 || spec.n < 1) throw ParameterError("synth: M and N must be >= 1");
  if (spec.k_star < 0 || spec.k_star > spec.m)
    throw ParameterError("synth: K_*=" + std::to_string(spec.k_star) +
                         " must lie in [0, M]");
  if (!(spec.sigma_f > 0.0)) throw ParameterError("synth: sigma_f must be > 0");
  if (!(spec.sigma_r >= 0.0)) throw ParameterError("synth: sigma_r must be >= 0");
}

SynthSample gen_uniform(const SynthSpec& spec) { return sample(spec, false); }
SynthSample gen_nonuniform(const SynthSpec& spec) { return sample(spec, true); }

GroundTruth gen_truth(const SynthSpec& spec, bool nonuniform) {
  return draw_truth(spec, nonuniform).truth;
}

Matrix haar_frame(Index m, Index k, std::uint64_t seed) {
  if (k < 0 || k > m) throw ParameterError("haar_frame: need 0 <= K <= M");
  Rng rng(seed);
  return orthonormalize(gaussian_matrix(m, k, rng));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string ground_truth_json(const SynthSpec& spec, const GroundTruth& truth,
                              bool nonuniform) {
  nlohmann::json j;
  j["schema"] = "factorlens.ground_truth/1";
  j["generator"] = kGeneratorName;
  j["seed"] = truth.seed;
  j["procedure"] = nonuniform ? "nonuniform" : "uniform";
  j["spec"] = {{"m", spec.m}, {"k_star", spec.k_star}, {"sigma_f", spec.sigma_f},
               {"n", spec.n}, {"sigma_r", spec.sigma_r}};
  std::vector<std::vector<double>> cols;
  for (Index k = 0; k < truth.loadings_star.cols(); ++k) {
    const Vector c = truth.loadings_star.col(k);
    cols.emplace_back(c.data(), c.data() + c.size());
  }
  j["loadings_columns"] = cols;
  j["residual"] = std::vector<double>(truth.residual_star.data(),
                                      truth.residual_star.data() + truth.residual_star.size());
  return j.dump(2);
}

}  // namespace factorlens
