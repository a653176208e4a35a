#pragma once

// Synthetic factor-model data: K_* isotropic orthonormal directions with
// N(0, sigma_f^2) strengths plus unit (uniform case) or log-normal
// (nonuniform case) residual variances.
//
// Generator: std::mt19937_64 with std::normal_distribution. Draw order is
// frame matrix (column-major), strengths, log-residuals (nonuniform only),
// then per sample the K factor scores followed by the M residual noises.

#include "factorlens/core.hpp"

#include <cstdint>
#include <string>

namespace factorlens {

inline constexpr const char* kGeneratorName = "mt19937_64/normal_distribution/v1";

struct SynthSpec {
  Index m = 200;
  Index k_star = 10;
  double sigma_f = 5.0;
  Index n = 100;
  double sigma_r = 0.0;  // log-std of residual variances; 0 gives R_* = I
  std::uint64_t seed = 0;
};

struct GroundTruth {
  CovMatrix sigma_star;
  Matrix loadings_star;  // M x K_*, columns f_k phi_k
  Vector residual_star;  // diagonal of R_*
  std::uint64_t seed;
};

struct SynthSample {
  Dataset data;
  GroundTruth truth;
};

void validate(const SynthSpec& spec);

/// R_* = I; sigma_r is ignored.
SynthSample gen_uniform(const SynthSpec& spec);
/// R_* = diag(exp(r_i)), r_i ~ N(0, sigma_r^2). Requires sigma_r > 0.
SynthSample gen_nonuniform(const SynthSpec& spec);

/// Ground truth only, with no samples drawn.
GroundTruth gen_truth(const SynthSpec& spec, bool nonuniform);

/// Haar-distributed M x K matrix with orthonormal columns.
Matrix haar_frame(Index m, Index k, std::uint64_t seed);

/// splitmix64 mix of (seed, index): independent streams per replication.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// JSON sidecar describing the generator, spec and ground truth.
std::string ground_truth_json(const SynthSpec& spec, const GroundTruth& truth,
                              bool nonuniform);

}  // namespace factorlens
