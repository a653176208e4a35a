#pragma once

// Synthetic replication study: for each sample size and replication, draw a
// data set, select each estimator's parameter by holdout cross-validation,
// score the estimate by its expected log-likelihood under the true
// covariance, and optionally compute equivalent data requirements.

#include "factorlens/metrics.hpp"
#include "factorlens/selection.hpp"
#include "factorlens/synth.hpp"

#include <string>
#include <vector>

namespace factorlens {

struct EdrPair {
  std::string u2;  // candidate
  std::string u1;  // baseline
};

struct StudyConfig {
  SynthSpec synth;  // n is taken from n_values; seed is the base seed
  bool nonuniform = false;
  std::vector<Index> n_values{100};
  int replications = 30;
  std::vector<std::string> estimators{"urm", "utm"};
  std::vector<double> k_grid;       // for urm, mrh, em
  std::vector<double> lambda_grid;  // for utm, tm, stm
  double train_fraction = 0.7;
  std::vector<EdrPair> edr_pairs;
  double edr_alpha = 0.02;
  bool edr_reuse_theta = false;  // default re-runs cross-validation per prefix
  int threads = 1;
  LearnerOptions learner_options;
};

void validate(const StudyConfig& config);

struct ReplicationScore {
  Index n;
  int replication;
  std::string estimator;
  double theta;
  double score;  // expected log-likelihood under Sigma_*
  std::vector<std::string> warnings;
};

struct EdrScore {
  Index n;
  int replication;
  std::string u2;
  std::string u1;
  double gamma;
  EdrFlag flag;
};

struct StudyResult {
  Index m;
  std::vector<ReplicationScore> scores;  // ordered by n, replication, estimator
  std::vector<EdrScore> edr;             // ordered by n, replication, pair

  ExperimentReport report(Index n, const std::string& estimator) const;
  ExperimentReport edr_report(Index n, const std::string& u2, const std::string& u1) const;
  /// Per-replication score differences a - b at the given n.
  std::vector<double> paired_difference(Index n, const std::string& a,
                                        const std::string& b) const;
};

/// Seed of replication `rep` at sample size n.
std::uint64_t replication_seed(std::uint64_t base, Index n, int rep);

StudyResult run_synth_study(const StudyConfig& config);

// Tidy CSV tables, one measurement per row.
std::string scores_csv(const StudyResult& result);
std::string aggregate_csv(const StudyResult& result, const StudyConfig& config);
std::string edr_csv(const StudyResult& result);
std::string edr_aggregate_csv(const StudyResult& result, const StudyConfig& config);

}  // namespace factorlens
