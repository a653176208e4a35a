#pragma once

// Experiment aggregation: means with normal-approximation confidence
// intervals and the equivalent-data-requirement metric.

#include "factorlens/core.hpp"

#include <functional>
#include <string>
#include <vector>

namespace factorlens {

class Learner;

struct ExperimentReport {
  std::vector<double> per_replication;
  double mean = 0.0;
  double ci95 = 0.0;
  std::vector<double> selected_params;
};

struct Aggregate {
  double mean;
  double ci95;  // 1.96 * sd / sqrt(n), population sd
  double sd;
};

/// Needs at least two scores. Non-finite scores propagate into the result.
Aggregate aggregate(const std::vector<double>& scores);

ExperimentReport make_report(std::vector<double> scores,
                             std::vector<double> selected_params = {});

// ---------------------------------------------------------------------------
// Equivalent data requirement

struct EdrParams {
  double alpha = 0.02;  // prefix shrink step
};

/// Out-of-sample score of a learner trained on the given data.
using EdrEvaluator = std::function<double(const Learner&, const Dataset&)>;

enum class EdrFlag {
  kNone,
  kNotBetterAtFull,  // U2 already worse than U1 with all the data; gamma = 1
  kFloorReached,     // U2 still ahead at the smallest prefix tried
};

struct EdrResult {
  double gamma;
  EdrFlag flag;
  int steps;                      // final i
  double baseline;                // L(U1, X)
  std::vector<double> u2_scores;  // L(U2, X_0), L(U2, X_1), ...
};

/// Shrinks the prefix x_1..x_{gamma N} in steps of alpha until U2 falls
/// strictly below U1 on the full data, then interpolates linearly between the
/// last two prefixes. Prefix sizes are round(gamma N), at least 1.
EdrResult equivalent_data_requirement(const Learner& u1, const Learner& u2,
                                      const Dataset& data, const EdrParams& params,
                                      const EdrEvaluator& evaluator);

/// Same, with the baseline L(U1, X) already known.
EdrResult equivalent_data_requirement(double baseline, const Learner& u2,
                                      const Dataset& data, const EdrParams& params,
                                      const EdrEvaluator& evaluator);

std::string to_string(EdrFlag flag);

}  // namespace factorlens
