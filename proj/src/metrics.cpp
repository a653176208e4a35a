#include "factorlens/metrics.hpp"

#include <cmath>

namespace factorlens {

Aggregate aggregate(const std::vector<double>& scores) {
  if (scores.size() < 2)
    throw ParameterError("aggregate: need at least two scores");
  const double n = static_cast<double>(scores.size());
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= n;
  double ss = 0.0;
  for (double s : scores) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / n);
  return Aggregate{mean, 1.96 * sd / std::sqrt(n), sd};
}

ExperimentReport make_report(std::vector<double> scores,
                             std::vector<double> selected_params) {
  ExperimentReport r;
  if (scores.size() >= 2) {
    const Aggregate a = aggregate(scores);
    r.mean = a.mean;
    r.ci95 = a.ci95;
  } else if (scores.size() == 1) {
    r.mean = scores.front();
  }
  r.per_replication = std::move(scores);
  r.selected_params = std::move(selected_params);
  return r;
}

// ---------------------------------------------------------------------------

EdrResult equivalent_data_requirement(double baseline, const Learner& u2,
                                      const Dataset& data, const EdrParams& params,
                                      const EdrEvaluator& evaluator) {
  if (!(params.alpha > 0.0 && params.alpha < 1.0))
    throw ParameterError("EDR: alpha must lie in (0, 1)");
  const double n = static_cast<double>(data.n());
  EdrResult out{1.0, EdrFlag::kNone, 0, baseline, {}};
  for (int i = 0;; ++i) {
    const double gamma = 1.0 - i * params.alpha;
    if (gamma <= 1e-12) {
      // The prefix cannot shrink further; report the smallest gamma tried.
      out.gamma = 1.0 - (i - 1) * params.alpha;
      out.flag = EdrFlag::kFloorReached;
      out.steps = i - 1;
      return out;
    }
    const Index size = std::max<Index>(1, std::llround(gamma * n));
    const double score = evaluator(u2, data.head(size));
    out.u2_scores.push_back(score);
    if (score < baseline) {
      out.steps = i;
      if (i == 0) {
        out.gamma = 1.0;
        out.flag = EdrFlag::kNotBetterAtFull;
        return out;
      }
      const double prev = out.u2_scores[static_cast<std::size_t>(i - 1)];
      // A singular estimate at this prefix: the interpolation weight tends to 1
      // as the score goes to -inf, i.e. the previous gamma.
      const double frac = std::isfinite(score) ? (baseline - score) / (prev - score) : 1.0;
      out.gamma = 1.0 - params.alpha * (static_cast<double>(i) - frac);
      return out;
    }
  }
}

EdrResult equivalent_data_requirement(const Learner& u1, const Learner& u2,
                                      const Dataset& data, const EdrParams& params,
                                      const EdrEvaluator& evaluator) {
  return equivalent_data_requirement(evaluator(u1, data), u2, data, params, evaluator);
}

std::string to_string(EdrFlag flag) {
  switch (flag) {
    case EdrFlag::kNone: return "none";
    case EdrFlag::kNotBetterAtFull: return "not_better_at_full";
    case EdrFlag::kFloorReached: return "floor_reached";
  }
  return "unknown";
}

}  // namespace factorlens
