#include "factorlens/study.hpp"

#include "factorlens/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

namespace factorlens {

namespace {

bool uses_k(const std::string& name) { return name == "urm" || name == "mrh" || name == "em"; }

const std::vector<double>& grid_for(const StudyConfig& c, const std::string& name) {
  return uses_k(name) ? c.k_grid : c.lambda_grid;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

double log2_ratio(Index n, Index m) {
  return std::log2(static_cast<double>(n) / static_cast<double>(m));
}

}  // namespace

void validate(const StudyConfig& c) {
  validate(c.synth);
  if (c.n_values.empty()) throw ParameterError("study: no sample sizes");
  for (Index n : c.n_values)
    if (n < 4) throw ParameterError("study: sample sizes must be >= 4 for a holdout split");
  if (c.replications < 1) throw ParameterError("study: replications must be >= 1");
  if (c.estimators.empty()) throw ParameterError("study: no estimators");
  auto known = [&](const std::string& e) {
    const auto& names = learner_names();
    return std::find(names.begin(), names.end(), e) != names.end();
  };
  for (const auto& e : c.estimators) {
    if (!known(e)) throw ParameterError("study: unknown estimator '" + e + "'");
    ParamGrid g(grid_for(c, e));  // validates the grid the estimator needs
  }
  for (const auto& p : c.edr_pairs) {
    if (std::find(c.estimators.begin(), c.estimators.end(), p.u1) == c.estimators.end() ||
        std::find(c.estimators.begin(), c.estimators.end(), p.u2) == c.estimators.end())
      throw ParameterError("study: EDR pair " + p.u2 + "/" + p.u1 +
                           " must use estimators from the study");
  }
  if (!c.edr_pairs.empty() && !(c.edr_alpha > 0.0 && c.edr_alpha < 1.0))
    throw ParameterError("study: EDR alpha must lie in (0, 1)");
}

std::uint64_t replication_seed(std::uint64_t base, Index n, int rep) {
  return derive_seed(derive_seed(base, static_cast<std::uint64_t>(n)),
                     static_cast<std::uint64_t>(rep));
}

StudyResult run_synth_study(const StudyConfig& config) {
  validate(config);
  std::map<std::string, std::unique_ptr<Learner>> learners;
  std::map<std::string, ParamGrid> grids;
  for (const auto& e : config.estimators) {
    learners.emplace(e, make_learner(e, config.learner_options));
    grids.emplace(e, ParamGrid(grid_for(config, e)));
  }

  struct Task {
    Index n;
    int rep;
  };
  std::vector<Task> tasks;
  for (Index n : config.n_values)
    for (int r = 0; r < config.replications; ++r) tasks.push_back({n, r});

  std::vector<std::vector<ReplicationScore>> scores(tasks.size());
  std::vector<std::vector<EdrScore>> edr(tasks.size());
  parallel_for(tasks.size(), config.threads, [&](std::size_t ti) {
    const Task& task = tasks[ti];
    SynthSpec spec = config.synth;
    spec.n = task.n;
    spec.seed = replication_seed(config.synth.seed, task.n, task.rep);
    const SynthSample sample = config.nonuniform ? gen_nonuniform(spec) : gen_uniform(spec);
    const HoldoutPlan plan{config.train_fraction, derive_seed(spec.seed, 0xC5)};
    const CovMatrix& truth = sample.truth.sigma_star;

    std::map<std::string, SelectionResult> selected;
    for (const auto& e : config.estimators) {
      SelectionResult sel = holdout_select(*learners.at(e), grids.at(e), sample.data, plan);
      scores[ti].push_back(ReplicationScore{task.n, task.rep, e, sel.theta,
                                            expected_loglik(sel.estimate.sigma(), truth),
                                            sel.estimate.warnings()});
      selected.emplace(e, std::move(sel));
    }
    for (const auto& pair : config.edr_pairs) {
      const double theta_u2 = selected.at(pair.u2).theta;
      // Prefixes too small to split or fit score -inf.
      EdrEvaluator evaluator = [&](const Learner& u, const Dataset& prefix) -> double {
        try {
          if (config.edr_reuse_theta)
            return expected_loglik(u.fit(prefix, theta_u2).sigma(), truth);
          return expected_loglik(
              holdout_select(u, grids.at(u.name()), prefix, plan).estimate.sigma(), truth);
        } catch (const ParameterError&) {
          return kNegInf;
        } catch (const SelectionError&) {
          return kNegInf;
        }
      };
      const double baseline = expected_loglik(selected.at(pair.u1).estimate.sigma(), truth);
      const EdrResult r = equivalent_data_requirement(
          baseline, *learners.at(pair.u2), sample.data, EdrParams{config.edr_alpha}, evaluator);
      edr[ti].push_back(EdrScore{task.n, task.rep, pair.u2, pair.u1, r.gamma, r.flag});
    }
  });

  StudyResult out;
  out.m = config.synth.m;
  for (auto& v : scores)
    for (auto& s : v) out.scores.push_back(std::move(s));
  for (auto& v : edr)
    for (auto& s : v) out.edr.push_back(std::move(s));
  return out;
}

ExperimentReport StudyResult::report(Index n, const std::string& estimator) const {
  std::vector<double> vals, thetas;
  for (const auto& s : scores)
    if (s.n == n && s.estimator == estimator) {
      vals.push_back(s.score);
      thetas.push_back(s.theta);
    }
  return make_report(std::move(vals), std::move(thetas));
}

ExperimentReport StudyResult::edr_report(Index n, const std::string& u2,
                                         const std::string& u1) const {
  std::vector<double> vals;
  for (const auto& e : edr)
    if (e.n == n && e.u2 == u2 && e.u1 == u1) vals.push_back(e.gamma);
  return make_report(std::move(vals));
}

std::vector<double> StudyResult::paired_difference(Index n, const std::string& a,
                                                   const std::string& b) const {
  std::map<int, double> sa, sb;
  for (const auto& s : scores) {
    if (s.n != n) continue;
    if (s.estimator == a) sa[s.replication] = s.score;
    if (s.estimator == b) sb[s.replication] = s.score;
  }
  std::vector<double> d;
  for (const auto& [rep, v] : sa)
    if (sb.count(rep)) d.push_back(v - sb.at(rep));
  return d;
}

std::string scores_csv(const StudyResult& result) {
  std::ostringstream os;
  os << "n,log2_n_over_m,replication,estimator,theta,score\n";
  for (const auto& s : result.scores)
    os << s.n << ',' << fmt(log2_ratio(s.n, result.m)) << ',' << s.replication << ','
       << s.estimator << ',' << fmt(s.theta) << ',' << fmt(s.score) << '\n';
  return os.str();
}

std::string aggregate_csv(const StudyResult& result, const StudyConfig& config) {
  std::ostringstream os;
  os << "n,log2_n_over_m,estimator,replications,mean,ci95\n";
  for (Index n : config.n_values)
    for (const auto& e : config.estimators) {
      const ExperimentReport r = result.report(n, e);
      os << n << ',' << fmt(log2_ratio(n, result.m)) << ',' << e << ','
         << r.per_replication.size() << ',' << fmt(r.mean) << ',' << fmt(r.ci95) << '\n';
    }
  return os.str();
}

std::string edr_csv(const StudyResult& result) {
  std::ostringstream os;
  os << "n,log2_n_over_m,replication,u2,u1,gamma,flag\n";
  for (const auto& e : result.edr)
    os << e.n << ',' << fmt(log2_ratio(e.n, result.m)) << ',' << e.replication << ',' << e.u2
       << ',' << e.u1 << ',' << fmt(e.gamma) << ',' << to_string(e.flag) << '\n';
  return os.str();
}

std::string edr_aggregate_csv(const StudyResult& result, const StudyConfig& config) {
  std::ostringstream os;
  os << "n,log2_n_over_m,u2,u1,replications,mean,ci95\n";
  for (Index n : config.n_values)
    for (const auto& p : config.edr_pairs) {
      const ExperimentReport r = result.edr_report(n, p.u2, p.u1);
      os << n << ',' << fmt(log2_ratio(n, result.m)) << ',' << p.u2 << ',' << p.u1 << ','
         << r.per_replication.size() << ',' << fmt(r.mean) << ',' << fmt(r.ci95) << '\n';
    }
  return os.str();
}

}  // namespace factorlens
