#include "factorlens/selection.hpp"

#include "factorlens/uniform.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace factorlens {

ParamGrid::ParamGrid(std::vector<double> candidates) : candidates_(std::move(candidates)) {
  if (candidates_.empty()) throw ParameterError("ParamGrid: no candidates");
  for (std::size_t i = 0; i < candidates_.size(); ++i) {
    if (!std::isfinite(candidates_[i]))
      throw ParameterError("ParamGrid: non-finite candidate");
    if (i > 0 && !(candidates_[i] > candidates_[i - 1]))
      throw ParameterError("ParamGrid: candidates must be strictly increasing");
  }
}

ParamGrid ParamGrid::range(double start, double step, double stop) {
  if (!(step > 0.0) || !(stop >= start))
    throw ParameterError("ParamGrid::range: need step > 0 and stop >= start");
  std::vector<double> c;
  const double count = std::floor((stop - start) / step + 1e-9);
  for (long i = 0; i <= static_cast<long>(count); ++i)
    c.push_back(start + static_cast<double>(i) * step);
  return ParamGrid(std::move(c));
}

Index theta_as_k(double theta, const char* who) {
  if (!(theta >= 0.0) || theta != std::floor(theta) || theta > 1e9)
    throw ParameterError(std::string(who) + ": K must be a nonnegative integer");
  return static_cast<Index>(theta);
}

std::vector<FactorModelEstimate> Learner::fit_grid(const CovMatrix& cov, Index n,
                                                   const ParamGrid& grid) const {
  std::vector<FactorModelEstimate> out;
  out.reserve(grid.size());
  for (double theta : grid.candidates()) out.push_back(fit(cov, n, theta));
  return out;
}

// ---------------------------------------------------------------------------
// Learners

namespace {

template <class Fn>
FactorModelEstimate tolerate(bool strict, Fn&& fn) {
  try {
    return fn();
  } catch (const ConvergenceError& e) {
    if (strict || !e.best()) throw;
    return *e.best();
  }
}

class UrmLearner : public Learner {
 public:
  std::string name() const override { return "urm"; }
  bool integer_param() const override { return true; }
  FactorModelEstimate fit(const CovMatrix& cov, Index, double theta) const override {
    return urm_fit(cov, UrmParams{theta_as_k(theta, "URM")});
  }
  std::vector<FactorModelEstimate> fit_grid(const CovMatrix& cov, Index,
                                            const ParamGrid& grid) const override {
    const EigenSystem eig = eigh_desc(cov);
    std::vector<FactorModelEstimate> out;
    for (double theta : grid.candidates()) {
      const Index k = theta_as_k(theta, "URM");
      if (k > cov.m() - 1) throw ParameterError("URM: K exceeds M-1");
      out.push_back(urm_from_eigen(eig, UrmParams{k}));
    }
    return out;
  }
};

class UtmLearner : public Learner {
 public:
  std::string name() const override { return "utm"; }
  bool integer_param() const override { return false; }
  FactorModelEstimate fit(const CovMatrix& cov, Index n, double theta) const override {
    return utm_fit(cov, n, UtmParams{theta}).estimate;
  }
  std::vector<FactorModelEstimate> fit_grid(const CovMatrix& cov, Index n,
                                            const ParamGrid& grid) const override {
    const EigenSystem eig = eigh_desc(cov);
    std::vector<FactorModelEstimate> out;
    for (double theta : grid.candidates())
      out.push_back(utm_from_eigen(eig, n, UtmParams{theta}).estimate);
    return out;
  }
};

class MrhLearner : public Learner {
 public:
  std::string name() const override { return "mrh"; }
  bool integer_param() const override { return true; }
  FactorModelEstimate fit(const CovMatrix& cov, Index, double theta) const override {
    return mrh_fit(cov, theta_as_k(theta, "MRH"));
  }
  std::vector<FactorModelEstimate> fit_grid(const CovMatrix& cov, Index,
                                            const ParamGrid& grid) const override {
    const EigenSystem eig = eigh_desc(cov);
    std::vector<FactorModelEstimate> out;
    for (double theta : grid.candidates())
      out.push_back(mrh_from_eigen(cov, eig, theta_as_k(theta, "MRH")));
    return out;
  }
};

class EmLearner : public Learner {
 public:
  explicit EmLearner(EmParams p) : params_(p) {}
  std::string name() const override { return "em"; }
  bool integer_param() const override { return true; }
  FactorModelEstimate fit(const CovMatrix& cov, Index, double theta) const override {
    EmParams p = params_;
    p.k = theta_as_k(theta, "EM");
    return em_fit(cov, p).estimate;
  }
  std::vector<FactorModelEstimate> fit_grid(const CovMatrix& cov, Index,
                                            const ParamGrid& grid) const override {
    const EigenSystem eig = eigh_desc(cov);
    std::vector<FactorModelEstimate> out;
    for (double theta : grid.candidates()) {
      EmParams p = params_;
      p.k = theta_as_k(theta, "EM");
      out.push_back(em_fit(cov, p, mrh_from_eigen(cov, eig, p.k)).estimate);
    }
    return out;
  }

 private:
  EmParams params_;
};

class TmLearner : public Learner {
 public:
  TmLearner(TmParams p, bool strict) : params_(std::move(p)), strict_(strict) {}
  std::string name() const override { return "tm"; }
  bool integer_param() const override { return false; }
  FactorModelEstimate fit(const CovMatrix& cov, Index n, double theta) const override {
    TmParams p = params_;
    p.lambda = theta;
    return tolerate(strict_, [&] { return tm_fit(cov, n, p).estimate; });
  }
  // The problem is concave with a unique Sigma, so warm-starting V from the
  // previous candidate only shortens the path.
  std::vector<FactorModelEstimate> fit_grid(const CovMatrix& cov, Index n,
                                            const ParamGrid& grid) const override {
    std::vector<FactorModelEstimate> out;
    std::optional<Vector> warm = params_.v_init;
    for (double theta : grid.candidates()) {
      TmParams p = params_;
      p.lambda = theta;
      p.v_init = warm;
      out.push_back(tolerate(strict_, [&] {
        TmResult r = tm_fit(cov, n, p);
        warm = r.v;
        return std::move(r.estimate);
      }));
    }
    return out;
  }

 private:
  TmParams params_;
  bool strict_;
};

class StmLearner : public Learner {
 public:
  StmLearner(StmParams p, bool strict) : params_(std::move(p)), strict_(strict) {}
  std::string name() const override { return "stm"; }
  bool integer_param() const override { return false; }
  FactorModelEstimate fit(const CovMatrix& cov, Index n, double theta) const override {
    StmParams p = params_;
    p.lambda = theta;
    return tolerate(strict_, [&] { return stm_fit(cov, n, p).estimate; });
  }

 private:
  StmParams params_;
  bool strict_;
};

}  // namespace

const std::vector<std::string>& learner_names() {
  static const std::vector<std::string> names{"urm", "utm", "mrh", "em", "tm", "stm"};
  return names;
}

std::unique_ptr<Learner> make_learner(std::string_view name, const LearnerOptions& options) {
  if (name == "urm") return std::make_unique<UrmLearner>();
  if (name == "utm") return std::make_unique<UtmLearner>();
  if (name == "mrh") return std::make_unique<MrhLearner>();
  if (name == "em") return std::make_unique<EmLearner>(options.em);
  if (name == "tm") return std::make_unique<TmLearner>(options.tm, options.strict);
  if (name == "stm") return std::make_unique<StmLearner>(options.stm, options.strict);
  throw ParameterError("unknown estimator '" + std::string(name) +
                       "' (expected urm, utm, mrh, em, tm or stm)");
}

// ---------------------------------------------------------------------------
// Holdout

HoldoutSplit holdout_split(Index n, const HoldoutPlan& plan) {
  if (!(plan.train_fraction > 0.0 && plan.train_fraction < 1.0))
    throw ParameterError("holdout: train_fraction must lie in (0, 1)");
  const Index n_train = static_cast<Index>(
      std::ceil(plan.train_fraction * static_cast<double>(n) - 1e-9));
  if (n_train < 1 || n_train >= n)
    throw ParameterError("holdout: " + std::to_string(n) +
                         " samples cannot be split into non-empty training and "
                         "validation sets");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  // Fisher-Yates with rejection sampling, so the split does not depend on the
  // standard library's distribution implementations.
  std::mt19937_64 rng(plan.seed);
  for (std::size_t i = perm.size() - 1; i > 0; --i) {
    const std::uint64_t bound = i + 1;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw;
    do draw = rng();
    while (draw >= limit);
    std::swap(perm[i], perm[draw % bound]);
  }
  HoldoutSplit split;
  split.train.assign(perm.begin(), perm.begin() + n_train);
  split.validation.assign(perm.begin() + n_train, perm.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  return split;
}

std::size_t argmax_first(const std::vector<double>& scores) {
  std::size_t best = scores.size();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!(scores[i] > kNegInf) || std::isnan(scores[i])) continue;
    if (best == scores.size() || scores[i] > scores[best]) best = i;
  }
  if (best == scores.size())
    throw SelectionError("every candidate produced a singular estimate");
  return best;
}

SelectionResult holdout_select(const Learner& learner, const ParamGrid& grid,
                               const Dataset& data, const HoldoutPlan& plan) {
  const HoldoutSplit split = holdout_split(data.n(), plan);
  const Dataset train = data.select_rows(split.train);
  const Dataset valid = data.select_rows(split.validation);
  const CovMatrix train_cov = sample_covariance(train);
  const auto fits = learner.fit_grid(train_cov, train.n(), grid);
  std::vector<double> scores;
  scores.reserve(fits.size());
  for (const auto& f : fits) scores.push_back(avg_loglik(f.sigma(), valid));
  const std::size_t best = argmax_first(scores);
  return SelectionResult{grid[best], best, learner.fit(data, grid[best]), std::move(scores)};
}

// ---------------------------------------------------------------------------
// Sliding windows

void check_window(const WindowSpec& spec, Index series_length) {
  if (spec.window_n < 1 || spec.test_len < 1)
    throw ParameterError("window: N and test length must be positive");
  if (spec.t - spec.window_n + 1 < 1 || spec.t + spec.test_len > series_length)
    throw ParameterError("window: t=" + std::to_string(spec.t) + " with N=" +
                         std::to_string(spec.window_n) + " and test length " +
                         std::to_string(spec.test_len) +
                         " does not fit a series of length " +
                         std::to_string(series_length));
}

double sliding_window_test(const Learner& learner, double theta, const Dataset& series,
                           const WindowSpec& spec) {
  check_window(spec, series.n());
  // 1-based rows t-N+1..t are 0-based t-N..t-1.
  const Dataset train = series.slice(spec.t - spec.window_n, spec.window_n);
  const Dataset test = series.slice(spec.t, spec.test_len);
  return total_loglik(learner.fit(train, theta).sigma(), test);
}

std::vector<double> sliding_window_grid(const Learner& learner, const ParamGrid& grid,
                                        const Dataset& series, const WindowSpec& spec) {
  check_window(spec, series.n());
  const Dataset train = series.slice(spec.t - spec.window_n, spec.window_n);
  const Dataset test = series.slice(spec.t, spec.test_len);
  const auto fits = learner.fit_grid(sample_covariance(train), train.n(), grid);
  std::vector<double> out;
  for (const auto& f : fits) out.push_back(total_loglik(f.sigma(), test));
  return out;
}

ProtocolResult realdata_protocol(const Learner& learner, const ParamGrid& grid,
                                 const Dataset& series, Index window_n,
                                 const ProtocolAnchors& anchors) {
  if (anchors.count < 1 || anchors.step < 1)
    throw ParameterError("protocol: anchor count and step must be positive");
  auto anchor = [&](Index start, Index j) {
    return WindowSpec{window_n, start + j * anchors.step, anchors.test_len};
  };
  const Index last = anchors.count - 1;
  check_window(anchor(anchors.validation_start, 0), series.n());
  check_window(anchor(anchors.validation_start, last), series.n());
  check_window(anchor(anchors.evaluation_start, 0), series.n());
  check_window(anchor(anchors.evaluation_start, last), series.n());

  std::vector<double> totals(grid.size(), 0.0);
  for (Index j = 0; j < anchors.count; ++j) {
    const auto scores =
        sliding_window_grid(learner, grid, series, anchor(anchors.validation_start, j));
    for (std::size_t i = 0; i < totals.size(); ++i) totals[i] += scores[i];
  }
  const std::size_t best = argmax_first(totals);
  const double theta = grid[best];

  std::vector<double> eval_totals, per_day;
  for (Index j = 0; j < anchors.count; ++j) {
    const double t = sliding_window_test(learner, theta, series,
                                         anchor(anchors.evaluation_start, j));
    eval_totals.push_back(t);
    per_day.push_back(t / static_cast<double>(anchors.test_len));
  }
  ExperimentReport report = make_report(std::move(per_day), {theta});
  return ProtocolResult{theta, std::move(totals), std::move(eval_totals), std::move(report)};
}

double lambda_guidance(const CovMatrix& cov, Index k_ref) {
  const EigenSystem eig = eigh_desc(cov);
  return static_cast<double>(cov.m()) * urm_residual_variance(eig.values, k_ref);
}

}  // namespace factorlens
