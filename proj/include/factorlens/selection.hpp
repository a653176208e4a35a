#pragma once

// Hyperparameter selection: single-holdout cross-validation for i.i.d. data
// and the sliding-window protocol for time series.

#include "factorlens/core.hpp"
#include "factorlens/metrics.hpp"
#include "factorlens/nonuniform.hpp"

#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace factorlens {

/// Every candidate produced a singular estimate on the validation data.
class SelectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ordered, strictly increasing list of candidate values (K or lambda).
class ParamGrid {
 public:
  explicit ParamGrid(std::vector<double> candidates);
  /// start, start + step, ... up to stop inclusive (within step * 1e-9).
  static ParamGrid range(double start, double step, double stop);

  const std::vector<double>& candidates() const noexcept { return candidates_; }
  std::size_t size() const noexcept { return candidates_.size(); }
  double operator[](std::size_t i) const { return candidates_[i]; }

 private:
  std::vector<double> candidates_;
};

/// An estimator with one regularization parameter theta (K or lambda).
///
/// Iterative learners turn a ConvergenceError into its best iterate plus a
/// warning unless constructed strict.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual std::string name() const = 0;
  /// True when theta is a factor count.
  virtual bool integer_param() const = 0;
  virtual FactorModelEstimate fit(const CovMatrix& cov, Index n, double theta) const = 0;
  /// One estimate per candidate, in grid order. The default loops over fit.
  virtual std::vector<FactorModelEstimate> fit_grid(const CovMatrix& cov, Index n,
                                                    const ParamGrid& grid) const;

  FactorModelEstimate fit(const Dataset& data, double theta) const {
    return fit(sample_covariance(data), data.n(), theta);
  }
};

/// Solver settings shared by the iterative learners.
struct LearnerOptions {
  bool strict = false;
  EmParams em;    // k is overwritten by theta
  TmParams tm;    // lambda is overwritten by theta
  StmParams stm;  // lambda is overwritten by theta
};

/// One of urm, utm, mrh, em, tm, stm.
std::unique_ptr<Learner> make_learner(std::string_view name,
                                      const LearnerOptions& options = {});
const std::vector<std::string>& learner_names();

/// Returns K as an Index, rejecting non-integral or negative values.
Index theta_as_k(double theta, const char* who);

// ---------------------------------------------------------------------------
// Holdout cross-validation

struct HoldoutPlan {
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
};

struct HoldoutSplit {
  std::vector<Index> train;       // ascending
  std::vector<Index> validation;  // ascending
};

/// ceil(train_fraction * N) rows drawn by a seeded permutation go to training.
HoldoutSplit holdout_split(Index n, const HoldoutPlan& plan);

struct SelectionResult {
  double theta;
  std::size_t theta_index;
  FactorModelEstimate estimate;          // refit on the full data at theta
  std::vector<double> validation_scores;  // avg log-likelihood per candidate
};

/// Fits every candidate on the training rows, scores the average validation
/// log-likelihood, keeps the first maximizer in grid order and refits on all
/// rows.
SelectionResult holdout_select(const Learner& learner, const ParamGrid& grid,
                               const Dataset& data, const HoldoutPlan& plan);

/// Index of the first maximal finite score; throws SelectionError when none.
std::size_t argmax_first(const std::vector<double>& scores);

// ---------------------------------------------------------------------------
// Sliding-window testing on a time series

/// Days are 1-based: training rows t-N+1..t, test rows t+1..t+test_len.
struct WindowSpec {
  Index window_n;
  Index t;
  Index test_len = 10;
};

void check_window(const WindowSpec& spec, Index series_length);

/// Total log-likelihood of the test rows under the estimate fit on the
/// training rows.
double sliding_window_test(const Learner& learner, double theta,
                           const Dataset& series, const WindowSpec& spec);

/// Same windows for every candidate, sharing one fit_grid call.
std::vector<double> sliding_window_grid(const Learner& learner, const ParamGrid& grid,
                                        const Dataset& series, const WindowSpec& spec);

struct ProtocolAnchors {
  Index validation_start = 1200;
  Index evaluation_start = 1300;
  Index count = 10;
  Index step = 10;
  Index test_len = 10;
};

struct ProtocolResult {
  double theta;
  std::vector<double> validation_totals;  // per candidate, summed over anchors
  std::vector<double> evaluation_totals;  // per evaluation anchor
  ExperimentReport report;                // per-anchor per-day averages
};

/// Selects theta maximizing the summed validation-window scores, then reports
/// the evaluation-window log-likelihood averaged over anchors and test days.
ProtocolResult realdata_protocol(const Learner& learner, const ParamGrid& grid,
                                 const Dataset& series, Index window_n,
                                 const ProtocolAnchors& anchors = {});

/// M * sigma^2 with sigma^2 the URM residual variance at k_ref: the centre of
/// a sensible lambda grid.
double lambda_guidance(const CovMatrix& cov, Index k_ref);

}  // namespace factorlens
