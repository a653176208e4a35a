#include "test_util.hpp"

#include "factorlens/selection.hpp"
#include "factorlens/synth.hpp"
#include "factorlens/uniform.hpp"

#include <map>
#include <mutex>
#include <set>

using namespace factorlens;
using namespace factorlens::testing;

namespace {

// Returns sigma_ regardless of the data.
class ConstantLearner : public Learner {
 public:
  explicit ConstantLearner(Matrix sigma) : sigma_(std::move(sigma)) {}
  std::string name() const override { return "constant"; }
  bool integer_param() const override { return false; }
  FactorModelEstimate fit(const CovMatrix&, Index, double) const override {
    return FactorModelEstimate(Matrix(sigma_.rows(), 0), sigma_.diagonal());
  }

 private:
  Matrix sigma_;
};

// theta = 0 gives a singular estimate, anything else the identity.
class SingularAtZero : public Learner {
 public:
  std::string name() const override { return "singular_at_zero"; }
  bool integer_param() const override { return false; }
  FactorModelEstimate fit(const CovMatrix& cov, Index, double theta) const override {
    const Index m = cov.m();
    if (theta == 0.0) return FactorModelEstimate(Matrix(m, 0), Vector::Zero(m));
    return FactorModelEstimate(Matrix(m, 0), Vector::Ones(m));
  }
};

// Records every covariance it is fitted on and returns URM with K = theta.
class RecordingLearner : public Learner {
 public:
  std::string name() const override { return "recording"; }
  bool integer_param() const override { return true; }
  FactorModelEstimate fit(const CovMatrix& cov, Index, double theta) const override {
    std::lock_guard<std::mutex> lock(mutex_);
    seen.push_back(cov.matrix());
    return urm_fit(cov, UrmParams{static_cast<Index>(theta)});
  }
  mutable std::vector<Matrix> seen;

 private:
  mutable std::mutex mutex_;
};

Dataset series(Index n, Index m, std::uint64_t seed) {
  SynthSpec spec;
  spec.m = m;
  spec.k_star = 2;
  spec.sigma_f = 3.0;
  spec.n = n;
  spec.seed = seed;
  return gen_uniform(spec).data;
}

}  // namespace

TEST_SUITE("selection") {

TEST_CASE("parameter grids") {
  CHECK(ParamGrid::range(100, 20, 400).size() == 16);
  CHECK(ParamGrid::range(0, 1, 15).candidates().back() == 15.0);
  CHECK(ParamGrid::range(0.1, 0.1, 0.3).size() == 3);
  CHECK_THROWS_AS(ParamGrid({}), ParameterError);
  CHECK_THROWS_AS(ParamGrid({1.0, 1.0}), ParameterError);
  CHECK_THROWS_AS(ParamGrid({2.0, 1.0}), ParameterError);
}

TEST_CASE("holdout split is a seeded partition with ceil(0.7 N) training rows") {
  for (Index n : {4, 7, 10, 33, 100, 101}) {
    const HoldoutSplit a = holdout_split(n, HoldoutPlan{0.7, 99});
    const HoldoutSplit b = holdout_split(n, HoldoutPlan{0.7, 99});
    CHECK(a.train == b.train);
    CHECK(a.validation == b.validation);
    CHECK(static_cast<Index>(a.train.size()) == static_cast<Index>(std::ceil(0.7 * n - 1e-9)));
    CHECK(static_cast<Index>(a.train.size() + a.validation.size()) == n);
    std::set<Index> all(a.train.begin(), a.train.end());
    all.insert(a.validation.begin(), a.validation.end());
    CHECK(static_cast<Index>(all.size()) == n);
    CHECK(std::is_sorted(a.train.begin(), a.train.end()));
  }
  CHECK(holdout_split(100, HoldoutPlan{0.7, 1}).train != holdout_split(100, HoldoutPlan{0.7, 2}).train);
}

TEST_CASE("argmax_first keeps the first maximum and skips -inf") {
  CHECK(argmax_first({1.0, 3.0, 3.0, 2.0}) == 1);
  CHECK(argmax_first({kNegInf, -5.0}) == 1);
  CHECK_THROWS_AS(argmax_first({kNegInf, kNegInf}), SelectionError);
}

TEST_CASE("property: duplicating a candidate never changes the selection") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> score(0, 5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> cand, scores;
    for (int i = 0; i < 6; ++i) {
      cand.push_back(i);
      scores.push_back(score(rng));
    }
    const double chosen = cand[argmax_first(scores)];
    const std::size_t dup = rng() % cand.size();
    auto c2 = cand;
    auto s2 = scores;
    c2.insert(c2.begin() + static_cast<long>(dup), cand[dup]);
    s2.insert(s2.begin() + static_cast<long>(dup), scores[dup]);
    CHECK(c2[argmax_first(s2)] == chosen);
  }
}

TEST_CASE("single-candidate grid returns it refit on the full data") {
  const Dataset x = series(40, 6, 5);
  const auto urm = make_learner("urm");
  const SelectionResult r = holdout_select(*urm, ParamGrid({2.0}), x, HoldoutPlan{0.7, 1});
  CHECK(r.theta == 2.0);
  CHECK(max_rel_diff(r.estimate.sigma().matrix(), urm->fit(x, 2.0).sigma().matrix()) == 0.0);
}

TEST_CASE("a singular candidate ranks last") {
  const Dataset x = series(30, 4, 6);
  const SingularAtZero learner;
  const SelectionResult r = holdout_select(learner, ParamGrid({0.0, 1.0}), x, HoldoutPlan{0.7, 1});
  CHECK(r.theta == 1.0);
  CHECK(r.validation_scores[0] == kNegInf);
}

TEST_CASE("holdout validation scores are average log-likelihoods of the held-out rows") {
  const Dataset x = series(30, 5, 7);
  const auto urm = make_learner("urm");
  const HoldoutPlan plan{0.7, 4};
  const SelectionResult r = holdout_select(*urm, ParamGrid({0.0, 1.0, 2.0}), x, plan);
  const HoldoutSplit split = holdout_split(30, plan);
  const Dataset train = x.select_rows(split.train), val = x.select_rows(split.validation);
  for (int k = 0; k < 3; ++k) {
    const Matrix sig = urm_fit(sample_covariance(train), UrmParams{k}).sigma().matrix();
    CHECK(r.validation_scores[static_cast<std::size_t>(k)] ==
          doctest::Approx(mean_log_density(sig, val.samples())).epsilon(1e-10));
  }
}

TEST_CASE("URM selection tracks the number of detectable factors") {
  // Loadings are sigma_f * N(0, 1) along a Haar frame, so some draws carry a
  // factor too weak to see at this N. Reference: loadings with norm >= 1
  // (spike >= 2, well clear of the noise edge 1 + sqrt(M / N_train)).
  const auto urm = make_learner("urm");
  int matches = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SynthSpec spec;
    spec.m = 20;
    spec.k_star = 3;
    spec.sigma_f = 5.0;
    spec.n = 200;
    spec.seed = 1000 + seed;
    const SynthSample s = gen_uniform(spec);
    const Index strong = (s.truth.loadings_star.colwise().norm().array() >= 1.0).count();
    const double k = holdout_select(*urm, ParamGrid::range(0, 1, 8), s.data, HoldoutPlan{0.7, seed}).theta;
    CHECK(std::abs(k - static_cast<double>(strong)) <= 1.0);
    matches += k == static_cast<double>(strong);
  }
  CHECK(matches >= 16);
}

TEST_CASE("window arithmetic: t = 1200, N = 200 trains on rows 1001..1200") {
  const Dataset x = series(1400, 3, 8);
  RecordingLearner rec;
  const WindowSpec spec{200, 1200, 10};
  const double total = sliding_window_test(rec, 1.0, x, spec);
  REQUIRE(rec.seen.size() == 1);
  // 0-based rows 1000..1199 for training, 1200..1209 for testing.
  CHECK(max_rel_diff(rec.seen[0], sample_covariance(x.slice(1000, 200)).matrix()) < 1e-14);
  const Matrix sig = urm_fit(CovMatrix(rec.seen[0]), UrmParams{1}).sigma().matrix();
  CHECK(total == doctest::Approx(10.0 * mean_log_density(sig, x.slice(1200, 10).samples())).epsilon(1e-10));
}

TEST_CASE("fixed-identity learner scores the closed-form log-likelihood of the test rows") {
  const Dataset x = series(60, 4, 9);
  const ConstantLearner id(Matrix::Identity(4, 4));
  const double total = sliding_window_test(id, 0.0, x, WindowSpec{20, 30, 10});
  const Matrix test = x.slice(30, 10).samples();
  const double expected = -0.5 * (10 * 4 * std::log(2 * M_PI) + test.squaredNorm());
  CHECK(total == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("window checks") {
  CHECK_THROWS_AS(check_window(WindowSpec{200, 100, 10}, 1400), ParameterError);
  CHECK_THROWS_AS(check_window(WindowSpec{200, 1395, 10}, 1400), ParameterError);
  CHECK_NOTHROW(check_window(WindowSpec{200, 200, 10}, 210));
  CHECK_THROWS_AS(check_window(WindowSpec{200, 200, 10}, 209), ParameterError);
}

TEST_CASE("property: test rows never appear in the training rows") {
  for (Index n : {10, 50, 200})
    for (Index t : {n, n + 5, n + 40}) {
      const WindowSpec spec{n, t, 10};
      check_window(spec, t + 10);
      const Index train_last = spec.t, test_first = spec.t + 1;
      CHECK(train_last < test_first);
      CHECK(spec.t - spec.window_n + 1 >= 1);
    }
}

TEST_CASE("default protocol anchors") {
  const ProtocolAnchors a;
  CHECK(a.validation_start == 1200);
  CHECK(a.validation_start + (a.count - 1) * a.step == 1290);
  CHECK(a.evaluation_start == 1300);
  CHECK(a.evaluation_start + (a.count - 1) * a.step == 1390);
  CHECK(a.test_len == 10);
}

TEST_CASE("protocol with default anchors matches a hand-assembled loop") {
  const Dataset x = series(1400, 6, 10);
  const auto urm = make_learner("urm");
  const ParamGrid grid({0.0, 1.0, 2.0, 3.0});
  const ProtocolResult r = realdata_protocol(*urm, grid, x, 200);

  auto window_total = [&](Index k, Index t) {
    const Matrix sig = urm_fit(sample_covariance(x.slice(t - 200, 200)), UrmParams{k}).sigma().matrix();
    return 10.0 * mean_log_density(sig, x.slice(t, 10).samples());
  };
  std::vector<double> totals(4, 0.0);
  for (Index k = 0; k < 4; ++k)
    for (Index j = 0; j < 10; ++j) totals[static_cast<std::size_t>(k)] += window_total(k, 1200 + 10 * j);
  const Index best = static_cast<Index>(std::max_element(totals.begin(), totals.end()) - totals.begin());
  CHECK(r.theta == static_cast<double>(best));
  for (std::size_t k = 0; k < 4; ++k)
    CHECK(r.validation_totals[k] == doctest::Approx(totals[k]).epsilon(1e-10));
  double mean = 0.0;
  for (Index j = 0; j < 10; ++j) mean += window_total(best, 1300 + 10 * j) / 10.0;
  CHECK(r.report.mean == doctest::Approx(mean / 10.0).epsilon(1e-10));
  CHECK(r.report.per_replication.size() == 10);
}

TEST_CASE("protocol with a constant learner reports the mean of per-window closed forms") {
  const Dataset x = series(300, 3, 11);
  const ConstantLearner id(Matrix::Identity(3, 3));
  const ProtocolAnchors anchors{100, 200, 5, 10, 10};
  const ProtocolResult r = realdata_protocol(id, ParamGrid({0.0}), x, 50, anchors);
  double mean = 0.0;
  for (Index j = 0; j < 5; ++j) {
    const Matrix test = x.slice(200 + 10 * j, 10).samples();
    mean += -0.5 * (10 * 3 * std::log(2 * M_PI) + test.squaredNorm()) / 10.0 / 5.0;
  }
  CHECK(r.report.mean == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("protocol rejects anchors outside the series") {
  const Dataset x = series(300, 3, 12);
  const auto urm = make_learner("urm");
  CHECK_THROWS_AS(realdata_protocol(*urm, ParamGrid({0.0}), x, 200), ParameterError);
}

TEST_CASE("learner factory and grid fits agree with single fits") {
  const Dataset x = series(60, 8, 13);
  const CovMatrix s = sample_covariance(x);
  CHECK_THROWS_AS(make_learner("pca"), ParameterError);
  for (const auto& name : learner_names()) {
    const auto l = make_learner(name);
    const ParamGrid grid = l->integer_param() ? ParamGrid({0.0, 1.0, 2.0}) : ParamGrid({5.0, 10.0, 20.0});
    const auto fits = l->fit_grid(s, 60, grid);
    REQUIRE(fits.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      INFO(name << " theta " << grid[i]);
      CHECK(rel_frobenius(fits[i].sigma().matrix(), l->fit(s, 60, grid[i]).sigma().matrix()) < 1e-5);
    }
  }
}

TEST_CASE("lambda guidance is M times the URM residual variance") {
  const CovMatrix s(Matrix(Vector{{5.0, 2.0, 1.0}}.asDiagonal()));
  CHECK(lambda_guidance(s, 1) == doctest::Approx(3.0 * 1.5));
}

}  // TEST_SUITE
