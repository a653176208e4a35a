#include "test_util.hpp"

#include "factorlens/findata.hpp"

#include <json.hpp>

#include <sstream>

using namespace factorlens;
using namespace factorlens::testing;

namespace {

PriceTable random_walk(Index days, Index stocks, std::uint64_t seed, double vol = 0.02) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, vol);
  PriceTable t;
  t.prices.resize(days, stocks);
  for (Index j = 0; j < stocks; ++j) {
    double p = 50.0 + 10.0 * static_cast<double>(j);
    for (Index i = 0; i < days; ++i) {
      t.prices(i, j) = p;
      p *= std::exp(nd(rng));
    }
    t.tickers.push_back("T" + std::to_string(j));
  }
  for (Index i = 0; i < days; ++i) t.dates.push_back("d" + std::to_string(i));
  return t;
}

// Straight loops over the definition, with caller-supplied clip bounds.
Matrix reference_returns(const Matrix& prices, double lo, double hi) {
  const Index t = prices.rows(), m = prices.cols(), n_out = t - 51;
  Matrix y(n_out, m);
  for (Index j = 0; j < m; ++j) {
    std::vector<double> r;
    for (Index i = 0; i + 1 < t; ++i)
      r.push_back(std::min(hi, std::max(lo, std::log(prices(i + 1, j) / prices(i, j)))));
    for (Index n = 0; n < n_out; ++n) {
      double ss = 0.0;
      for (Index d = n; d < n + 50; ++d) ss += r[static_cast<std::size_t>(d)] * r[static_cast<std::size_t>(d)];
      y(n, j) = r[static_cast<std::size_t>(n + 50)] / std::sqrt(ss / 50.0);
    }
  }
  return y;
}

}  // namespace

TEST_SUITE("findata") {

TEST_CASE("prices doubling every day normalize to ones") {
  PriceTable t;
  t.prices.resize(60, 1);
  for (Index i = 0; i < 60; ++i) t.prices(i, 0) = std::pow(2.0, static_cast<double>(i));
  const ReturnPanel p = preprocess_prices(t);
  CHECK(p.returns.rows() == 9);
  CHECK((p.returns.array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK((p.volatility.array() - std::log(2.0)).abs().maxCoeff() < 1e-12);
  CHECK(p.clip_bounds.lower == doctest::Approx(std::log(2.0)));
}

TEST_CASE("1451 days of prices give 1400 output rows") {
  const ReturnPanel p = preprocess_prices(random_walk(1451, 453, 1));
  CHECK(p.returns.rows() == 1400);
  CHECK(p.returns.cols() == 453);
  CHECK(p.dates.front() == "d51");
  CHECK(p.dates.back() == "d1450");
}

TEST_CASE("pipeline matches a direct loop over the definition") {
  const PriceTable t = random_walk(120, 6, 2);
  const ReturnPanel p = preprocess_prices(t);
  const Matrix ref = reference_returns(t.prices, p.clip_bounds.lower, p.clip_bounds.upper);
  CHECK(max_rel_diff(p.returns, ref) < 1e-12);
}

TEST_CASE("pooled clip bounds on 1..1000") {
  Matrix v(1000, 1);
  for (Index i = 0; i < 1000; ++i) v(i, 0) = static_cast<double>(i + 1);
  const ClipBounds b = pooled_clip_bounds(v);
  CHECK(b.upper == 995.0);
  CHECK(b.lower == 6.0);
}

TEST_CASE("property: at most 0.5% of raw returns lie strictly outside the bounds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PriceTable t = random_walk(80 + static_cast<Index>(seed) * 13, 3 + static_cast<Index>(seed), seed);
    const Matrix raw = (t.prices.bottomRows(t.prices.rows() - 1).array() /
                        t.prices.topRows(t.prices.rows() - 1).array()).log().matrix();
    const ClipBounds b = pooled_clip_bounds(raw);
    const double n = static_cast<double>(raw.size());
    CHECK((raw.array() > b.upper).count() <= 0.005 * n);
    CHECK((raw.array() < b.lower).count() <= 0.005 * n);
    const ReturnPanel p = preprocess_prices(t);
    CHECK(p.clipped_fraction <= 0.01 + 1e-12);
  }
}

TEST_CASE("an extreme spike is clipped to the upper bound") {
  PriceTable t = random_walk(200, 5, 3);
  t.prices.bottomRows(100).col(2) *= 50.0;  // one huge jump on day 100
  const ReturnPanel p = preprocess_prices(t);
  const Index row = 100 - 1 - 50;  // return index 99 sits in output row 49
  CHECK(p.returns(row, 2) * p.volatility(row, 2) == doctest::Approx(p.clip_bounds.upper));
  CHECK(p.clip_bounds.upper < std::log(50.0));
}

TEST_CASE("property: no lookahead with fixed clip bounds") {
  const PriceTable t = random_walk(150, 4, 4);
  const PreprocessOptions fixed{ClipBounds{-0.05, 0.05}, false};
  const ReturnPanel base = preprocess_prices(t, fixed);
  for (Index n : {0, 10, 60, 97}) {
    PriceTable future = t;
    // Prices after index n+51 do not enter row n.
    future.prices.bottomRows(150 - (n + 52)) *= 1.7;
    const ReturnPanel p = preprocess_prices(future, fixed);
    CHECK(p.returns.topRows(n + 1) == base.returns.topRows(n + 1));
    CHECK(p.returns.row(n + 1) != base.returns.row(n + 1));
  }
}

TEST_CASE("pipeline is deterministic") {
  const PriceTable t = random_walk(100, 5, 5);
  CHECK(preprocess_prices(t).returns == preprocess_prices(t).returns);
}

TEST_CASE("invalid prices are rejected") {
  PriceTable t = random_walk(60, 2, 6);
  t.prices(10, 1) = 0.0;
  CHECK_THROWS_AS(preprocess_prices(t), InputError);
  CHECK_THROWS_AS(preprocess_prices(random_walk(51, 2, 6)), InputError);
}

TEST_CASE("zero volatility reports stock and day, or drops the stock on request") {
  PriceTable t = random_walk(80, 3, 7);
  t.prices.col(1).setConstant(10.0);
  CHECK_THROWS_WITH_AS(preprocess_prices(t), doctest::Contains("(T1, d51)"), DegenerateInputError);
  const ReturnPanel p = preprocess_prices(t, PreprocessOptions{std::nullopt, true});
  CHECK(p.returns.cols() == 2);
  CHECK(p.dropped == std::vector<std::string>{"T1"});
  CHECK(p.tickers == std::vector<std::string>{"T0", "T2"});
}

TEST_CASE("price table CSV round trip") {
  const PriceTable t = random_walk(55, 3, 8);
  std::stringstream ss;
  write_price_table_csv(ss, t);
  const PriceTable back = read_price_table_csv(ss);
  CHECK(back.tickers == t.tickers);
  CHECK(back.dates == t.dates);
  CHECK(back.prices == t.prices);
}

TEST_CASE("bundled fixture: 300 days, 20 stocks, 249 rows, at most 1% clipped") {
  const PriceTable t = read_price_table_csv_file(source_path("tests/fixtures/prices_300x20.csv"));
  CHECK(t.prices.rows() == 300);
  CHECK(t.prices.cols() == 20);
  const ReturnPanel p = preprocess_prices(t);
  CHECK(p.returns.rows() == 249);
  CHECK(p.clipped_fraction <= 0.01);
  CHECK(p.clipped_fraction > 0.0);
  const auto j = nlohmann::json::parse(panel_metadata_json(p));
  CHECK(j.at("schema") == "factorlens.return_panel/1");
  CHECK(j.at("rows") == 249);
}

}  // TEST_SUITE
