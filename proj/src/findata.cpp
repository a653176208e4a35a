#include "factorlens/findata.hpp"

#include "factorlens/dataset_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace factorlens {

void validate(const PriceTable& table) {
  const Index t = table.prices.rows(), m = table.prices.cols();
  if (t < 1 || m < 1) throw InputError("price table: empty");
  if (!table.tickers.empty() && static_cast<Index>(table.tickers.size()) != m)
    throw InputError("price table: ticker count does not match columns");
  if (!table.dates.empty() && static_cast<Index>(table.dates.size()) != t)
    throw InputError("price table: date count does not match rows");
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < t; ++i)
      if (!(table.prices(i, j) > 0.0) || !std::isfinite(table.prices(i, j))) {
        const std::string stock =
            table.tickers.empty() ? std::to_string(j + 1) : table.tickers[j];
        const std::string day =
            table.dates.empty() ? std::to_string(i + 1) : table.dates[i];
        throw InputError("price table: nonpositive or non-finite price for stock " +
                         stock + " on day " + day);
      }
}

PriceTable read_price_table_csv(std::istream& in) {
  const auto rows = read_csv_rows(in);
  if (rows.size() < 2) throw InputError("price table: need a header and at least one day");
  PriceTable table;
  const auto& header = rows.front();
  if (header.size() < 2) throw InputError("price table: header needs a date column and tickers");
  table.tickers.assign(header.begin() + 1, header.end());
  const Index m = static_cast<Index>(table.tickers.size());
  table.prices.resize(static_cast<Index>(rows.size()) - 1, m);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (static_cast<Index>(row.size()) != m + 1)
      throw InputError("price table: row " + std::to_string(r + 1) + " has " +
                       std::to_string(row.size()) + " fields, expected " +
                       std::to_string(m + 1));
    table.dates.push_back(row[0]);
    for (Index j = 0; j < m; ++j) {
      try {
        table.prices(static_cast<Index>(r) - 1, j) = parse_double(row[j + 1]);
      } catch (const InputError& e) {
        throw InputError("price table: row " + std::to_string(r + 1) + ", stock " +
                         table.tickers[j] + ": " + e.what());
      }
    }
  }
  validate(table);
  return table;
}

PriceTable read_price_table_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open price table '" + path + "'");
  return read_price_table_csv(in);
}

void write_price_table_csv(std::ostream& out, const PriceTable& table) {
  out << "date";
  for (const auto& t : table.tickers) out << ',' << t;
  out << '\n' << std::setprecision(17);
  for (Index i = 0; i < table.prices.rows(); ++i) {
    out << table.dates[i];
    for (Index j = 0; j < table.prices.cols(); ++j) out << ',' << table.prices(i, j);
    out << '\n';
  }
}

ClipBounds pooled_clip_bounds(const Matrix& values, int per_mille) {
  const std::size_t n = static_cast<std::size_t>(values.size());
  if (n == 0) throw InputError("clip bounds: no values");
  std::vector<double> v(values.data(), values.data() + n);
  std::sort(v.begin(), v.end());
  // c = ceil(per_mille * n / 1000) values must lie on the kept side.
  const std::size_t c = (static_cast<std::size_t>(per_mille) * n + 999) / 1000;
  return ClipBounds{v[n - c], v[c - 1]};
}

ReturnPanel preprocess_prices(const PriceTable& table, const PreprocessOptions& options) {
  validate(table);
  const Index t_days = table.prices.rows();
  const Index m = table.prices.cols();
  if (t_days < kVolatilityWindow + 2)
    throw InputError("preprocess: need at least " + std::to_string(kVolatilityWindow + 2) +
                     " days of prices, got " + std::to_string(t_days));

  const Matrix raw = (table.prices.bottomRows(t_days - 1).array() /
                      table.prices.topRows(t_days - 1).array()).log().matrix();
  ClipBounds bounds = options.clip_bounds ? *options.clip_bounds : pooled_clip_bounds(raw);
  if (!(bounds.lower <= bounds.upper))
    throw ParameterError("preprocess: clip lower bound exceeds upper bound");
  const Matrix clipped = raw.cwiseMax(bounds.lower).cwiseMin(bounds.upper);
  const Index moved = (clipped.array() != raw.array()).count();

  const Index n_out = t_days - 1 - kVolatilityWindow;
  // Row n (0-based) normalizes return n+50 by the rms of returns n..n+49.
  Matrix vol(n_out, m);
  const Matrix sq = clipped.array().square().matrix();
  for (Index j = 0; j < m; ++j)
    for (Index n = 0; n < n_out; ++n)
      vol(n, j) = std::sqrt(sq.col(j).segment(n, kVolatilityWindow).sum() /
                            static_cast<double>(kVolatilityWindow));

  auto ticker = [&](Index j) {
    return table.tickers.empty() ? std::to_string(j + 1) : table.tickers[j];
  };
  auto day_label = [&](Index n) {
    // Return day n+50 (0-based) spans prices n+50 and n+51.
    const Index d = n + kVolatilityWindow + 1;
    return table.dates.empty() ? std::to_string(d + 1) : table.dates[d];
  };

  std::vector<Index> keep;
  std::vector<std::string> dropped, offending;
  for (Index j = 0; j < m; ++j) {
    bool bad = false;
    for (Index n = 0; n < n_out; ++n) {
      if (vol(n, j) == 0.0) {
        bad = true;
        if (offending.size() < 20) offending.push_back("(" + ticker(j) + ", " + day_label(n) + ")");
      }
    }
    if (bad) dropped.push_back(ticker(j));
    else keep.push_back(j);
  }
  if (!dropped.empty() && !options.drop_degenerate) {
    std::string list;
    for (const auto& s : offending) list += (list.empty() ? "" : ", ") + s;
    throw DegenerateInputError("preprocess: zero volatility window for (stock, day) " + list +
                               (offending.size() == 20 ? ", ..." : "") +
                               "; use drop-degenerate to remove these stocks");
  }
  if (keep.empty()) throw DegenerateInputError("preprocess: every stock is degenerate");

  ReturnPanel panel;
  panel.returns.resize(n_out, static_cast<Index>(keep.size()));
  panel.volatility.resize(n_out, static_cast<Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    const Index j = keep[c];
    panel.volatility.col(static_cast<Index>(c)) = vol.col(j);
    panel.returns.col(static_cast<Index>(c)) =
        clipped.col(j).segment(kVolatilityWindow, n_out).cwiseQuotient(vol.col(j));
    panel.tickers.push_back(ticker(j));
  }
  panel.clip_bounds = bounds;
  panel.clip_bounds_fixed = options.clip_bounds.has_value();
  panel.clipped_fraction = static_cast<double>(moved) / static_cast<double>(raw.size());
  panel.dropped = std::move(dropped);
  for (Index n = 0; n < n_out; ++n) panel.dates.push_back(day_label(n));
  return panel;
}

std::string panel_metadata_json(const ReturnPanel& panel) {
  nlohmann::json j;
  j["schema"] = "factorlens.return_panel/1";
  j["rows"] = panel.returns.rows();
  j["stocks"] = panel.returns.cols();
  j["clip_lower"] = panel.clip_bounds.lower;
  j["clip_upper"] = panel.clip_bounds.upper;
  j["clip_bounds_source"] = panel.clip_bounds_fixed ? "supplied" : "full_table";
  j["clip_note"] = "thresholds are fixed from the supplied table, not recomputed per window";
  j["clipped_fraction"] = panel.clipped_fraction;
  j["volatility_window"] = kVolatilityWindow;
  j["tickers"] = panel.tickers;
  j["dropped"] = panel.dropped;
  if (!panel.dates.empty()) {
    j["first_date"] = panel.dates.front();
    j["last_date"] = panel.dates.back();
  }
  return j.dump(2);
}

}  // namespace factorlens
