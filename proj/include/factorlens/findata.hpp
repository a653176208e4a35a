#pragma once

// Adjusted-close prices to normalized log daily returns:
//   1. raw returns r_{i,j} = log(p_{i,j+1} / p_{i,j})
//   2. pooled two-sided clipping at the 99.5% order statistics
//   3. volatility = rms of the previous 50 clipped returns
//   4. output row n = clipped return on day n+50 / same-day volatility
// giving T-51 rows from T days of prices.

#include "factorlens/core.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace factorlens {

inline constexpr Index kVolatilityWindow = 50;

/// T_days x M_stocks strictly positive prices, one row per day.
struct PriceTable {
  Matrix prices;
  std::vector<std::string> tickers;
  std::vector<std::string> dates;
};

void validate(const PriceTable& table);

/// Header "date,TICKER1,TICKER2,..."; first column dates, cells prices.
PriceTable read_price_table_csv(std::istream& in);
PriceTable read_price_table_csv_file(const std::string& path);
void write_price_table_csv(std::ostream& out, const PriceTable& table);

struct ClipBounds {
  double lower;
  double upper;
};

/// Smallest observed v with at least 99.5% of values <= v, and largest
/// observed v with at least 99.5% of values >= v, over the pooled values.
ClipBounds pooled_clip_bounds(const Matrix& values, int per_mille = 995);

struct PreprocessOptions {
  /// Fixed thresholds instead of the ones computed from the table.
  std::optional<ClipBounds> clip_bounds;
  /// Drop stocks with an all-zero volatility window instead of failing.
  bool drop_degenerate = false;
};

struct ReturnPanel {
  Matrix returns;     // N x M normalized returns y_(n)
  Matrix volatility;  // N x M volatility used for each entry
  ClipBounds clip_bounds;
  bool clip_bounds_fixed;        // supplied by the caller
  double clipped_fraction;       // share of raw returns moved by clipping
  std::vector<std::string> tickers;       // kept stocks
  std::vector<std::string> dropped;       // removed as degenerate
  std::vector<std::string> dates;         // date label of the return day per row
};

/// Throws InputError on nonpositive prices and DegenerateInputError listing
/// (stock, day) pairs with zero volatility unless drop_degenerate is set.
ReturnPanel preprocess_prices(const PriceTable& table, const PreprocessOptions& options = {});

std::string panel_metadata_json(const ReturnPanel& panel);

}  // namespace factorlens
