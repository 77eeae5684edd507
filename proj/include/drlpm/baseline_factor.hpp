#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "drlpm/analytics.hpp"
#include "drlpm/market_data.hpp"
#include "drlpm/portfolio_math.hpp"

namespace drlpm {

// Earnings-to-price and turnover per (day, asset) on a market's date axis. NaN marks missing.
class FactorPanel {
 public:
  FactorPanel(std::size_t days, std::size_t assets)
      : days_(days),
        assets_(assets),
        ep_(days * assets, std::numeric_limits<double>::quiet_NaN()),
        turnover_(days * assets, std::numeric_limits<double>::quiet_NaN()) {}

  std::size_t num_days() const { return days_; }
  std::size_t num_assets() const { return assets_; }

  double& ep(std::size_t t, std::size_t i) { return ep_[t * assets_ + i]; }
  double ep(std::size_t t, std::size_t i) const { return ep_[t * assets_ + i]; }
  double& turnover(std::size_t t, std::size_t i) { return turnover_[t * assets_ + i]; }
  double turnover(std::size_t t, std::size_t i) const { return turnover_[t * assets_ + i]; }

  bool has(std::size_t t, std::size_t i) const {
    return std::isfinite(ep(t, i)) && std::isfinite(turnover(t, i));
  }

 private:
  std::size_t days_, assets_;
  std::vector<double> ep_, turnover_;
};

struct FactorRow {
  std::string date;
  std::string asset;
  double ep_ratio;
  double turnover;
};

// Reads `date,asset,ep_ratio,turnover`. Blank or malformed factor cells become missing.
inline std::vector<FactorRow> load_factor_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  const auto header = detail::split_csv_line(line);
  static const char* expected[] = {"date", "asset", "ep_ratio", "turnover"};
  if (header.size() < 4) throw DataError(path.string() + ": header must be date,asset,ep_ratio,turnover");
  for (std::size_t i = 0; i < 4; ++i) {
    if (detail::lower(header[i]) != expected[i]) {
      throw DataError(path.string() + ": header must be date,asset,ep_ratio,turnover");
    }
  }
  auto parse = [](std::string_view cell) {
    double v = 0.0;
    const auto* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    return (ec == std::errc() && ptr == end && !cell.empty()) ? v : std::numeric_limits<double>::quiet_NaN();
  };
  std::vector<FactorRow> rows;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto c = detail::split_csv_line(line);
    if (c.size() < 2 || c[0].empty() || c[1].empty()) throw DataError(path.string() + ": row without date or asset");
    rows.push_back({std::string(c[0]), std::string(c[1]), c.size() > 2 ? parse(c[2]) : NAN,
                    c.size() > 3 ? parse(c[3]) : NAN});
  }
  return rows;
}

inline void write_factor_csv(const FactorPanel& panel, const AlignedMarket& market, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "date,asset,ep_ratio,turnover\n";
  for (std::size_t t = 0; t < panel.num_days(); ++t) {
    for (std::size_t i = 0; i < panel.num_assets(); ++i) {
      if (!panel.has(t, i)) continue;
      out << market.dates()[t] << ',' << market.asset(i).asset_id << ',' << panel.ep(t, i) << ','
          << panel.turnover(t, i) << '\n';
    }
  }
}

// Places factor rows on the market's (day, asset) grid; rows for unknown dates or assets are ignored.
inline FactorPanel align_factors(const std::vector<FactorRow>& rows, const AlignedMarket& market) {
  FactorPanel panel(market.num_days(), market.num_assets());
  std::map<std::string, std::size_t> asset_index;
  for (std::size_t i = 0; i < market.num_assets(); ++i) asset_index[market.asset(i).asset_id] = i;
  for (const auto& r : rows) {
    const auto a = asset_index.find(r.asset);
    if (a == asset_index.end()) continue;
    const std::size_t t = market.lower_index(r.date);
    if (t >= market.num_days() || market.dates()[t] != r.date) continue;
    panel.ep(t, a->second) = r.ep_ratio;
    panel.turnover(t, a->second) = r.turnover;
  }
  return panel;
}

// Score for trading on day t from day t-1 data: 0.5 * (-turnover) + 0.5 * ep. Assets with missing
// factors get no score.
inline std::vector<std::optional<double>> factor_score(const FactorPanel& panel, std::size_t t,
                                                       std::size_t min_scorable = 40) {
  if (t < 1 || t >= panel.num_days()) throw DomainError("factor scores need the previous day's data");
  std::vector<std::optional<double>> scores(panel.num_assets());
  std::size_t scorable = 0;
  for (std::size_t i = 0; i < panel.num_assets(); ++i) {
    if (!panel.has(t - 1, i)) continue;
    scores[i] = 0.5 * (-1.0 * panel.turnover(t - 1, i)) + 0.5 * panel.ep(t - 1, i);
    ++scorable;
  }
  if (scorable < min_scorable) {
    throw DomainError("only " + std::to_string(scorable) + " scorable assets, need " + std::to_string(min_scorable));
  }
  return scores;
}

// Longs the top long_n scores at +1/(long_n+short_n) and shorts the bottom short_n at the negative.
// Result has cash at index 0; ties keep asset order.
inline WeightVector select_weights(const std::vector<std::optional<double>>& scores, std::size_t long_n = 20,
                                   std::size_t short_n = 20) {
  std::vector<std::size_t> ranked;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i]) ranked.push_back(i);
  }
  if (long_n + short_n == 0 || ranked.size() < long_n + short_n) {
    throw DomainError("universe too small for " + std::to_string(long_n) + " longs and " + std::to_string(short_n) +
                      " shorts");
  }
  std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) { return *scores[a] > *scores[b]; });
  const double unit = 1.0 / static_cast<double>(long_n + short_n);
  std::vector<double> w(scores.size() + 1, 0.0);
  for (std::size_t k = 0; k < long_n; ++k) w[ranked[k] + 1] = unit;
  for (std::size_t k = 0; k < short_n; ++k) w[ranked[ranked.size() - 1 - k] + 1] = -unit;
  return WeightVector(std::move(w));
}

struct FactorStrategyConfig {
  std::size_t long_n = 20;
  std::size_t short_n = 20;
};

// Daily rebalanced long-short portfolio without costs or leverage. The day-t log return is the
// weighted sum of asset log returns over close(t-1) -> close(t).
inline BacktestReport run_factor_backtest(const AlignedMarket& market, const FactorPanel& panel, DayRange range,
                                          FactorStrategyConfig cfg = {}) {
  if (panel.num_days() != market.num_days() || panel.num_assets() != market.num_assets()) {
    throw ShapeError("factor panel does not match the market");
  }
  if (range.end <= range.start || range.end >= market.num_days()) throw DomainError("back-test range out of bounds");
  const auto leverage = LeverageVector::ones(market.num_assets() + 1);

  BacktestReport report;
  for (const auto& a : market.assets()) report.asset_ids.push_back(a.asset_id);
  report.values.push_back(1.0);
  for (std::size_t t = range.start + 1; t <= range.end; ++t) {
    const WeightVector w = select_weights(factor_score(panel, t, cfg.long_n + cfg.short_n), cfg.long_n, cfg.short_n);
    const auto y = relative_prices(market, t);
    const double r = simple_return(w, y, leverage);
    const double value = report.values.back() * std::exp(r);
    report.dates.push_back(market.dates()[t]);
    report.simple_returns.push_back(value / report.values.back() - 1.0);
    report.values.push_back(value);
    report.weights.push_back(w);
    report.costs.push_back(0.0);
    report.log_returns.push_back(r);
  }
  report.summary = metric_suite(report.values);
  return report;
}

}  // namespace drlpm
