#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "drlpm/baseline_factor.hpp"
#include "drlpm/market_data.hpp"

// Synthetic markets and factor panels for tests, demos and smoke training.
namespace drlpm::synthetic {

// Consecutive weekdays starting 2010-01-04, as ISO-8601 strings.
inline std::vector<std::string> trading_dates(std::size_t count) {
  using namespace std::chrono;
  std::vector<std::string> out;
  out.reserve(count);
  sys_days day = sys_days{year{2010} / January / 4};
  while (out.size() < count) {
    const weekday wd{day};
    if (wd != Saturday && wd != Sunday) {
      const year_month_day ymd{day};
      char buf[16];
      std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                    static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
      out.emplace_back(buf);
    }
    day += days{1};
  }
  return out;
}

// OHLC bars around a close path: open at the previous close, high/low bracket both.
inline PriceSeries series_from_closes(std::string id, const std::vector<std::string>& dates,
                                      const std::vector<double>& closes, double wick = 0.0) {
  PriceSeries s;
  s.asset_id = std::move(id);
  s.dates = dates;
  for (std::size_t d = 0; d < closes.size(); ++d) {
    const double c = closes[d];
    const double o = d == 0 ? c : closes[d - 1];
    s.open.push_back(o);
    s.close.push_back(c);
    s.high.push_back(std::max(o, c) * (1.0 + wick));
    s.low.push_back(std::min(o, c) * (1.0 - wick));
  }
  return s;
}

// Geometric paths: close_i(t) = close_i(t-1) * exp(drift_i + vol_i * z). The last asset is the
// benchmark.
inline AlignedMarket drift_market(const std::vector<double>& daily_log_drift, const std::vector<double>& daily_vol,
                                  std::size_t days, std::uint64_t seed = 0, double start_price = 10.0) {
  const auto dates = trading_dates(days);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<PriceSeries> series;
  for (std::size_t i = 0; i < daily_log_drift.size(); ++i) {
    std::vector<double> closes(days);
    double p = start_price;
    for (std::size_t d = 0; d < days; ++d) {
      if (d > 0) p *= std::exp(daily_log_drift[i] + (daily_vol.empty() ? 0.0 : daily_vol[i] * z(rng)));
      closes[d] = p;
    }
    const std::string id = i + 1 == daily_log_drift.size() ? "BENCH" : "A" + std::to_string(i);
    series.push_back(series_from_closes(id, dates, closes, daily_vol.empty() ? 0.0 : 0.002));
  }
  return AlignedMarket(std::move(series), daily_log_drift.size() - 1);
}

// Universe of `assets` stocks plus a flat benchmark where factor rank determines direction: the
// top long_n by score rise by `move` log points per day and the bottom short_n fall by `move`.
struct FactorUniverse {
  AlignedMarket market;
  FactorPanel panel;
};

inline FactorUniverse ranked_factor_universe(std::size_t assets, std::size_t days, std::size_t long_n,
                                             std::size_t short_n, double move) {
  const auto dates = trading_dates(days);
  std::vector<PriceSeries> series;
  for (std::size_t i = 0; i < assets; ++i) {
    // Asset i has the i-th highest score.
    const double drift = i < long_n ? move : (i >= assets - short_n ? -move : 0.0);
    std::vector<double> closes(days);
    for (std::size_t d = 0; d < days; ++d) closes[d] = 20.0 * std::exp(drift * static_cast<double>(d));
    char id[16];
    std::snprintf(id, sizeof id, "S%03zu", i);
    series.push_back(series_from_closes(id, dates, closes));
  }
  series.push_back(series_from_closes("BENCH", dates, std::vector<double>(days, 100.0)));
  AlignedMarket market(std::move(series), assets);
  FactorPanel panel(days, assets + 1);
  for (std::size_t t = 0; t < days; ++t) {
    for (std::size_t i = 0; i < assets; ++i) {
      panel.ep(t, i) = 0.2 - 0.001 * static_cast<double>(i);
      panel.turnover(t, i) = 0.01 + 0.002 * static_cast<double>(i);
    }
  }
  return {std::move(market), std::move(panel)};
}

// Random factor values for every non-benchmark asset.
inline FactorPanel random_factor_panel(const AlignedMarket& market, std::uint64_t seed) {
  FactorPanel panel(market.num_days(), market.num_assets());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ep(0.0, 0.15), to(0.001, 0.08);
  for (std::size_t t = 0; t < market.num_days(); ++t) {
    for (std::size_t i = 0; i < market.num_assets(); ++i) {
      if (i == market.benchmark_index()) continue;
      panel.ep(t, i) = ep(rng);
      panel.turnover(t, i) = to(rng);
    }
  }
  return panel;
}

}  // namespace drlpm::synthetic
