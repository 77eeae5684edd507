#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "drlpm/ddpg.hpp"
#include "drlpm/error.hpp"
#include "drlpm/trading_env.hpp"

namespace drlpm {

inline constexpr double kTradingDaysPerYear = 252.0;

// Summary statistics of a value path. Ratios with a zero denominator are undefined (nullopt).
struct MetricSuite {
  double simple_daily_return = 0.0;
  double log_daily_return = 0.0;
  std::optional<double> simple_annual_sharpe;
  std::optional<double> log_annual_sharpe;
  std::optional<double> simple_annual_sortino;
  std::optional<double> log_annual_sortino;
  double mdd = 0.0;

  friend bool operator==(const MetricSuite&, const MetricSuite&) = default;
};

// Per-day record of a rollout. values has one more entry than the per-step series: values[0] is
// the starting value 1 and values[k + 1] follows trading step k.
struct BacktestReport {
  std::vector<std::string> dates;  // date of each step's close
  std::vector<std::string> asset_ids;
  std::vector<double> values;
  std::vector<WeightVector> weights;
  std::vector<double> costs;
  std::vector<double> simple_returns;
  std::vector<double> log_returns;
  MetricSuite summary;
  std::vector<std::string> warnings;

  std::size_t steps() const { return costs.size(); }
};

namespace detail {

inline double mean(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// Population standard deviation.
inline double stddev(std::span<const double> xs) {
  const double mu = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(xs.size()));
}

// Root mean square of the negative part, threshold zero, over all observations.
inline double downside_deviation(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) {
    if (x < 0.0) s += x * x;
  }
  return std::sqrt(s / static_cast<double>(xs.size()));
}

inline std::optional<double> annualized_ratio(double mean_return, double deviation) {
  if (!(deviation > 0.0)) return std::nullopt;
  return mean_return / deviation * std::sqrt(kTradingDaysPerYear);
}

}  // namespace detail

inline std::optional<double> annual_sharpe(std::span<const double> returns) {
  return detail::annualized_ratio(detail::mean(returns), detail::stddev(returns));
}

inline std::optional<double> annual_sortino(std::span<const double> returns) {
  return detail::annualized_ratio(detail::mean(returns), detail::downside_deviation(returns));
}

// Largest peak-to-trough loss relative to the running peak.
inline double max_drawdown(std::span<const double> values) {
  double peak = values.empty() ? 0.0 : values.front();
  double mdd = 0.0;
  for (double v : values) {
    peak = std::max(peak, v);
    if (peak > 0.0) mdd = std::max(mdd, 1.0 - v / peak);
  }
  return mdd;
}

inline MetricSuite metric_suite(std::span<const double> values) {
  if (values.size() < 2) throw DomainError("metrics need at least two portfolio values");
  std::vector<double> simple, logr;
  for (std::size_t t = 1; t < values.size(); ++t) {
    if (!(values[t] > 0.0) || !(values[t - 1] > 0.0)) throw DomainError("portfolio values must stay positive");
    simple.push_back(values[t] / values[t - 1] - 1.0);
    logr.push_back(std::log(values[t] / values[t - 1]));
  }
  MetricSuite m;
  m.simple_daily_return = detail::mean(simple);
  m.log_daily_return = detail::mean(logr);
  m.simple_annual_sharpe = annual_sharpe(simple);
  m.log_annual_sharpe = annual_sharpe(logr);
  m.simple_annual_sortino = annual_sortino(simple);
  m.log_annual_sortino = annual_sortino(logr);
  m.mdd = max_drawdown(values);
  return m;
}

inline MetricSuite metric_suite(const BacktestReport& report) { return metric_suite(report.values); }

struct DayRange {
  std::size_t start = 0;  // day the first trade is placed
  std::size_t end = 0;    // last close observed; end - start trading steps
};

// Maps the current state to a raw action (m + 1 entries) handed to the environment.
using Policy = std::function<std::vector<double>(const EnvState&)>;

// Contiguous greedy rollout from all cash and value 1 over [range.start, range.end].
inline BacktestReport run_backtest(const Policy& policy, const AlignedMarket& market, EnvConfig config,
                                   DayRange range, std::optional<DayRange> training_range = std::nullopt) {
  if (range.end <= range.start || range.end >= market.num_days()) throw DomainError("back-test range out of bounds");
  if (range.start + 1 < config.window) throw DomainError("back-test starts before a full price window");
  config.episode_len = range.end - range.start;
  TradingEnv env(market, config);

  BacktestReport report;
  for (const auto& a : market.assets()) report.asset_ids.push_back(a.asset_id);
  // Returns are realized on days start + 1 .. end; the decision day itself may close the training range.
  if (training_range && training_range->start <= range.end && range.start + 1 <= training_range->end) {
    report.warnings.push_back("back-test range overlaps the declared training range");
  }

  EnvState state = env.start_at(range.start, config.episode_len);
  report.values.push_back(state.value);
  while (!state.done()) {
    auto [tr, next] = env.step(state, policy(state));
    report.dates.push_back(market.dates()[next.t]);
    report.values.push_back(next.value);
    report.weights.push_back(tr.action);
    report.costs.push_back(tr.cost);
    report.simple_returns.push_back(next.value / state.value - 1.0);
    report.log_returns.push_back(tr.reward);
    state = std::move(next);
  }
  report.summary = metric_suite(report.values);
  return report;
}

// Greedy (noise-free) policy of a trained actor.
inline Policy actor_policy(ActorNet actor, bool arbitrage) {
  auto shared = std::make_shared<ActorNet>(std::move(actor));
  return [shared, arbitrage](const EnvState& s) { return policy_weights(shared->raw(s.tensor), arbitrage).values(); };
}

// Holds only the benchmark.
inline Policy benchmark_policy(std::size_t m) {
  return [m](const EnvState&) {
    std::vector<double> w(m + 1, 0.0);
    w[m] = 1.0;
    return w;
  };
}

// Ordinary least squares of episode mean daily return against training step.
inline std::pair<double, double> training_slope(const TrainLog& log) {
  if (log.size() < 2) throw DomainError("training slope needs at least two episodes");
  const double n = static_cast<double>(log.size());
  double sx = 0, sy = 0;
  for (const auto& r : log) {
    sx += static_cast<double>(r.start_step);
    sy += r.mean_daily_return;
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (const auto& r : log) {
    const double dx = static_cast<double>(r.start_step) - mx;
    sxx += dx * dx;
    sxy += dx * (r.mean_daily_return - my);
  }
  if (sxx == 0.0) throw DomainError("training slope needs distinct steps");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

inline nlohmann::json to_json(const MetricSuite& m) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"simple_daily_return", m.simple_daily_return},
          {"log_daily_return", m.log_daily_return},
          {"simple_annual_sharpe", opt(m.simple_annual_sharpe)},
          {"log_annual_sharpe", opt(m.log_annual_sharpe)},
          {"simple_annual_sortino", opt(m.simple_annual_sortino)},
          {"log_annual_sortino", opt(m.log_annual_sortino)},
          {"mdd", m.mdd}};
}

inline std::string format_metric(const std::optional<double>& v) {
  if (!v) return "null";
  std::ostringstream os;
  os.precision(17);
  os << *v;
  return os.str();
}

// <prefix>_summary.json, <prefix>_daily.csv, <prefix>_weights.csv, <prefix>_plot.csv
inline void write_report(const BacktestReport& r, const std::filesystem::path& dir, const std::string& prefix,
                         const nlohmann::json& extra = nlohmann::json::object()) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream out(dir / (prefix + name));
    if (!out) throw DataError("cannot write " + (dir / (prefix + name)).string());
    out.precision(17);
    return out;
  };
  {
    nlohmann::json j{{"conventions",
                      {{"annualization", "sqrt(252)"},
                       {"risk_free_rate", 0.0},
                       {"sortino_threshold", 0.0},
                       {"std", "population"}}},
                     {"steps", r.steps()},
                     {"start_date", r.dates.empty() ? "" : r.dates.front()},
                     {"end_date", r.dates.empty() ? "" : r.dates.back()},
                     {"final_value", r.values.back()},
                     {"metrics", to_json(r.summary)},
                     {"warnings", r.warnings}};
    for (const auto& [k, v] : extra.items()) j[k] = v;
    auto out = open("_summary.json");
    out << j.dump(2) << '\n';
  }
  {
    auto out = open("_daily.csv");
    out << "step,date,value,cost,simple_return,log_return\n";
    for (std::size_t k = 0; k < r.steps(); ++k) {
      out << k << ',' << r.dates[k] << ',' << r.values[k + 1] << ',' << r.costs[k] << ',' << r.simple_returns[k]
          << ',' << r.log_returns[k] << '\n';
    }
  }
  {
    auto out = open("_weights.csv");
    out << "step,date,cash";
    for (const auto& id : r.asset_ids) out << ',' << id;
    out << '\n';
    for (std::size_t k = 0; k < r.steps(); ++k) {
      out << k << ',' << r.dates[k];
      for (double w : r.weights[k]) out << ',' << w;
      out << '\n';
    }
  }
  {
    auto out = open("_plot.csv");
    out << "step,value\n";
    for (std::size_t k = 0; k < r.values.size(); ++k) out << k << ',' << r.values[k] << '\n';
  }
}

}  // namespace drlpm
