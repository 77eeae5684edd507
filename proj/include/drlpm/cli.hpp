#pragma once

#include <cstddef>
#include <exception>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drlpm/actor_critic.hpp"
#include "drlpm/analytics.hpp"
#include "drlpm/baseline_factor.hpp"
#include "drlpm/config.hpp"
#include "drlpm/ddpg.hpp"
#include "drlpm/error.hpp"
#include "drlpm/market_data.hpp"
#include "drlpm/synthetic.hpp"

// Command implementations behind the drlpm executable. Each writes progress to `log` and its
// artifacts under the configured output directory.
namespace drlpm::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kData = 3, kConfig = 4 };

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return kUsage;
  if (dynamic_cast<const DataError*>(&e)) return kData;
  if (dynamic_cast<const ConfigError*>(&e)) return kConfig;
  return kFailure;
}

inline AlignedMarket load_market(const std::filesystem::path& dir, const std::string& benchmark) {
  if (dir.empty()) throw UsageError("no market directory given (market_dir)");
  if (!std::filesystem::is_directory(dir)) throw UsageError("market directory " + dir.string() + " does not exist");
  auto series = load_directory(dir);
  if (series.empty()) throw UsageError("no .csv files in " + dir.string());
  const std::string bench = benchmark.empty() ? series.back().asset_id : benchmark;
  return align(std::move(series), bench);
}

inline void print_config(const RunConfig& c, std::ostream& log) {
  log << "# configuration\n" << render_config(c) << "# end configuration\n";
}

struct IngestSummary {
  std::size_t assets = 0;
  std::size_t days = 0;
  std::string first_date, last_date;
  std::vector<std::size_t> missing;  // zero-valued price cells per asset after alignment
};

inline IngestSummary cmd_ingest(const std::filesystem::path& dir, const std::string& benchmark, std::ostream& log) {
  const auto market = load_market(dir, benchmark);
  IngestSummary s;
  s.assets = market.num_assets();
  s.days = market.num_days();
  s.first_date = market.dates().front();
  s.last_date = market.dates().back();
  log << "assets: " << s.assets << "\ndays: " << s.days << " (" << s.first_date << " to " << s.last_date << ")\n";
  log << "benchmark: " << market.asset(market.benchmark_index()).asset_id << '\n';
  for (const auto& a : market.assets()) {
    std::size_t miss = 0;
    for (std::size_t t = 0; t < a.size(); ++t) {
      miss += (a.open[t] <= 0.0) + (a.high[t] <= 0.0) + (a.low[t] <= 0.0) + (a.close[t] <= 0.0);
    }
    s.missing.push_back(miss);
    log << "  " << a.asset_id << ": " << miss << " missing price cells\n";
  }
  return s;
}

// Trains on the training slice; writes the checkpoint, train_log.csv and run_config.txt.
inline TrainResult cmd_train(const RunConfig& c, std::ostream& log) {
  c.validate();
  print_config(c, log);
  const auto market = load_market(c.market_dir, c.benchmark);
  const auto split = resolve_split(c, market);
  const auto train_market = slice_days(market, split.train_first, split.train_last);
  log << "training on " << train_market.dates().front() << " to " << train_market.dates().back() << " ("
      << train_market.num_days() << " days)\n";

  std::filesystem::create_directories(c.out);
  std::vector<std::string> ids;
  for (const auto& a : market.assets()) ids.push_back(a.asset_id);
  auto on_episode = [&](const EpisodeRecord& r, DdpgAgent& agent) {
    log << "episode " << r.episode << " step " << r.start_step << " mean_daily_return " << r.mean_daily_return
        << " final_value " << r.final_value << '\n';
    if (c.checkpoint_every > 0 && (r.episode + 1) % c.checkpoint_every == 0) {
      save_checkpoint({agent.actor(), agent.critic(), ids},
                      c.out / ("checkpoint_ep" + std::to_string(r.episode + 1) + ".json"));
    }
  };
  auto result = train(train_market, c.env, c.train, on_episode);
  save_checkpoint({result.actor, result.critic, ids}, c.checkpoint_path());
  write_train_log_csv(result.log, c.out / "train_log.csv");
  {
    std::ofstream cfg(c.out / "run_config.txt");
    cfg << render_config(c);
  }
  if (result.log.size() >= 2) {
    const auto [slope, intercept] = training_slope(result.log);
    log << "training_slope " << slope << " intercept " << intercept << '\n';
  } else {
    log << "training_slope undefined (" << result.log.size() << " completed episodes)\n";
  }
  return result;
}

inline Checkpoint load_matching_checkpoint(const RunConfig& c, const AlignedMarket& market) {
  auto cp = load_checkpoint(c.checkpoint_path());
  std::vector<std::string> ids;
  for (const auto& a : market.assets()) ids.push_back(a.asset_id);
  if (cp.asset_ids != ids) throw DataError("checkpoint assets do not match the market");
  if (cp.actor.window != c.env.window) {
    throw ConfigError("checkpoint window " + std::to_string(cp.actor.window) + " differs from configured window " +
                      std::to_string(c.env.window));
  }
  return cp;
}

// Greedy rollout over the test range; writes backtest_{summary.json,daily.csv,weights.csv,plot.csv}.
inline BacktestReport cmd_backtest(const RunConfig& c, std::ostream& log) {
  c.validate();
  print_config(c, log);
  const auto market = load_market(c.market_dir, c.benchmark);
  const auto split = resolve_split(c, market);
  const auto cp = load_matching_checkpoint(c, market);
  const DayRange range = split.test_range();
  const DayRange training{split.train_first, split.train_last};
  auto report = run_backtest(actor_policy(cp.actor, c.env.arbitrage_enabled), market, c.env, range, training);
  const auto bench = run_backtest(benchmark_policy(market.num_assets()), market, c.env, range);
  for (const auto& w : report.warnings) log << "warning: " << w << '\n';
  write_report(report, c.out, "backtest",
               {{"strategy", "DRL"},
                {"benchmark", market.asset(market.benchmark_index()).asset_id},
                {"benchmark_metrics", to_json(bench.summary)},
                {"mu", c.env.mu},
                {"window", c.env.window}});
  log << "back-test " << report.dates.front() << " to " << report.dates.back() << ": final value "
      << report.values.back() << ", log_daily_return " << report.summary.log_daily_return << '\n';
  return report;
}

struct Comparison {
  BacktestReport drl;
  BacktestReport factor;
};

// Runs the DRL policy and the multi-factor baseline over the same test dates; writes compare.csv.
inline Comparison cmd_compare(const RunConfig& c, std::ostream& log) {
  c.validate();
  if (c.factor_csv.empty()) throw UsageError("compare needs factor_csv");
  if (!std::filesystem::exists(c.factor_csv)) throw UsageError("factor file " + c.factor_csv.string() + " does not exist");
  Comparison out{cmd_backtest(c, log), {}};

  const auto market = load_market(c.market_dir, c.benchmark);
  const auto split = resolve_split(c, market);
  const AlignedMarket factor_market =
      c.factor_market_dir.empty() ? market : load_market(c.factor_market_dir, std::string{});
  const auto& d = factor_market.dates();
  const std::string first = market.dates()[split.test_first], last = market.dates()[split.test_last];
  const std::size_t f_first = factor_market.lower_index(first);
  const std::size_t f_end =
      static_cast<std::size_t>(std::upper_bound(d.begin(), d.end(), last) - d.begin());
  if (f_first == 0 || f_end <= f_first) throw DataError("factor market does not cover the test range");
  const auto panel = align_factors(load_factor_csv(c.factor_csv), factor_market);
  out.factor = run_factor_backtest(factor_market, panel, {f_first - 1, f_end - 1}, c.factor);

  std::filesystem::create_directories(c.out);
  std::ofstream csv(c.out / "compare.csv");
  if (!csv) throw DataError("cannot write " + (c.out / "compare.csv").string());
  csv.precision(17);
  csv << "group,strategy,log_daily_return,log_annual_sharpe,log_annual_sortino,mdd\n";
  auto row = [&](const std::string& name, const MetricSuite& m) {
    csv << c.group << ',' << name << ',' << m.log_daily_return << ',' << format_metric(m.log_annual_sharpe) << ','
        << format_metric(m.log_annual_sortino) << ',' << m.mdd << '\n';
  };
  row("DRL", out.drl.summary);
  row("Multi-factor", out.factor.summary);
  log << "comparison written to " << (c.out / "compare.csv").string() << '\n';
  return out;
}

// Writes a small synthetic data set: a 3-asset market plus benchmark for the agent, and a
// 40-stock universe with factor data for the baseline, on the same dates.
inline void cmd_synth(const std::filesystem::path& dir, std::size_t days, std::uint64_t seed, std::ostream& log) {
  if (days < 60) throw UsageError("synth needs at least 60 days");
  const auto market =
      synthetic::drift_market({0.0008, 0.0002, -0.0003, 0.0003}, {0.015, 0.02, 0.018, 0.01}, days, seed);
  std::filesystem::create_directories(dir / "market");
  for (const auto& a : market.assets()) write_csv(a, dir / "market" / (a.asset_id + ".csv"));

  std::vector<double> drifts(41, 0.0), vols(41, 0.02);
  vols.back() = 0.01;
  const auto universe = synthetic::drift_market(drifts, vols, days, seed + 1);
  std::filesystem::create_directories(dir / "universe");
  for (const auto& a : universe.assets()) write_csv(a, dir / "universe" / (a.asset_id + ".csv"));
  write_factor_csv(synthetic::random_factor_panel(universe, seed + 2), universe, dir / "factors.csv");
  log << "wrote " << market.num_assets() << " market series, " << universe.num_assets()
      << " universe series and factors.csv under " << dir.string() << '\n';
}

}  // namespace drlpm::cli
