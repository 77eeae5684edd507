#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "drlpm/baseline_factor.hpp"
#include "drlpm/ddpg.hpp"
#include "drlpm/error.hpp"
#include "drlpm/market_data.hpp"
#include "drlpm/trading_env.hpp"

namespace drlpm {

// Everything one command invocation needs. Dates are ISO-8601 strings; empty means "use the default".
struct RunConfig {
  EnvConfig env;
  TrainConfig train;
  std::filesystem::path market_dir;
  std::filesystem::path factor_csv;
  std::filesystem::path factor_market_dir;  // empty: the factor strategy trades market_dir
  std::filesystem::path checkpoint;         // empty: <out>/checkpoint.json
  std::filesystem::path out = "out";
  std::string benchmark;  // asset id; empty: the last file in market_dir
  std::string train_start, train_end, test_start, test_end;
  std::size_t checkpoint_every = 0;
  std::string group = "default";
  FactorStrategyConfig factor;

  std::filesystem::path checkpoint_path() const { return checkpoint.empty() ? out / "checkpoint.json" : checkpoint; }

  void validate() const {
    env.validate();
    train.validate();
    if (env.window < 5) throw ConfigError("window must be at least 5 for the default networks");
    if (factor.long_n + factor.short_n == 0) throw ConfigError("factor strategy needs longs or shorts");
    if (!train_end.empty() && !test_start.empty() && test_start <= train_end) {
      throw ConfigError("out-of-sample violation: test range starting " + test_start +
                        " overlaps the training range ending " + train_end);
    }
    if (!train_start.empty() && !train_end.empty() && train_end < train_start) {
      throw ConfigError("train_end precedes train_start");
    }
    if (!test_start.empty() && !test_end.empty() && test_end < test_start) {
      throw ConfigError("test_end precedes test_start");
    }
  }
};

namespace detail {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError("invalid value '" + std::string(text) + "' for " + std::string(key));
  }
  return v;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  const std::string t = lower(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("invalid boolean '" + std::string(text) + "' for " + std::string(key));
}

inline std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

// Applies one `key = value` setting. Unknown keys are rejected.
inline void set_config_value(RunConfig& c, const std::string& key, std::string_view value) {
  using detail::parse_number;
  value = detail::trim(value);
  if (key == "window") c.env.window = parse_number<std::size_t>(key, value);
  else if (key == "episode_len") c.env.episode_len = parse_number<std::size_t>(key, value);
  else if (key == "mu") c.env.mu = parse_number<double>(key, value);
  else if (key == "arbitrage") c.env.arbitrage_enabled = detail::parse_bool(key, value);
  else if (key == "leverage") {
    c.env.leverage.clear();
    if (!value.empty()) {
      for (auto cell : detail::split_csv_line(value)) c.env.leverage.push_back(parse_number<double>(key, detail::trim(cell)));
    }
  }
  else if (key == "buffer") c.train.buffer_capacity = parse_number<std::size_t>(key, value);
  else if (key == "batch") c.train.batch = parse_number<std::size_t>(key, value);
  else if (key == "critic_lr") c.train.critic_lr = parse_number<double>(key, value);
  else if (key == "actor_lr") c.train.actor_lr = parse_number<double>(key, value);
  else if (key == "total_steps") c.train.total_steps = parse_number<std::size_t>(key, value);
  else if (key == "noise_mean") c.train.noise_mean = parse_number<double>(key, value);
  else if (key == "noise_var") c.train.noise_var = parse_number<double>(key, value);
  else if (key == "gamma") c.train.gamma_discount = parse_number<double>(key, value);
  else if (key == "tau") c.train.tau_soft = parse_number<double>(key, value);
  else if (key == "seed") c.train.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "market_dir") c.market_dir = std::string(value);
  else if (key == "factor_csv") c.factor_csv = std::string(value);
  else if (key == "factor_market_dir") c.factor_market_dir = std::string(value);
  else if (key == "checkpoint") c.checkpoint = std::string(value);
  else if (key == "out") c.out = std::string(value);
  else if (key == "benchmark") c.benchmark = std::string(value);
  else if (key == "train_start") c.train_start = std::string(value);
  else if (key == "train_end") c.train_end = std::string(value);
  else if (key == "test_start") c.test_start = std::string(value);
  else if (key == "test_end") c.test_end = std::string(value);
  else if (key == "checkpoint_every") c.checkpoint_every = parse_number<std::size_t>(key, value);
  else if (key == "group") c.group = std::string(value);
  else if (key == "long_n") c.factor.long_n = parse_number<std::size_t>(key, value);
  else if (key == "short_n") c.factor.short_n = parse_number<std::size_t>(key, value);
  else throw ConfigError("unknown configuration key '" + key + "'");
}

// Parses `key = value` lines; '#' starts a comment.
inline void apply_config_text(RunConfig& c, std::string_view text, const std::string& source = "config") {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view v = line;
    if (const auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
    v = detail::trim(v);
    if (v.empty()) continue;
    const auto eq = v.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key(detail::trim(v.substr(0, eq)));
    try {
      set_config_value(c, key, v.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline void apply_config_file(RunConfig& c, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  apply_config_text(c, text.str(), path.string());
}

// Every setting as `key = value`, in a form apply_config_text reads back.
inline std::string render_config(const RunConfig& c) {
  using detail::format_double;
  std::ostringstream o;
  std::string leverage;
  for (double v : c.env.leverage) leverage += (leverage.empty() ? "" : ",") + format_double(v);
  o << "window = " << c.env.window << '\n'
    << "episode_len = " << c.env.episode_len << '\n'
    << "mu = " << format_double(c.env.mu) << '\n'
    << "arbitrage = " << (c.env.arbitrage_enabled ? "true" : "false") << '\n'
    << "leverage = " << leverage << '\n'
    << "buffer = " << c.train.buffer_capacity << '\n'
    << "batch = " << c.train.batch << '\n'
    << "critic_lr = " << format_double(c.train.critic_lr) << '\n'
    << "actor_lr = " << format_double(c.train.actor_lr) << '\n'
    << "total_steps = " << c.train.total_steps << '\n'
    << "noise_mean = " << format_double(c.train.noise_mean) << '\n'
    << "noise_var = " << format_double(c.train.noise_var) << '\n'
    << "gamma = " << format_double(c.train.gamma_discount) << '\n'
    << "tau = " << format_double(c.train.tau_soft) << '\n'
    << "seed = " << c.train.seed << '\n'
    << "market_dir = " << c.market_dir.string() << '\n'
    << "factor_csv = " << c.factor_csv.string() << '\n'
    << "factor_market_dir = " << c.factor_market_dir.string() << '\n'
    << "checkpoint = " << c.checkpoint.string() << '\n'
    << "out = " << c.out.string() << '\n'
    << "benchmark = " << c.benchmark << '\n'
    << "train_start = " << c.train_start << '\n'
    << "train_end = " << c.train_end << '\n'
    << "test_start = " << c.test_start << '\n'
    << "test_end = " << c.test_end << '\n'
    << "checkpoint_every = " << c.checkpoint_every << '\n'
    << "group = " << c.group << '\n'
    << "long_n = " << c.factor.long_n << '\n'
    << "short_n = " << c.factor.short_n << '\n';
  return o.str();
}

// Day indices of the training slice and of the test days whose returns are reported.
struct DataSplit {
  std::size_t train_first = 0, train_last = 0;
  std::size_t test_first = 0, test_last = 0;

  // Back-test range: the first trade is placed at the close before the first test day.
  DayRange test_range() const { return {test_first - 1, test_last}; }
};

// Without explicit dates the market splits chronologically, 80% training and 20% testing.
inline DataSplit resolve_split(const RunConfig& c, const AlignedMarket& market) {
  const std::size_t L = market.num_days();
  const auto& d = market.dates();
  auto first_on_or_after = [&](const std::string& s) { return market.lower_index(s); };
  auto count_on_or_before = [&](const std::string& s) {
    return static_cast<std::size_t>(std::upper_bound(d.begin(), d.end(), s) - d.begin());
  };
  DataSplit s;
  s.train_first = c.train_start.empty() ? 0 : first_on_or_after(c.train_start);
  const std::size_t test_end_count = c.test_end.empty() ? L : count_on_or_before(c.test_end);
  std::size_t train_end_count = 0;
  if (c.train_end.empty() && c.test_start.empty()) {
    train_end_count = L * 4 / 5;
    s.test_first = train_end_count;
  } else if (c.test_start.empty()) {
    train_end_count = count_on_or_before(c.train_end);
    s.test_first = train_end_count;
  } else if (c.train_end.empty()) {
    s.test_first = first_on_or_after(c.test_start);
    train_end_count = s.test_first;
  } else {
    train_end_count = count_on_or_before(c.train_end);
    s.test_first = first_on_or_after(c.test_start);
  }
  if (train_end_count <= s.train_first) throw ConfigError("training range contains no market days");
  if (test_end_count <= s.test_first) throw ConfigError("test range contains no market days");
  s.train_last = train_end_count - 1;
  s.test_last = test_end_count - 1;
  if (s.test_first <= s.train_last) {
    throw ConfigError("out-of-sample violation: test days start at " + d[s.test_first] +
                      " but training runs through " + d[s.train_last]);
  }
  if (s.test_first < c.env.window) {
    throw ConfigError("test range starting " + d[s.test_first] + " lacks a full price window of history");
  }
  return s;
}

}  // namespace drlpm
