// Acceptance run: one PASS/FAIL line per criterion, nonzero exit status if any fails.
//
//   acceptance [--workdir DIR] [criterion numbers...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "drlpm/analytics.hpp"
#include "drlpm/baseline_factor.hpp"
#include "drlpm/cli.hpp"
#include "drlpm/ddpg.hpp"
#include "drlpm/synthetic.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace drlpm;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome weight_calculus() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  std::size_t with_shorts = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t m = 1 + rng() % 9;
    const auto w = testing::random_weights(m, rng);
    const auto y = testing::random_relatives(m, rng, 0.3);
    const auto fast = evolve_weights(w, y);
    const auto oracle = testing::monetary_evolve(w, y, 1.0 + static_cast<double>(rng() % 1000000));
    for (std::size_t i = 0; i <= m; ++i) worst = std::max(worst, std::abs(fast[i] - oracle[i]));
    with_shorts += std::any_of(w.begin() + 1, w.end(), [](double v) { return v < 0.0; });
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-12 && secs < 5.0 && with_shorts > 0,
          fmt("max abs error %.3g over 10000 pairs (%zu with shorts), %.2f s", worst, with_shorts, secs)};
}

Outcome shorting_example() {
  const double w = shorted_weight(300000, 700000);
  return {w == -0.3, fmt("shorted_weight(300000, 700000) = %.17g", w)};
}

Outcome first_day_cost() {
  std::mt19937_64 rng(103);
  std::normal_distribution<double> z(0.0, 1.0);
  double worst = 0.0;
  std::size_t trials = 0;
  for (std::size_t m : {1u, 3u, 5u, 10u}) {
    std::vector<double> drift(m, 0.0), vol(m, 0.02);
    const auto market = synthetic::drift_market(drift, vol, 80, m);
    EnvConfig cfg;
    cfg.window = 10;
    cfg.episode_len = 5;
    cfg.mu = 0.0025;
    TradingEnv env(market, cfg);
    for (int k = 0; k < 250; ++k) {
      std::vector<double> raw(m + 1);
      for (auto& v : raw) v = z(rng);
      raw[0] = -1.0 - std::abs(raw[0]);  // cash clamps to zero: fully invested
      auto [tr, next] = env.step(env.start_at(20, 5), raw);
      if (tr.action.cash() != 0.0) return {false, "target was not fully invested"};
      worst = std::max(worst, std::abs(tr.cost - 0.0025));
      ++trials;
    }
  }
  return {worst <= 1e-12, fmt("max |C - 0.0025| = %.3g over %zu fully invested targets", worst, trials)};
}

Outcome telescoping() {
  std::mt19937_64 rng(104);
  std::normal_distribution<double> z(0.0, 1.0);
  double worst = 0.0;
  for (int run = 0; run < 20; ++run) {
    const auto market = synthetic::drift_market({0.001, -0.0005, 0.0003, 0.0}, {0.02, 0.03, 0.015, 0.01}, 320,
                                                static_cast<std::uint64_t>(run));
    EnvConfig cfg;
    cfg.window = 50;
    cfg.episode_len = 252;
    TradingEnv env(market, cfg);
    EnvState s = env.reset(rng());
    const double start = s.value;
    double sum = 0.0;
    while (!s.done()) {
      std::vector<double> raw(5);
      for (auto& v : raw) v = z(rng);
      auto [tr, next] = env.step(s, raw);
      sum += tr.reward;
      s = std::move(next);
    }
    worst = std::max(worst, std::abs(sum - std::log(s.value / start)));
  }
  return {worst < 1e-10, fmt("max |sum(gamma) - ln(rho_end / rho_start)| = %.3g over 20 rollouts of 252 steps", worst)};
}

Outcome gradient_checks() {
  using nn::LayerSpec;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(105);
  const std::size_t m = 5, n = 50;
  struct Case {
    std::string name;
    std::vector<LayerSpec> layers;
    std::vector<std::size_t> input;
  };
  const std::vector<Case> cases = {
      {"actor conv 4->16", {LayerSpec::conv2d(4, 16, 1, 3)}, {4, m, n}},
      {"critic conv 5->16", {LayerSpec::conv2d(5, 16, 1, 3)}, {5, m, n}},
      {"relu", {LayerSpec::relu()}, {16, m, n - 2}},
      {"conv 16->16", {LayerSpec::conv2d(16, 16, 1, 3)}, {16, m, n - 2}},
      {"flatten", {LayerSpec::flatten()}, {16, m, n - 4}},
      {"dense 3680->64", {LayerSpec::dense(16 * m * (n - 4), 64)}, {16 * m * (n - 4)}},
      {"actor dense 64->6", {LayerSpec::dense(64, m + 1)}, {64}},
      {"critic dense 64->1", {LayerSpec::dense(64, 1)}, {64}},
      {"full actor", default_actor_layers(m, n), {4, m, n}},
      {"full critic", default_critic_layers(m, n), {5, m, n}},
  };
  double worst = 0.0;
  std::size_t checked = 0, one_sided = 0, skipped = 0;
  std::string where;
  bool kinks_ok = true;
  for (const auto& c : cases) {
    nn::Network net(c.layers, c.input);
    net.initialize(rng);
    for (nn::Param* p : net.params()) {
      if (p->value.shape.size() == 1) {
        for (double& b : p->value.data) b = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
      }
    }
    std::vector<std::size_t> shape{1};
    shape.insert(shape.end(), c.input.begin(), c.input.end());
    const auto r = testing::check_network(net, testing::random_tensor(shape, rng), rng, 1e-4, 48);
    if (r.worst_rel_error >= worst) {
      worst = r.worst_rel_error;
      where = c.name + " " + r.worst_where;
    }
    checked += r.checked;
    one_sided += r.one_sided;
    skipped += r.skipped_kinks;
    kinks_ok = kinks_ok && r.skipped_kinks * 20 < r.checked + 1;
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && kinks_ok && secs < 60.0,
          fmt("worst relative error %.3g (%s); %zu entries, %zu one-sided at ReLU kinks, %zu skipped; %.1f s", worst,
              where.c_str(), checked, one_sided, skipped, secs)};
}

Outcome action_constraints() {
  std::mt19937_64 rng(106);
  std::normal_distribution<double> z(0.0, 1.0);
  std::size_t bad = 0;
  for (int trial = 0; trial < 100000; ++trial) {
    std::vector<double> raw(2 + rng() % 10);
    for (auto& v : raw) v = 3.0 * z(rng);
    const auto w = enforce_arbitrage(minmax_action(raw));
    double total = 0.0;
    for (double v : w) total += std::abs(v);
    if (std::abs(total - 1.0) > 1e-9 || w.cash() < 0.0 || w.cash() > 1.0 || arbitrage_violated(w.span())) ++bad;
  }
  double worst_affine = 0.0;
  std::uniform_real_distribution<double> scale(0.01, 100.0), shift(-50.0, 50.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> raw(2 + rng() % 10);
    for (auto& v : raw) v = z(rng);
    const double a = scale(rng), b = shift(rng);
    std::vector<double> moved(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) moved[i] = a * raw[i] + b;
    const auto w1 = minmax_action(raw), w2 = minmax_action(moved);
    for (std::size_t i = 0; i < w1.size(); ++i) worst_affine = std::max(worst_affine, std::abs(w1[i] - w2[i]));
  }
  return {bad == 0 && worst_affine < 1e-9,
          fmt("%zu of 100000 actions violate a constraint; max affine deviation %.3g over 1000 transforms", bad,
              worst_affine)};
}

Outcome smoke_training() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t days = 500, train_days = 400;
  const auto market = synthetic::drift_market({std::log(1.01), 0.0, 0.0}, {}, days, 1);
  const auto train_market = slice_days(market, 0, train_days - 1);
  EnvConfig env;
  env.window = 10;
  env.mu = 0.0;
  TrainConfig cfg;  // buffer 600, batch 64, lr 5e-4 / 4e-5, noise N(0.05, 0.25), seed 0
  cfg.total_steps = 20000;
  const auto result = train(train_market, env, cfg);

  const DayRange test{train_days - 1, days - 1};
  const auto greedy = run_backtest(actor_policy(result.actor, env.arbitrage_enabled), market, env, test);
  std::vector<double> baseline;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto rng = std::make_shared<std::mt19937_64>(seed);
    Policy random_policy = [rng](const EnvState& s) {
      std::normal_distribution<double> z(0.0, 1.0);
      std::vector<double> raw(s.weights.size());
      for (auto& v : raw) v = z(*rng);
      return policy_weights(raw, true).values();
    };
    baseline.push_back(run_backtest(random_policy, market, env, test).summary.log_daily_return);
  }
  double mean = 0.0;
  for (double b : baseline) mean += b;
  mean /= static_cast<double>(baseline.size());
  double ss = 0.0;
  for (double b : baseline) ss += (b - mean) * (b - mean);
  const double se = std::sqrt(ss / static_cast<double>(baseline.size() - 1)) / std::sqrt(20.0);
  const double drl = greedy.summary.log_daily_return;
  const double slope = training_slope(result.log).first;
  const double secs = seconds_since(t0);
  return {drl - mean > 3.0 * se && slope > 0.0,
          fmt("greedy %.5f vs random %.5f (SE %.5f, margin %.1f SE); training_slope %.3g over %zu episodes; %.0f s"
              " (target < 600 s)",
              drl, mean, se, (drl - mean) / se, slope, result.log.size(), secs)};
}

Outcome metrics() {
  const double mdd = max_drawdown(std::vector<double>{1.0, 1.2, 0.9, 1.1});
  std::mt19937_64 rng(108);
  std::normal_distribution<double> z(0.0005, 0.02);
  std::vector<double> values{1.0};
  for (int k = 0; k < 252; ++k) values.push_back(values.back() * std::exp(z(rng)));
  const auto m = metric_suite(values);
  const double telescope = std::abs(m.log_daily_return * 252 - std::log(values.back() / values.front()));

  std::vector<double> r;
  for (std::size_t k = 1; k < values.size(); ++k) r.push_back(values[k] / values[k - 1] - 1.0);
  double worst_scale = 0.0;
  for (double c : {0.001, 0.5, 3.0, 1000.0}) {
    std::vector<double> scaled(r);
    for (auto& v : scaled) v *= c;
    worst_scale = std::max({worst_scale, std::abs(*annual_sharpe(scaled) - *annual_sharpe(r)) / std::abs(*annual_sharpe(r)),
                            std::abs(*annual_sortino(scaled) - *annual_sortino(r)) / std::abs(*annual_sortino(r))});
  }
  return {mdd == 0.25 && telescope < 1e-12 && worst_scale < 1e-12,
          fmt("MDD(1, 1.2, 0.9, 1.1) = %.17g; telescoping error %.3g; scale invariance error %.3g", mdd, telescope,
              worst_scale)};
}

Outcome factor_baseline() {
  const auto u = synthetic::ranked_factor_universe(40, 60, 20, 20, 0.01);
  const auto r = run_factor_backtest(u.market, u.panel, {0, 59});
  double worst_return = 0.0, worst_total = 0.0;
  bool exact = true;
  for (std::size_t k = 0; k < r.steps(); ++k) {
    worst_return = std::max(worst_return, std::abs(r.log_returns[k] - 0.01));
    double total = 0.0;
    for (std::size_t i = 0; i < r.weights[k].size(); ++i) {
      const double w = r.weights[k][i];
      total += std::abs(w);
      const bool risky = i >= 1 && i <= 40;
      if (risky ? std::abs(w) != 1.0 / 40 : w != 0.0) exact = false;
    }
    worst_total = std::max(worst_total, std::abs(total - 1.0));
  }
  return {worst_return <= 1e-12 && exact && worst_total <= 1e-12,
          fmt("max |r - 0.01| = %.3g over %zu days; weights exactly +-1/40: %s; max |sum|w| - 1| = %.3g", worst_return,
              r.steps(), exact ? "yes" : "no", worst_total)};
}

Outcome determinism(const fs::path& workdir) {
  fs::remove_all(workdir);
  std::ostringstream log;
  cli::cmd_synth(workdir / "data", 400, 7, log);
  RunConfig c;
  c.market_dir = workdir / "data" / "market";
  c.out = workdir / "run";
  c.env.window = 10;
  c.train.total_steps = 600;
  c.train.seed = 42;
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  };
  auto snapshot = [&] {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::directory_iterator(c.out)) files[entry.path().filename().string()] = slurp(entry.path());
    return files;
  };
  cli::cmd_train(c, log);
  cli::cmd_backtest(c, log);
  const auto first = snapshot();
  fs::remove_all(c.out);
  cli::cmd_train(c, log);
  cli::cmd_backtest(c, log);
  const auto second = snapshot();
  std::size_t differing = 0;
  for (const auto& [name, bytes] : first) {
    const auto it = second.find(name);
    differing += it == second.end() || it->second != bytes;
  }
  return {!first.empty() && first.size() == second.size() && differing == 0,
          fmt("%zu output files per run, %zu differ", first.size(), differing)};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path workdir = fs::temp_directory_path() / "drlpm_acceptance";
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--workdir" && i + 1 < argc) {
      workdir = argv[++i];
    } else if (!a.empty() && std::all_of(a.begin(), a.end(), ::isdigit)) {
      only.push_back(std::stoi(a));
    } else {
      std::fprintf(stderr, "usage: acceptance [--workdir DIR] [criterion numbers...]\n");
      return 2;
    }
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"weight calculus matches monetary accounting", weight_calculus},
      {"shorting example", shorting_example},
      {"first-day transaction cost", first_day_cost},
      {"log returns telescope", telescoping},
      {"gradient checks", gradient_checks},
      {"action constraints", action_constraints},
      {"smoke training beats random policy", smoke_training},
      {"metrics", metrics},
      {"factor baseline", factor_baseline},
      {"train and backtest are deterministic", [&] { return determinism(workdir / "determinism"); }},
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[k].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
