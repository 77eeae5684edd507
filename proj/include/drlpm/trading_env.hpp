#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "drlpm/error.hpp"
#include "drlpm/market_data.hpp"
#include "drlpm/portfolio_math.hpp"

namespace drlpm {

struct EnvConfig {
  std::size_t window = 50;
  std::size_t episode_len = 252;
  double mu = 0.0025;
  std::vector<double> leverage;  // empty means all ones
  bool arbitrage_enabled = true;

  void validate() const {
    if (window < 2) throw ConfigError("window must be at least 2");
    if (episode_len < 1) throw ConfigError("episode length must be at least 1");
    if (!(mu >= 0.0 && mu < 1.0)) throw ConfigError("cost rate mu must lie in [0, 1)");
    for (double v : leverage) {
      if (!(v > 0.0)) throw ConfigError("leverage ratios must be positive");
    }
  }
};

// S_t = (X_t, W_t) plus the bookkeeping the step function needs.
struct EnvState {
  PriceTensor tensor;     // X_t, observation at day t
  WeightVector weights;   // weights currently held
  WeightVector drifted;   // weights after the last price move, the base for the next cost
  double value = 1.0;     // rho
  std::size_t t = 0;      // absolute day index
  std::size_t steps_done = 0;
  std::size_t episode_len = 0;

  bool done() const { return steps_done >= episode_len; }

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct Transition {
  EnvState state;
  WeightVector action;  // post-normalization, post-arbitrage W_t
  double reward = 0.0;  // gamma_t
  double cost = 0.0;    // C_t
  EnvState next_state;
  bool done = false;

  friend bool operator==(const Transition&, const Transition&) = default;
};

// Daily-trading MDP over an aligned market. The market must outlive the environment.
class TradingEnv {
 public:
  TradingEnv(const AlignedMarket& market, EnvConfig config) : market_(&market), config_(std::move(config)) {
    config_.validate();
    const std::size_t size = market_->num_assets() + 1;
    if (!config_.leverage.empty() && config_.leverage.size() != size) {
      throw ConfigError("leverage vector needs " + std::to_string(size) + " entries");
    }
    leverage_ = config_.leverage.empty() ? LeverageVector::ones(size) : LeverageVector(config_.leverage);
  }

  const AlignedMarket& market() const { return *market_; }
  const EnvConfig& config() const { return config_; }
  std::size_t num_assets() const { return market_->num_assets(); }

  // Valid episode starts are [first_start(), last_start()].
  std::size_t first_start() const { return config_.window; }
  std::size_t last_start() const {
    if (market_->num_days() < config_.window + config_.episode_len + 1) {
      throw ConfigError("market has " + std::to_string(market_->num_days()) + " days, episodes need " +
                        std::to_string(config_.window + config_.episode_len + 1));
    }
    return market_->num_days() - 1 - config_.episode_len;
  }

  // Samples a uniformly random start for one episode of config().episode_len steps.
  EnvState reset(std::uint64_t seed) const {
    const std::size_t hi = last_start();
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(first_start(), hi);
    return start_at(pick(rng), config_.episode_len);
  }

  // Deterministic start used for back-testing: `steps` trading days beginning at day t0.
  EnvState start_at(std::size_t t0, std::size_t steps) const {
    if (t0 + 1 < config_.window) throw DomainError("not enough history before day " + std::to_string(t0));
    if (t0 + steps >= market_->num_days()) throw DomainError("episode runs past the end of the market");
    EnvState s;
    s.tensor = price_tensor(*market_, t0, config_.window);
    s.weights = initial_weights(num_assets());
    s.drifted = s.weights;
    s.value = 1.0;
    s.t = t0;
    s.steps_done = 0;
    s.episode_len = steps;
    return s;
  }

  // Applies the constraint pipeline used for every action entering the market.
  WeightVector constrain(std::span<const double> action_raw) const {
    if (action_raw.size() != num_assets() + 1) throw ShapeError("action length must be m + 1");
    auto w = normalize_signed(action_raw);
    WeightVector out = w ? *w : initial_weights(num_assets());
    return config_.arbitrage_enabled ? enforce_arbitrage(out) : out;
  }

  // One trading day: rebalance at t, pay cost, realize the move from t to t+1.
  std::pair<Transition, EnvState> step(const EnvState& state, std::span<const double> action_raw) const {
    if (state.done()) throw ProtocolError("step called on a finished episode");
    const WeightVector target = constrain(action_raw);
    if (config_.arbitrage_enabled && arbitrage_violated(target.span())) {
      throw ProtocolError("action violates the arbitrage rule");
    }
    const auto y = relative_prices(*market_, state.t + 1);
    const double cost = transaction_cost(state.drifted, target, config_.mu);
    const auto [value, gamma] = step_value(state.value, target, y, cost, leverage_);

    EnvState next;
    next.t = state.t + 1;
    next.tensor = price_tensor(*market_, next.t, config_.window);
    next.weights = target;
    next.drifted = evolve_weights(target, y);
    next.value = value;
    next.steps_done = state.steps_done + 1;
    next.episode_len = state.episode_len;

    Transition tr{state, target, gamma, cost, next, next.done()};
    return {std::move(tr), std::move(next)};
  }

 private:
  const AlignedMarket* market_;
  EnvConfig config_;
  LeverageVector leverage_ = LeverageVector::ones(1);
};

// Mean daily log return over a trajectory.
inline double average_reward(std::span<const Transition> trajectory) {
  if (trajectory.empty()) throw DomainError("average reward of an empty trajectory");
  double sum = 0.0;
  for (const auto& tr : trajectory) sum += tr.reward;
  return sum / static_cast<double>(trajectory.size());
}

}  // namespace drlpm
