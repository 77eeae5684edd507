#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "drlpm/actor_critic.hpp"
#include "drlpm/error.hpp"
#include "drlpm/trading_env.hpp"

namespace drlpm {

struct TrainConfig {
  std::size_t buffer_capacity = 600;
  std::size_t batch = 64;
  double critic_lr = 5e-4;
  double actor_lr = 4e-5;
  std::size_t total_steps = 300000;
  double noise_mean = 0.05;
  double noise_var = 0.25;  // variance, so the noise std is 0.5
  double gamma_discount = 0.99;
  double tau_soft = 0.001;
  std::uint64_t seed = 0;

  void validate() const {
    if (buffer_capacity == 0 || batch == 0) throw ConfigError("buffer and batch sizes must be positive");
    if (batch > buffer_capacity) throw ConfigError("batch cannot exceed buffer capacity");
    if (!(critic_lr > 0.0) || !(actor_lr > 0.0)) throw ConfigError("learning rates must be positive");
    if (noise_var < 0.0) throw ConfigError("noise variance must be nonnegative");
    if (!(gamma_discount >= 0.0 && gamma_discount <= 1.0)) throw ConfigError("discount must lie in [0, 1]");
    if (!(tau_soft >= 0.0 && tau_soft <= 1.0)) throw ConfigError("soft-update rate must lie in [0, 1]");
  }
};

struct EpisodeRecord {
  std::size_t episode = 0;
  std::size_t start_step = 0;
  double mean_daily_return = 0.0;
  double final_value = 1.0;
  double mean_cost = 0.0;

  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

using TrainLog = std::vector<EpisodeRecord>;

inline void write_train_log_csv(const TrainLog& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "episode,step,mean_daily_return,final_value,mean_cost\n";
  for (const auto& r : log) {
    out << r.episode << ',' << r.start_step << ',' << r.mean_daily_return << ',' << r.final_value << ','
        << r.mean_cost << '\n';
  }
}

// Fixed-capacity FIFO ring of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
    items_.reserve(capacity);
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }

  void push(Transition t) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[cursor_] = std::move(t);
    }
    cursor_ = (cursor_ + 1) % capacity_;
  }

  // Oldest-first position k in [0, size()).
  const Transition& at(std::size_t k) const {
    const std::size_t start = items_.size() < capacity_ ? 0 : cursor_;
    return items_.at((start + k) % items_.size());
  }

  // Uniform draw with replacement; empty when fewer than `batch` transitions are stored.
  std::optional<std::vector<const Transition*>> sample(std::size_t batch, std::mt19937_64& rng) const {
    if (items_.size() < batch || batch == 0) return std::nullopt;
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    std::vector<const Transition*> out(batch);
    for (auto& p : out) p = &items_[pick(rng)];
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Transition> items_;
};

// Gaussian exploration on raw actor outputs.
class ExplorationNoise {
 public:
  ExplorationNoise(double mean, double variance, std::uint64_t seed)
      : rng_(seed), dist_(mean, std::sqrt(variance)) {}

  std::vector<double> apply(std::span<const double> raw, bool enabled = true) {
    std::vector<double> out(raw.begin(), raw.end());
    if (!enabled) return out;
    for (double& v : out) v += dist_(rng_);
    return out;
  }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> dist_;
};

// theta_target <- tau * theta + (1 - tau) * theta_target
inline void soft_update(nn::Network& target, const nn::Network& online, double tau) {
  target.blend_from(online, tau);
}

// Weights the environment receives for a raw actor output.
inline WeightVector policy_weights(std::span<const double> raw, bool arbitrage) {
  WeightVector w = minmax_action(raw);
  return arbitrage ? enforce_arbitrage(w) : w;
}

class DdpgAgent {
 public:
  DdpgAgent(std::size_t m, std::size_t n, const TrainConfig& config, bool arbitrage, std::mt19937_64& rng)
      : DdpgAgent(ActorNet(m, n), CriticNet(m, n), config, arbitrage) {
    actor_.net.initialize(rng);
    critic_.net.initialize(rng);
    actor_target_ = actor_;
    critic_target_ = critic_;
  }

  // Targets start as copies of the online networks.
  DdpgAgent(ActorNet actor, CriticNet critic, const TrainConfig& config, bool arbitrage)
      : actor_(std::move(actor)),
        critic_(std::move(critic)),
        actor_target_(actor_),
        critic_target_(critic_),
        actor_opt_(config.actor_lr),
        critic_opt_(config.critic_lr),
        config_(config),
        arbitrage_(arbitrage) {}

  ActorNet& actor() { return actor_; }
  CriticNet& critic() { return critic_; }
  ActorNet& actor_target() { return actor_target_; }
  CriticNet& critic_target() { return critic_target_; }
  const TrainConfig& config() const { return config_; }
  bool arbitrage() const { return arbitrage_; }

  WeightVector greedy(const PriceTensor& x) { return policy_weights(actor_.raw(x), arbitrage_); }

  // One Adam step on the mean squared TD error. Returns the loss before the step.
  double update_critic(std::span<const Transition* const> batch) {
    const std::size_t B = batch.size();
    const std::size_t m = actor_.assets, n = actor_.window;
    const std::size_t per_x = PriceTensor::kFeatures * m * n, per_c = (PriceTensor::kFeatures + 1) * m * n;

    nn::Tensor next_x({B, PriceTensor::kFeatures, m, n});
    for (std::size_t b = 0; b < B; ++b) {
      const auto& d = batch[b]->next_state.tensor.data();
      std::copy(d.begin(), d.end(), next_x.data.begin() + static_cast<std::ptrdiff_t>(b * per_x));
    }
    const nn::Tensor next_raw = actor_target_.net.forward(next_x);
    nn::Tensor next_in({B, PriceTensor::kFeatures + 1, m, n});
    for (std::size_t b = 0; b < B; ++b) {
      std::span<const double> raw(&next_raw.data[b * (m + 1)], m + 1);
      const WeightVector a = policy_weights(raw, arbitrage_);
      write_critic_input(batch[b]->next_state.tensor, a.span(), &next_in.data[b * per_c]);
    }
    const nn::Tensor next_q = critic_target_.net.forward(next_in);

    nn::Tensor in({B, PriceTensor::kFeatures + 1, m, n});
    for (std::size_t b = 0; b < B; ++b) {
      write_critic_input(batch[b]->state.tensor, batch[b]->action.span(), &in.data[b * per_c]);
    }
    const nn::Tensor q = critic_.net.forward(in);

    nn::Tensor grad({B, 1});
    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const double target =
          batch[b]->reward + config_.gamma_discount * (batch[b]->done ? 0.0 : 1.0) * next_q[b];
      const double err = q[b] - target;
      loss += err * err;
      grad[b] = 2.0 * err / static_cast<double>(B);
    }
    critic_.net.zero_grad();
    critic_.net.backward(grad);
    critic_opt_.step(critic_.net);
    return loss / static_cast<double>(B);
  }

  // One Adam ascent step on mean Q(s, pi(s)). Returns the objective before the step.
  double update_actor(std::span<const Transition* const> batch) {
    const std::size_t B = batch.size();
    const std::size_t m = actor_.assets, n = actor_.window;
    const std::size_t per_x = PriceTensor::kFeatures * m * n, per_c = (PriceTensor::kFeatures + 1) * m * n;

    nn::Tensor x({B, PriceTensor::kFeatures, m, n});
    for (std::size_t b = 0; b < B; ++b) {
      const auto& d = batch[b]->state.tensor.data();
      std::copy(d.begin(), d.end(), x.data.begin() + static_cast<std::ptrdiff_t>(b * per_x));
    }
    const nn::Tensor raw = actor_.net.forward(x);
    nn::Tensor in({B, PriceTensor::kFeatures + 1, m, n});
    std::vector<char> flipped(B, 0);
    for (std::size_t b = 0; b < B; ++b) {
      std::span<const double> r(&raw.data[b * (m + 1)], m + 1);
      const WeightVector w = minmax_action(r);
      flipped[b] = arbitrage_ && arbitrage_violated(w.span());
      const WeightVector a = flipped[b] ? enforce_arbitrage(w) : w;
      write_critic_input(batch[b]->state.tensor, a.span(), &in.data[b * per_c]);
    }
    const nn::Tensor q = critic_.net.forward(in);
    double objective = 0.0;
    for (std::size_t b = 0; b < B; ++b) objective += q[b];
    objective /= static_cast<double>(B);

    critic_.net.zero_grad();
    const nn::Tensor grad_in = critic_.net.backward(nn::Tensor({B, 1}, 1.0 / static_cast<double>(B)));
    critic_.net.zero_grad();

    // Descend on -J: the actor receives minus the policy gradient.
    nn::Tensor grad_raw({B, m + 1});
    for (std::size_t b = 0; b < B; ++b) {
      std::vector<double> grad_a(m + 1, 0.0);
      const double* channel = &grad_in.data[b * per_c + PriceTensor::kFeatures * m * n];
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += channel[i * n + k];
        grad_a[i + 1] = acc;
      }
      if (flipped[b]) grad_a[m] = -grad_a[m];
      std::span<const double> r(&raw.data[b * (m + 1)], m + 1);
      const auto g = minmax_action_backward(r, grad_a);
      for (std::size_t i = 0; i <= m; ++i) grad_raw[b * (m + 1) + i] = -g[i];
    }
    actor_.net.zero_grad();
    actor_.net.backward(grad_raw);
    actor_opt_.step(actor_.net);
    return objective;
  }

  void soft_update_targets() {
    soft_update(actor_target_.net, actor_.net, config_.tau_soft);
    soft_update(critic_target_.net, critic_.net, config_.tau_soft);
  }

 private:
  ActorNet actor_;
  CriticNet critic_;
  ActorNet actor_target_;
  CriticNet critic_target_;
  nn::Adam actor_opt_;
  nn::Adam critic_opt_;
  TrainConfig config_;
  bool arbitrage_;
};

struct TrainResult {
  ActorNet actor;
  CriticNet critic;
  TrainLog log;
};

// Called after each completed episode with its record and the agent.
using EpisodeCallback = std::function<void(const EpisodeRecord&, DdpgAgent&)>;

// Runs episodes of env.episode_len random-start days until total_steps environment steps are taken.
// Incomplete trailing episodes are not logged.
inline TrainResult train(const AlignedMarket& market, const EnvConfig& env_config, const TrainConfig& config,
                         const EpisodeCallback& on_episode = {}) {
  config.validate();
  TradingEnv env(market, env_config);
  env.last_start();  // validates the market length up front

  std::mt19937_64 rng(config.seed);
  DdpgAgent agent(market.num_assets(), env_config.window, config, env_config.arbitrage_enabled, rng);
  ExplorationNoise noise(config.noise_mean, config.noise_var, rng());
  std::mt19937_64 sample_rng(rng());
  ReplayBuffer buffer(config.buffer_capacity);

  TrainLog log;
  std::size_t step = 0;
  while (step < config.total_steps) {
    EnvState state = env.reset(rng());
    const std::size_t start_step = step;
    double reward_sum = 0.0, cost_sum = 0.0;
    while (!state.done() && step < config.total_steps) {
      const auto raw = noise.apply(agent.actor().raw(state.tensor));
      const WeightVector action = policy_weights(raw, env_config.arbitrage_enabled);
      auto [tr, next] = env.step(state, action.span());
      reward_sum += tr.reward;
      cost_sum += tr.cost;
      buffer.push(std::move(tr));
      ++step;
      if (auto batch = buffer.sample(config.batch, sample_rng)) {
        agent.update_critic(*batch);
        agent.update_actor(*batch);
        agent.soft_update_targets();
      }
      state = std::move(next);
    }
    if (!state.done()) break;
    const double len = static_cast<double>(state.steps_done);
    EpisodeRecord rec{log.size(), start_step, reward_sum / len, state.value, cost_sum / len};
    log.push_back(rec);
    if (on_episode) on_episode(rec, agent);
  }
  return {agent.actor(), agent.critic(), std::move(log)};
}

}  // namespace drlpm
