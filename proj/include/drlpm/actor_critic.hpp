#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <random>
#include <span>
#include <vector>

#include "drlpm/market_data.hpp"
#include "drlpm/neural.hpp"
#include "drlpm/portfolio_math.hpp"

namespace drlpm {

// Maps raw actor outputs to signed weights: min-max to [0, 1], affine to [-1, 1], clamp cash at
// zero, divide by sum |.|. All-equal outputs fall back to all cash.
inline WeightVector minmax_action(std::span<const double> raw) {
  if (raw.size() < 2) throw ShapeError("action needs cash plus at least one asset");
  const double lo = *std::min_element(raw.begin(), raw.end());
  const double span = *std::max_element(raw.begin(), raw.end()) - lo;
  if (!(span > 0.0)) return initial_weights(raw.size() - 1);
  std::vector<double> x(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) x[i] = 2.0 * ((raw[i] - lo) / span - 0.5);
  return *normalize_signed(x);
}

// Vector-Jacobian product of minmax_action: d(loss)/d(raw) given d(loss)/d(weights).
inline std::vector<double> minmax_action_backward(std::span<const double> raw, std::span<const double> grad_w) {
  const std::size_t k = raw.size();
  if (grad_w.size() != k) throw ShapeError("gradient length mismatch");
  std::vector<double> grad_raw(k, 0.0);
  const auto lo_it = std::min_element(raw.begin(), raw.end());
  const auto hi_it = std::max_element(raw.begin(), raw.end());
  const double lo = *lo_it, span = *hi_it - lo;
  if (!(span > 0.0)) return grad_raw;

  std::vector<double> x(k), z(k);
  for (std::size_t i = 0; i < k; ++i) x[i] = 2.0 * ((raw[i] - lo) / span - 0.5);
  z = x;
  if (z[0] < 0.0) z[0] = 0.0;
  double s = 0.0;
  for (double v : z) s += std::abs(v);

  // w = z / s
  double gz_dot = 0.0;
  for (std::size_t i = 0; i < k; ++i) gz_dot += grad_w[i] * z[i];
  std::vector<double> gx(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double sign = z[i] > 0.0 ? 1.0 : (z[i] < 0.0 ? -1.0 : 0.0);
    gx[i] = grad_w[i] / s - sign * gz_dot / (s * s);
  }
  if (!(x[0] > 0.0)) gx[0] = 0.0;

  // x_i = 2 (raw_i - lo) / span - 1
  double g_lo = 0.0, g_hi = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double r = raw[i] - lo;
    grad_raw[i] += gx[i] * 2.0 / span;
    g_lo += gx[i] * (-2.0 / span + 2.0 * r / (span * span));
    g_hi += gx[i] * (-2.0 * r / (span * span));
  }
  grad_raw[static_cast<std::size_t>(lo_it - raw.begin())] += g_lo;
  grad_raw[static_cast<std::size_t>(hi_it - raw.begin())] += g_hi;
  return grad_raw;
}

// Writes the (5, m, n) critic input for one sample at `dst`: the four price channels followed by
// a channel whose row i repeats the weight of risky asset i across the window.
inline void write_critic_input(const PriceTensor& x, std::span<const double> w, double* dst) {
  const std::size_t m = x.assets(), n = x.window();
  if (w.size() != m + 1) throw ShapeError("weight vector does not match tensor asset count");
  std::copy(x.data().begin(), x.data().end(), dst);
  double* channel = dst + PriceTensor::kFeatures * m * n;
  for (std::size_t i = 0; i < m; ++i) std::fill(channel + i * n, channel + (i + 1) * n, w[i + 1]);
}

inline nn::Tensor critic_input(const PriceTensor& x, const WeightVector& w) {
  nn::Tensor out({PriceTensor::kFeatures + 1, x.assets(), x.window()});
  write_critic_input(x, w.span(), out.data.data());
  return out;
}

// Default convolutional stacks. Kernels run along the time axis only.
inline std::vector<nn::LayerSpec> default_actor_layers(std::size_t m, std::size_t n) {
  using nn::LayerSpec;
  if (n < 5) throw ConfigError("window must be at least 5 for the default networks");
  return {LayerSpec::conv2d(4, 16, 1, 3), LayerSpec::relu(),
          LayerSpec::conv2d(16, 16, 1, 3), LayerSpec::relu(),
          LayerSpec::flatten(),
          LayerSpec::dense(16 * m * (n - 4), 64), LayerSpec::relu(),
          LayerSpec::dense(64, m + 1)};
}

inline std::vector<nn::LayerSpec> default_critic_layers(std::size_t m, std::size_t n) {
  using nn::LayerSpec;
  if (n < 5) throw ConfigError("window must be at least 5 for the default networks");
  return {LayerSpec::conv2d(5, 16, 1, 3), LayerSpec::relu(),
          LayerSpec::conv2d(16, 16, 1, 3), LayerSpec::relu(),
          LayerSpec::flatten(),
          LayerSpec::dense(16 * m * (n - 4), 64), LayerSpec::relu(),
          LayerSpec::dense(64, 1)};
}

// Policy network: X_t (4, m, n) -> raw scores (m + 1); weights come from minmax_action.
struct ActorNet {
  nn::Network net;
  std::size_t assets = 0;
  std::size_t window = 0;

  ActorNet() = default;
  ActorNet(std::size_t m, std::size_t n) : ActorNet(m, n, default_actor_layers(m, n)) {}
  ActorNet(std::size_t m, std::size_t n, std::vector<nn::LayerSpec> layers)
      : net(std::move(layers), {PriceTensor::kFeatures, m, n}), assets(m), window(n) {
    if (net.output_shape() != std::vector<std::size_t>{m + 1}) throw ShapeError("actor must output m + 1 values");
  }

  std::vector<double> raw(const PriceTensor& x) {
    nn::Tensor in({1, PriceTensor::kFeatures, x.assets(), x.window()}, x.data());
    return net.forward(in).data;
  }
};

// Action-value network: (5, m, n) -> scalar Q.
struct CriticNet {
  nn::Network net;
  std::size_t assets = 0;
  std::size_t window = 0;

  CriticNet() = default;
  CriticNet(std::size_t m, std::size_t n) : CriticNet(m, n, default_critic_layers(m, n)) {}
  CriticNet(std::size_t m, std::size_t n, std::vector<nn::LayerSpec> layers)
      : net(std::move(layers), {PriceTensor::kFeatures + 1, m, n}), assets(m), window(n) {
    if (net.output_shape() != std::vector<std::size_t>{1}) throw ShapeError("critic must output one value");
  }

  double q(const PriceTensor& x, const WeightVector& w) {
    nn::Tensor in = critic_input(x, w);
    in.shape.insert(in.shape.begin(), 1);
    return net.forward(in)[0];
  }
};

struct Checkpoint {
  ActorNet actor;
  CriticNet critic;
  std::vector<std::string> asset_ids;
};

// JSON manifest of layer specs, shapes and float64 values. Values round-trip bitwise.
inline nlohmann::json checkpoint_to_json(const Checkpoint& cp) {
  return {{"format", "drlpm-checkpoint"},
          {"version", 1},
          {"precision", "float64"},
          {"assets", cp.actor.assets},
          {"window", cp.actor.window},
          {"asset_ids", cp.asset_ids},
          {"actor", cp.actor.net.to_json()},
          {"critic", cp.critic.net.to_json()}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "drlpm-checkpoint") throw DataError("not a drlpm checkpoint");
  if (j.value("version", 0) != 1) throw DataError("unsupported checkpoint version");
  if (j.value("precision", "") != "float64") throw DataError("unsupported checkpoint precision");
  const std::size_t m = j.at("assets"), n = j.at("window");
  Checkpoint cp;
  cp.actor.assets = cp.critic.assets = m;
  cp.actor.window = cp.critic.window = n;
  cp.actor.net = nn::Network::from_json(j.at("actor"));
  cp.critic.net = nn::Network::from_json(j.at("critic"));
  if (cp.actor.net.input_shape() != std::vector<std::size_t>{PriceTensor::kFeatures, m, n} ||
      cp.actor.net.output_shape() != std::vector<std::size_t>{m + 1}) {
    throw DataError("checkpoint actor does not match its declared shape");
  }
  if (cp.critic.net.input_shape() != std::vector<std::size_t>{PriceTensor::kFeatures + 1, m, n} ||
      cp.critic.net.output_shape() != std::vector<std::size_t>{1}) {
    throw DataError("checkpoint critic does not match its declared shape");
  }
  cp.asset_ids = j.value("asset_ids", std::vector<std::string>{});
  return cp;
}

inline void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << checkpoint_to_json(cp).dump(1) << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace drlpm
