#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drlpm/error.hpp"

namespace drlpm {

inline constexpr double kWeightTolerance = 1e-9;

// Signed portfolio weights: index 0 is cash, the last index is the benchmark.
// Holds sum |w_i| = 1, w_0 in [0, 1] and every w_i in [-1, 1].
class WeightVector {
 public:
  WeightVector() = default;

  explicit WeightVector(std::vector<double> w) : w_(std::move(w)) {
    if (w_.size() < 2) throw ShapeError("weight vector needs cash plus at least one asset");
    double total = 0.0;
    for (double v : w_) {
      if (!std::isfinite(v) || v < -1.0 - kWeightTolerance || v > 1.0 + kWeightTolerance) {
        throw DomainError("weight outside [-1, 1]");
      }
      total += std::abs(v);
    }
    if (w_[0] < 0.0) throw DomainError("cash weight cannot be negative");
    if (std::abs(total - 1.0) > kWeightTolerance) {
      throw DomainError("weights must satisfy sum |w| = 1, got " + std::to_string(total));
    }
  }
  WeightVector(std::initializer_list<double> w) : WeightVector(std::vector<double>(w)) {}

  std::size_t size() const { return w_.size(); }
  std::size_t num_assets() const { return w_.size() - 1; }
  double operator[](std::size_t i) const { return w_[i]; }
  double cash() const { return w_.front(); }
  double benchmark() const { return w_.back(); }
  const std::vector<double>& values() const { return w_; }
  std::span<const double> span() const { return w_; }
  auto begin() const { return w_.begin(); }
  auto end() const { return w_.end(); }

  friend bool operator==(const WeightVector&, const WeightVector&) = default;

 private:
  std::vector<double> w_;
};

// Per-asset leverage ratios (cash included), all strictly positive.
class LeverageVector {
 public:
  explicit LeverageVector(std::vector<double> lambda) : lambda_(std::move(lambda)) {
    for (double v : lambda_) {
      if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("leverage ratios must be positive");
    }
  }
  static LeverageVector ones(std::size_t size) { return LeverageVector(std::vector<double>(size, 1.0)); }

  std::size_t size() const { return lambda_.size(); }
  double operator[](std::size_t i) const { return lambda_[i]; }
  const std::vector<double>& values() const { return lambda_; }

 private:
  std::vector<double> lambda_;
};

struct PortfolioState {
  double value = 1.0;
  WeightVector weights;
  std::size_t t = 0;
};

// W_0 = (1, 0, ..., 0) for m risky assets.
inline WeightVector initial_weights(std::size_t m) {
  if (m < 1) throw DomainError("portfolio needs at least one risky asset");
  std::vector<double> w(m + 1, 0.0);
  w[0] = 1.0;
  return WeightVector(std::move(w));
}

// Clamps cash at zero, then divides by sum |.|. Empty optional when nothing is left to scale.
inline std::optional<WeightVector> normalize_signed(std::span<const double> raw) {
  if (raw.size() < 2) throw ShapeError("weight vector needs cash plus at least one asset");
  std::vector<double> w(raw.begin(), raw.end());
  if (w[0] < 0.0) w[0] = 0.0;
  double total = 0.0;
  for (double v : w) {
    if (!std::isfinite(v)) throw DomainError("non-finite action entry");
    total += std::abs(v);
  }
  if (total == 0.0) return std::nullopt;
  for (double& v : w) v /= total;
  return WeightVector(std::move(w));
}

// Signed weight of a short position worth `short_value` next to longs worth `other_values_abs_sum`.
inline double shorted_weight(double short_value, double other_values_abs_sum) {
  if (!(short_value > 0.0) || other_values_abs_sum < 0.0) {
    throw DomainError("short value must be positive and other holdings nonnegative");
  }
  const double denom = other_values_abs_sum + short_value;
  if (denom == 0.0) throw DomainError("degenerate short weight");
  return -short_value / denom;
}

// True when the benchmark is held and every nonzero risky weight (benchmark included) shares one
// sign with at least one other risky asset held.
inline bool arbitrage_violated(std::span<const double> w) {
  const std::size_t bench = w.size() - 1;
  const double wb = w[bench];
  if (wb == 0.0) return false;
  bool other_held = false;
  for (std::size_t i = 1; i < bench; ++i) {
    if (w[i] == 0.0) continue;
    other_held = true;
    if ((w[i] > 0.0) != (wb > 0.0)) return false;
  }
  return other_held;
}

// Flips the benchmark weight when all held risky weights share a sign.
inline WeightVector enforce_arbitrage(const WeightVector& w) {
  if (!arbitrage_violated(w.span())) return w;
  std::vector<double> out = w.values();
  out.back() = -out.back();
  return WeightVector(std::move(out));
}

namespace detail {
inline void require_positive_relatives(std::span<const double> y, std::size_t expected) {
  if (y.size() != expected) throw ShapeError("price-relative vector length mismatch");
  for (double v : y) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("price relatives must be positive");
  }
}
}  // namespace detail

// Passive drift of weights over one price move: (y * w) / (y . |w|).
inline WeightVector evolve_weights(const WeightVector& w_prev, std::span<const double> y) {
  detail::require_positive_relatives(y, w_prev.size());
  std::vector<double> out(w_prev.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = y[i] * w_prev[i];
    denom += y[i] * std::abs(w_prev[i]);
  }
  for (double& v : out) v /= denom;
  return WeightVector(std::move(out));
}

// Cost rate mu * sum_{i>=1} |w'_i - w_i|. Cash rebalancing is free.
inline double transaction_cost(const WeightVector& w_drifted, const WeightVector& w_target, double mu) {
  if (w_drifted.size() != w_target.size()) throw ShapeError("weight vectors differ in length");
  if (mu < 0.0) throw DomainError("cost rate must be nonnegative");
  double turnover = 0.0;
  for (std::size_t i = 1; i < w_target.size(); ++i) turnover += std::abs(w_drifted[i] - w_target[i]);
  return mu * turnover;
}

struct StepValue {
  double value;       // rho_t
  double log_return;  // gamma_t = ln(rho_t / rho_{t-1})
};

namespace detail {
inline StepValue step_value_impl(double rho_prev, const WeightVector& w_prev, std::span<const double> y,
                                 double cost, const double* leverage) {
  if (!(rho_prev > 0.0)) throw DomainError("portfolio value must be positive");
  if (cost < 0.0) throw DomainError("cost rate must be nonnegative");
  if (cost >= 1.0) throw DomainError("transaction cost consumes the whole portfolio");
  require_positive_relatives(y, w_prev.size());
  double growth = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double term = std::log(y[i]) * w_prev[i];
    growth += leverage ? leverage[i] * term : term;
  }
  const double gamma = std::log1p(-cost) + growth;
  return {rho_prev * (1.0 - cost) * std::exp(growth), gamma};
}
}  // namespace detail

// rho_t = rho_{t-1} (1 - C_t) exp[(ln y) . w_{t-1}]
inline StepValue step_value(double rho_prev, const WeightVector& w_prev, std::span<const double> y,
                            double cost) {
  return detail::step_value_impl(rho_prev, w_prev, y, cost, nullptr);
}

// Leveraged form: the log-return of asset i is scaled by lambda_i.
inline StepValue step_value(double rho_prev, const WeightVector& w_prev, std::span<const double> y,
                            double cost, const LeverageVector& leverage) {
  if (leverage.size() != w_prev.size()) throw ShapeError("leverage vector length mismatch");
  return detail::step_value_impl(rho_prev, w_prev, y, cost, leverage.values().data());
}

// sum_i lambda_i ln(y_i) w_i, the portfolio log return before costs.
inline double simple_return(const WeightVector& w_prev, std::span<const double> y,
                            const LeverageVector& leverage) {
  detail::require_positive_relatives(y, w_prev.size());
  if (leverage.size() != w_prev.size()) throw ShapeError("leverage vector length mismatch");
  double r = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) r += leverage[i] * (std::log(y[i]) * w_prev[i]);
  return r;
}

}  // namespace drlpm
