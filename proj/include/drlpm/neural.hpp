#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "drlpm/error.hpp"

namespace drlpm::nn {

// Dense row-major array of doubles.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
      : shape(std::move(s)), data(count(shape), fill) {}
  Tensor(std::vector<std::size_t> s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != count(shape)) throw ShapeError("tensor data does not match its shape");
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline std::string shape_string(const std::vector<std::size_t>& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? ", " : "") + std::to_string(s[i]);
  return out + ")";
}

enum class LayerKind { conv2d, dense, relu, flatten };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

inline LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "conv2d") return LayerKind::conv2d;
  if (s == "dense") return LayerKind::dense;
  if (s == "relu") return LayerKind::relu;
  if (s == "flatten") return LayerKind::flatten;
  throw DataError("unknown layer kind " + s);
}

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t in_features = 0;
  std::size_t units = 0;

  static LayerSpec conv2d(std::size_t in, std::size_t out, std::size_t kh, std::size_t kw) {
    return {LayerKind::conv2d, in, out, kh, kw, 0, 0};
  }
  static LayerSpec dense(std::size_t in, std::size_t units) { return {LayerKind::dense, 0, 0, 1, 1, in, units}; }
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec flatten() { return {LayerKind::flatten}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// A parameter tensor together with its accumulated gradient.
struct Param {
  Tensor value;
  Tensor grad;

  explicit Param(std::vector<std::size_t> shape) : value(shape), grad(shape) {}
  Param() = default;
  friend bool operator==(const Param&, const Param&) = default;
};

// Valid (unpadded) stride-1 convolution over (batch, channels, height, width).
class Conv2d {
 public:
  explicit Conv2d(const LayerSpec& spec)
      : spec_(spec),
        weight_({spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w}),
        bias_({spec.out_channels}) {}

  const LayerSpec& spec() const { return spec_; }
  std::vector<Param*> params() { return {&weight_, &bias_}; }

  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const {
    if (in.size() != 4 || in[1] != spec_.in_channels || in[2] < spec_.kernel_h || in[3] < spec_.kernel_w) {
      throw ShapeError("conv2d expects (B, " + std::to_string(spec_.in_channels) + ", H, W), got " +
                       shape_string(in));
    }
    return {in[0], spec_.out_channels, in[2] - spec_.kernel_h + 1, in[3] - spec_.kernel_w + 1};
  }

  // Works channel-major: each channel is a stack of B*H rows of width W, so one kernel tap is a single
  // contiguous multiply-add across the whole batch. Output positions whose window runs past a row end
  // or into the next sample's rows are scratch and dropped.
  Tensor forward(const Tensor& x) {
    Tensor out(output_shape(x.shape));
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t O = spec_.out_channels, KH = spec_.kernel_h, KW = spec_.kernel_w;
    const std::size_t OH = out.dim(2), OW = out.dim(3);
    const std::size_t plane = B * H * W, span = (B * H - KH) * W + OW;
    to_channel_major(x, xt_);
    const double* w = weight_.value.data.data();
    std::vector<double> acc(plane);
    for (std::size_t o = 0; o < O; ++o) {
      std::fill(acc.begin(), acc.end(), bias_.value[o]);
      for (std::size_t c = 0; c < C; ++c) {
        const double* src = &xt_[c * plane];
        for (std::size_t dy = 0; dy < KH; ++dy) {
          for (std::size_t dx = 0; dx < KW; ++dx) {
            const double k = w[((o * C + c) * KH + dy) * KW + dx];
            const double* in = src + dy * W + dx;
            double* a = acc.data();
            for (std::size_t i = 0; i < span; ++i) a[i] += k * in[i];
          }
        }
      }
      for (std::size_t b = 0; b < B; ++b) {
        double* dst = &out.data[((b * O + o) * OH) * OW];
        for (std::size_t y = 0; y < OH; ++y) std::copy_n(&acc[(b * H + y) * W], OW, dst + y * OW);
      }
    }
    input_shape_ = x.shape;
    cached_ = true;
    return out;
  }

  Tensor backward(const Tensor& g) {
    if (!cached_) throw ProtocolError("conv2d backward before forward");
    const std::size_t B = input_shape_[0], C = input_shape_[1], H = input_shape_[2], W = input_shape_[3];
    const std::size_t O = spec_.out_channels, KH = spec_.kernel_h, KW = spec_.kernel_w;
    const std::size_t OH = H - KH + 1, OW = W - KW + 1;
    if (g.shape != std::vector<std::size_t>{B, O, OH, OW}) throw ShapeError("conv2d upstream gradient shape");
    const std::size_t plane = B * H * W, span = (B * H - KH) * W + OW;
    const double* w = weight_.value.data.data();
    double* gw = weight_.grad.data.data();
    std::vector<double> dxt(C * plane, 0.0);
    std::vector<double> gp(plane, 0.0);  // upstream gradient in the channel-major layout, zero at scratch positions
    for (std::size_t o = 0; o < O; ++o) {
      double gb = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* go = &g.data[((b * O + o) * OH) * OW];
        for (std::size_t y = 0; y < OH; ++y) {
          std::copy_n(go + y * OW, OW, &gp[(b * H + y) * W]);
          for (std::size_t xx = 0; xx < OW; ++xx) gb += go[y * OW + xx];
        }
      }
      bias_.grad[o] += gb;
      for (std::size_t c = 0; c < C; ++c) {
        const double* src = &xt_[c * plane];
        double* dsrc = &dxt[c * plane];
        for (std::size_t dy = 0; dy < KH; ++dy) {
          for (std::size_t dx = 0; dx < KW; ++dx) {
            const std::size_t widx = ((o * C + c) * KH + dy) * KW + dx;
            const double k = w[widx];
            const double* in = src + dy * W + dx;
            double* din = dsrc + dy * W + dx;
            double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
            std::size_t i = 0;
            for (; i + 4 <= span; i += 4) {
              a0 += gp[i] * in[i];
              a1 += gp[i + 1] * in[i + 1];
              a2 += gp[i + 2] * in[i + 2];
              a3 += gp[i + 3] * in[i + 3];
            }
            for (; i < span; ++i) a0 += gp[i] * in[i];
            for (std::size_t j = 0; j < span; ++j) din[j] += k * gp[j];
            gw[widx] += (a0 + a1) + (a2 + a3);
          }
        }
      }
    }
    Tensor dx(input_shape_);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        std::copy_n(&dxt[c * plane + b * H * W], H * W, &dx.data[(b * C + c) * H * W]);
    return dx;
  }

 private:
  friend class Network;

  static void to_channel_major(const Tensor& x, std::vector<double>& out) {
    const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    out.resize(x.size());
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c) std::copy_n(&x.data[(b * C + c) * HW], HW, &out[(c * B + b) * HW]);
  }

  LayerSpec spec_;
  Param weight_;
  Param bias_;
  std::vector<std::size_t> input_shape_;
  std::vector<double> xt_;  // cached input, channel-major
  bool cached_ = false;
};

// Fully connected layer over (batch, features).
class Dense {
 public:
  explicit Dense(const LayerSpec& spec)
      : spec_(spec), weight_({spec.units, spec.in_features}), bias_({spec.units}) {}

  const LayerSpec& spec() const { return spec_; }
  std::vector<Param*> params() { return {&weight_, &bias_}; }

  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const {
    if (in.size() != 2 || in[1] != spec_.in_features) {
      throw ShapeError("dense expects (B, " + std::to_string(spec_.in_features) + "), got " + shape_string(in));
    }
    return {in[0], spec_.units};
  }

  // Four batch rows share each pass over a weight row.
  Tensor forward(const Tensor& x) {
    Tensor out(output_shape(x.shape));
    const std::size_t B = x.dim(0), F = spec_.in_features, U = spec_.units;
    std::size_t b = 0;
    for (; b + 4 <= B; b += 4) {
      const double* i0 = &x.data[b * F];
      const double *i1 = i0 + F, *i2 = i1 + F, *i3 = i2 + F;
      for (std::size_t u = 0; u < U; ++u) {
        const double* w = &weight_.value.data[u * F];
        double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
        for (std::size_t f = 0; f < F; ++f) {
          a0 += w[f] * i0[f];
          a1 += w[f] * i1[f];
          a2 += w[f] * i2[f];
          a3 += w[f] * i3[f];
        }
        out.data[b * U + u] = a0 + bias_.value[u];
        out.data[(b + 1) * U + u] = a1 + bias_.value[u];
        out.data[(b + 2) * U + u] = a2 + bias_.value[u];
        out.data[(b + 3) * U + u] = a3 + bias_.value[u];
      }
    }
    for (; b < B; ++b) {
      const double* in = &x.data[b * F];
      for (std::size_t u = 0; u < U; ++u) {
        const double* w = &weight_.value.data[u * F];
        double acc = 0.0;
        for (std::size_t f = 0; f < F; ++f) acc += w[f] * in[f];
        out.data[b * U + u] = acc + bias_.value[u];
      }
    }
    input_ = x;
    cached_ = true;
    return out;
  }

  Tensor backward(const Tensor& g) {
    if (!cached_) throw ProtocolError("dense backward before forward");
    const std::size_t B = input_.dim(0), F = spec_.in_features, U = spec_.units;
    if (g.shape != std::vector<std::size_t>{B, U}) throw ShapeError("dense upstream gradient shape");
    Tensor dx(input_.shape);
    for (std::size_t b = 0; b < B; ++b) {
      const double* in = &input_.data[b * F];
      double* din = &dx.data[b * F];
      for (std::size_t u = 0; u < U; ++u) {
        const double gu = g.data[b * U + u];
        if (gu == 0.0) continue;
        bias_.grad[u] += gu;
        const double* w = &weight_.value.data[u * F];
        double* gw = &weight_.grad.data[u * F];
        for (std::size_t f = 0; f < F; ++f) {
          gw[f] += gu * in[f];
          din[f] += gu * w[f];
        }
      }
    }
    return dx;
  }

 private:
  friend class Network;
  LayerSpec spec_;
  Param weight_;
  Param bias_;
  Tensor input_;
  bool cached_ = false;
};

class Relu {
 public:
  explicit Relu(const LayerSpec& spec) : spec_(spec) {}
  const LayerSpec& spec() const { return spec_; }
  std::vector<Param*> params() { return {}; }
  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const { return in; }

  Tensor forward(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    input_ = x;
    cached_ = true;
    return out;
  }

  Tensor backward(const Tensor& g) {
    if (!cached_) throw ProtocolError("relu backward before forward");
    if (g.shape != input_.shape) throw ShapeError("relu upstream gradient shape");
    Tensor dx = g;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (!(input_.data[i] > 0.0)) dx.data[i] = 0.0;
    }
    return dx;
  }

 private:
  LayerSpec spec_;
  Tensor input_;
  bool cached_ = false;
};

// (B, ...) -> (B, prod(...))
class Flatten {
 public:
  explicit Flatten(const LayerSpec& spec) : spec_(spec) {}
  const LayerSpec& spec() const { return spec_; }
  std::vector<Param*> params() { return {}; }
  std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const {
    if (in.empty()) throw ShapeError("flatten needs a batch dimension");
    return {in[0], Tensor::count(in) / std::max<std::size_t>(in[0], 1)};
  }

  Tensor forward(const Tensor& x) {
    in_shape_ = x.shape;
    cached_ = true;
    return Tensor(output_shape(x.shape), x.data);
  }

  Tensor backward(const Tensor& g) {
    if (!cached_) throw ProtocolError("flatten backward before forward");
    return Tensor(in_shape_, g.data);
  }

 private:
  LayerSpec spec_;
  std::vector<std::size_t> in_shape_;
  bool cached_ = false;
};

using Layer = std::variant<Conv2d, Dense, Relu, Flatten>;

inline Layer make_layer(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::conv2d: return Conv2d(spec);
    case LayerKind::dense: return Dense(spec);
    case LayerKind::relu: return Relu(spec);
    case LayerKind::flatten: return Flatten(spec);
  }
  throw ShapeError("unknown layer kind");
}

// Sequential stack of layers. Copying a network copies its parameters.
class Network {
 public:
  Network() = default;
  Network(std::vector<LayerSpec> specs, std::vector<std::size_t> input_shape)
      : input_shape_(std::move(input_shape)) {
    std::vector<std::size_t> shape = batched(input_shape_, 1);
    for (const auto& s : specs) {
      layers_.push_back(make_layer(s));
      shape = std::visit([&](auto& l) { return l.output_shape(shape); }, layers_.back());
    }
    output_shape_.assign(shape.begin() + 1, shape.end());
  }

  // Per-sample shapes, without the batch dimension.
  const std::vector<std::size_t>& input_shape() const { return input_shape_; }
  const std::vector<std::size_t>& output_shape() const { return output_shape_; }
  std::size_t num_layers() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return layers_.at(i); }

  std::vector<LayerSpec> specs() const {
    std::vector<LayerSpec> out;
    for (const auto& l : layers_) out.push_back(std::visit([](const auto& x) { return x.spec(); }, l));
    return out;
  }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    for (auto& l : layers_) {
      for (Param* p : std::visit([](auto& x) { return x.params(); }, l)) out.push_back(p);
    }
    return out;
  }
  std::vector<const Param*> params() const {
    std::vector<const Param*> out;
    for (Param* p : const_cast<Network*>(this)->params()) out.push_back(p);
    return out;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const Param* p : params()) n += p->value.size();
    return n;
  }

  // Uniform in +-sqrt(6 / (fan_in + fan_out)); biases zero.
  void initialize(std::mt19937_64& rng) {
    for (auto& l : layers_) {
      std::visit(
          [&](auto& x) {
            const auto& s = x.spec();
            double fan_in = 0, fan_out = 0;
            if (s.kind == LayerKind::conv2d) {
              fan_in = static_cast<double>(s.in_channels * s.kernel_h * s.kernel_w);
              fan_out = static_cast<double>(s.out_channels * s.kernel_h * s.kernel_w);
            } else if (s.kind == LayerKind::dense) {
              fan_in = static_cast<double>(s.in_features);
              fan_out = static_cast<double>(s.units);
            } else {
              return;
            }
            auto ps = x.params();
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            std::uniform_real_distribution<double> dist(-limit, limit);
            for (double& v : ps[0]->value.data) v = dist(rng);
            ps[1]->value.fill(0.0);
          },
          l);
    }
  }

  Tensor forward(const Tensor& batch) {
    if (batch.rank() != input_shape_.size() + 1 ||
        !std::equal(input_shape_.begin(), input_shape_.end(), batch.shape.begin() + 1)) {
      throw ShapeError("network expects input " + shape_string(batched(input_shape_, 0)) + ", got " +
                       shape_string(batch.shape));
    }
    Tensor x = batch;
    for (auto& l : layers_) x = std::visit([&](auto& layer) { return layer.forward(x); }, l);
    if (!x.all_finite()) throw DomainError("non-finite network output");
    forwarded_ = true;
    return x;
  }

  // Accumulates parameter gradients and returns the gradient with respect to the input.
  Tensor backward(const Tensor& upstream) {
    if (!forwarded_) throw ProtocolError("backward called before forward");
    Tensor g = upstream;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      g = std::visit([&](auto& layer) { return layer.backward(g); }, *it);
    }
    if (!g.all_finite()) throw DomainError("non-finite gradient");
    return g;
  }

  void zero_grad() {
    for (Param* p : params()) p->grad.fill(0.0);
  }

  // theta_this <- tau * theta_other + (1 - tau) * theta_this
  void blend_from(const Network& other, double tau) {
    auto mine = params();
    auto theirs = other.params();
    if (mine.size() != theirs.size()) throw ShapeError("networks differ in parameter layout");
    for (std::size_t k = 0; k < mine.size(); ++k) {
      auto& a = mine[k]->value;
      const auto& b = theirs[k]->value;
      if (a.shape != b.shape) throw ShapeError("networks differ in parameter shapes");
      for (std::size_t i = 0; i < a.size(); ++i) a.data[i] = tau * b.data[i] + (1.0 - tau) * a.data[i];
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : layers_) {
      std::visit(
          [&](const auto& x) {
            const auto& s = x.spec();
            nlohmann::json j{{"kind", to_string(s.kind)}};
            if (s.kind == LayerKind::conv2d) {
              j["in_channels"] = s.in_channels;
              j["out_channels"] = s.out_channels;
              j["kernel"] = {s.kernel_h, s.kernel_w};
            } else if (s.kind == LayerKind::dense) {
              j["in_features"] = s.in_features;
              j["units"] = s.units;
            }
            auto ps = const_cast<std::remove_cvref_t<decltype(x)>&>(x).params();
            if (!ps.empty()) {
              j["weight"] = {{"shape", ps[0]->value.shape}, {"values", ps[0]->value.data}};
              j["bias"] = {{"shape", ps[1]->value.shape}, {"values", ps[1]->value.data}};
            }
            layers.push_back(std::move(j));
          },
          l);
    }
    return {{"input_shape", input_shape_}, {"layers", layers}};
  }

  static Network from_json(const nlohmann::json& j) {
    std::vector<LayerSpec> specs;
    for (const auto& lj : j.at("layers")) {
      const auto kind = layer_kind_from_string(lj.at("kind").get<std::string>());
      LayerSpec s{kind};
      if (kind == LayerKind::conv2d) {
        s = LayerSpec::conv2d(lj.at("in_channels"), lj.at("out_channels"), lj.at("kernel").at(0),
                              lj.at("kernel").at(1));
      } else if (kind == LayerKind::dense) {
        s = LayerSpec::dense(lj.at("in_features"), lj.at("units"));
      }
      specs.push_back(s);
    }
    Network net(std::move(specs), j.at("input_shape").get<std::vector<std::size_t>>());
    std::size_t li = 0;
    for (const auto& lj : j.at("layers")) {
      auto ps = std::visit([](auto& x) { return x.params(); }, net.layers_[li++]);
      if (ps.empty()) continue;
      const char* names[] = {"weight", "bias"};
      for (int k = 0; k < 2; ++k) {
        const auto& pj = lj.at(names[k]);
        Tensor t(pj.at("shape").get<std::vector<std::size_t>>(), pj.at("values").get<std::vector<double>>());
        if (t.shape != ps[k]->value.shape) throw DataError("checkpoint parameter shape mismatch");
        ps[k]->value = std::move(t);
      }
    }
    return net;
  }

  static std::vector<std::size_t> batched(const std::vector<std::size_t>& shape, std::size_t batch) {
    std::vector<std::size_t> out{batch};
    out.insert(out.end(), shape.begin(), shape.end());
    return out;
  }

 private:
  std::vector<Layer> layers_;
  std::vector<std::size_t> input_shape_;
  std::vector<std::size_t> output_shape_;
  bool forwarded_ = false;
};

// Adam with bias correction. One instance per network; state is laid out in parameter order.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  double learning_rate() const { return lr_; }

  // Descends along the accumulated gradients.
  void step(Network& net) {
    auto ps = net.params();
    if (m_.empty()) {
      for (const Param* p : ps) {
        m_.emplace_back(p->value.size(), 0.0);
        v_.emplace_back(p->value.size(), 0.0);
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < ps.size(); ++k) {
      auto& val = ps[k]->value.data;
      const auto& g = ps[k]->grad.data;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < val.size(); ++i) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
        val[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      }
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace drlpm::nn
