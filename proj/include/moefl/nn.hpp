// SPDX-License-Identifier: Apache-2.0
//
// Dense multilayer perceptron with hand-written backpropagation.
//
// Parameters live in one flat vector, layer-major: for each layer l the
// (out x in) weight matrix in row-major order followed by the out biases.
// Hidden layers apply relu or tanh; the output layer produces logits that are
// scored with log-softmax and the mean negative log-likelihood.
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "moefl/dataset.hpp"
#include "moefl/error.hpp"
#include "moefl/rng.hpp"

namespace moefl {

enum class Activation { relu, tanh };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

/// Flat real vector tagged by role so parameters and gradients do not mix.
template <class Tag>
class FlatVector {
 public:
  FlatVector() = default;
  explicit FlatVector(std::size_t n, double fill = 0.0) : values_(n, fill) {}
  explicit FlatVector(std::vector<double> values) : values_(std::move(values)) {}
  FlatVector(std::initializer_list<double> values) : values_(values) {}

  std::size_t size() const noexcept { return values_.size(); }
  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }
  std::span<const double> span() const noexcept { return values_; }
  std::span<double> span() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  bool operator==(const FlatVector&) const = default;

 private:
  std::vector<double> values_;
};

struct ParamTag {};
struct GradientTag {};
using ParamVector = FlatVector<ParamTag>;
using Gradient = FlatVector<GradientTag>;

struct ModelSpec {
  /// input dim, hidden widths..., class count
  std::vector<std::size_t> layer_sizes;
  /// One entry per hidden layer; empty means relu everywhere.
  std::vector<Activation> activations;

  static ModelSpec dense(std::size_t input, std::vector<std::size_t> hidden, std::size_t classes,
                         Activation act = Activation::relu) {
    ModelSpec s;
    s.layer_sizes.push_back(input);
    s.layer_sizes.insert(s.layer_sizes.end(), hidden.begin(), hidden.end());
    s.layer_sizes.push_back(classes);
    s.activations.assign(hidden.size(), act);
    return s;
  }

  void validate() const {
    if (layer_sizes.size() < 2) throw InputError("ModelSpec needs at least 2 layer sizes");
    for (std::size_t n : layer_sizes)
      if (n == 0) throw InputError("ModelSpec layer sizes must be positive");
    if (!activations.empty() && activations.size() != layer_sizes.size() - 2)
      throw InputError("ModelSpec needs one activation per hidden layer");
  }

  std::size_t layer_count() const noexcept { return layer_sizes.size() - 1; }
  std::size_t input_dim() const noexcept { return layer_sizes.front(); }
  std::size_t class_count() const noexcept { return layer_sizes.back(); }

  Activation activation(std::size_t hidden_layer) const noexcept {
    return activations.empty() ? Activation::relu : activations[hidden_layer];
  }

  /// Offset of layer l's weight block in the flat vector.
  std::size_t weight_offset(std::size_t l) const noexcept {
    std::size_t off = 0;
    for (std::size_t k = 0; k < l; ++k) off += layer_sizes[k + 1] * (layer_sizes[k] + 1);
    return off;
  }
  std::size_t bias_offset(std::size_t l) const noexcept {
    return weight_offset(l) + layer_sizes[l + 1] * layer_sizes[l];
  }

  std::size_t param_count() const noexcept { return weight_offset(layer_count()); }

  bool operator==(const ModelSpec&) const = default;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
inline ParamVector init_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamVector w(spec.param_count(), 0.0);
  Rng rng(derive_seed(seed, "init_model"));
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.layer_sizes[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const std::size_t off = spec.weight_offset(l);
    const std::size_t n = spec.layer_sizes[l] * spec.layer_sizes[l + 1];
    for (std::size_t i = 0; i < n; ++i) w[off + i] = dist(rng);
  }
  return w;
}

/// Weights and biases of the output layer, in storage order.
inline std::vector<double> last_layer_slice(const ModelSpec& spec, const ParamVector& w) {
  const std::size_t off = spec.weight_offset(spec.layer_count() - 1);
  return {w.begin() + static_cast<std::ptrdiff_t>(off), w.end()};
}

namespace detail {

inline void check_shapes(const ModelSpec& spec, const ParamVector& w, const Dataset& data) {
  if (w.size() != spec.param_count())
    throw InputError("parameter vector length " + std::to_string(w.size()) +
                     " does not match model (" + std::to_string(spec.param_count()) + ")");
  if (data.dim != spec.input_dim())
    throw InputError("feature dimension " + std::to_string(data.dim) +
                     " does not match model input " + std::to_string(spec.input_dim()));
}

/// Scratch buffers for one forward/backward pass.
struct Workspace {
  std::vector<std::vector<double>> pre;   // pre-activations per layer
  std::vector<std::vector<double>> post;  // post[0] = input, post[l+1] = act(pre[l])
  std::vector<double> delta, next_delta;

  explicit Workspace(const ModelSpec& spec) {
    pre.resize(spec.layer_count());
    post.resize(spec.layer_count() + 1);
    post[0].resize(spec.input_dim());
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
      pre[l].resize(spec.layer_sizes[l + 1]);
      post[l + 1].resize(spec.layer_sizes[l + 1]);
    }
  }
};

inline void forward(const ModelSpec& spec, const ParamVector& w, std::span<const double> x,
                    Workspace& ws) {
  std::copy(x.begin(), x.end(), ws.post[0].begin());
  const std::size_t last = spec.layer_count() - 1;
  for (std::size_t l = 0; l <= last; ++l) {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t out = spec.layer_sizes[l + 1];
    const double* W = w.data() + spec.weight_offset(l);
    const double* b = w.data() + spec.bias_offset(l);
    const std::vector<double>& a = ws.post[l];
    for (std::size_t o = 0; o < out; ++o) {
      double z = b[o];
      const double* row = W + o * in;
      for (std::size_t i = 0; i < in; ++i) z += row[i] * a[i];
      ws.pre[l][o] = z;
      if (l == last) {
        ws.post[l + 1][o] = z;
      } else if (spec.activation(l) == Activation::relu) {
        ws.post[l + 1][o] = z > 0.0 ? z : 0.0;
      } else {
        ws.post[l + 1][o] = std::tanh(z);
      }
    }
  }
}

/// log-sum-exp with max subtraction.
inline double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace detail

struct LossAndGradient {
  double loss = 0.0;
  Gradient grad;
};

/// Mean NLL over the samples selected by `indices` and its exact gradient.
inline LossAndGradient loss_and_grad(const ModelSpec& spec, const ParamVector& w,
                                     const Dataset& data, std::span<const std::size_t> indices) {
  detail::check_shapes(spec, w, data);
  if (indices.empty()) throw InputError("loss_and_grad: empty batch");
  detail::Workspace ws(spec);
  LossAndGradient out{0.0, Gradient(w.size(), 0.0)};
  double* g = out.grad.data();
  const std::size_t L = spec.layer_count();
  const std::size_t C = spec.class_count();

  for (std::size_t idx : indices) {
    if (idx >= data.size()) throw InputError("loss_and_grad: sample index out of range");
    const int y = data.labels[idx];
    if (y < 0 || static_cast<std::size_t>(y) >= C) throw InputError("loss_and_grad: label out of range");
    detail::forward(spec, w, data.row(idx), ws);
    const std::vector<double>& logits = ws.post[L];
    const double lse = detail::log_sum_exp(logits);
    out.loss += lse - logits[static_cast<std::size_t>(y)];

    ws.delta.assign(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) ws.delta[c] = std::exp(logits[c] - lse);
    ws.delta[static_cast<std::size_t>(y)] -= 1.0;

    for (std::size_t l = L; l-- > 0;) {
      const std::size_t in = spec.layer_sizes[l];
      const std::size_t out_n = spec.layer_sizes[l + 1];
      double* gW = g + spec.weight_offset(l);
      double* gb = g + spec.bias_offset(l);
      const std::vector<double>& a = ws.post[l];
      for (std::size_t o = 0; o < out_n; ++o) {
        const double d = ws.delta[o];
        gb[o] += d;
        double* row = gW + o * in;
        for (std::size_t i = 0; i < in; ++i) row[i] += d * a[i];
      }
      if (l == 0) break;
      const double* W = w.data() + spec.weight_offset(l);
      ws.next_delta.assign(in, 0.0);
      for (std::size_t o = 0; o < out_n; ++o) {
        const double d = ws.delta[o];
        const double* row = W + o * in;
        for (std::size_t i = 0; i < in; ++i) ws.next_delta[i] += row[i] * d;
      }
      const std::vector<double>& z = ws.pre[l - 1];
      if (spec.activation(l - 1) == Activation::relu) {
        for (std::size_t i = 0; i < in; ++i)
          if (z[i] <= 0.0) ws.next_delta[i] = 0.0;
      } else {
        for (std::size_t i = 0; i < in; ++i) {
          const double t = ws.post[l][i];
          ws.next_delta[i] *= 1.0 - t * t;
        }
      }
      ws.delta.swap(ws.next_delta);
    }
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  out.loss *= inv;
  for (double& v : out.grad) v *= inv;
  return out;
}

inline LossAndGradient loss_and_grad(const ModelSpec& spec, const ParamVector& w,
                                     const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return loss_and_grad(spec, w, data, all);
}

/// Mean NLL without the gradient.
inline double mean_loss(const ModelSpec& spec, const ParamVector& w, const Dataset& data) {
  detail::check_shapes(spec, w, data);
  if (data.empty()) throw InputError("mean_loss: empty dataset");
  detail::Workspace ws(spec);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    detail::forward(spec, w, data.row(i), ws);
    const std::vector<double>& logits = ws.post.back();
    total += detail::log_sum_exp(logits) - logits[static_cast<std::size_t>(data.labels[i])];
  }
  return total / static_cast<double>(data.size());
}

/// Argmax class per sample (ties resolve to the lowest class id).
inline std::vector<int> predict(const ModelSpec& spec, const ParamVector& w, const Dataset& data) {
  detail::check_shapes(spec, w, data);
  detail::Workspace ws(spec);
  std::vector<int> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    detail::forward(spec, w, data.row(i), ws);
    const std::vector<double>& logits = ws.post.back();
    out[i] = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
  return out;
}

/// Visits the mini-batches of one epoch: indices shuffled by `rng`, chunks of
/// batch_size with a shorter final chunk.
template <class Fn>
void for_each_minibatch(std::size_t n, std::size_t batch_size, Rng& rng, Fn&& fn) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t len = std::min(batch_size, n - start);
    fn(std::span<const std::size_t>(order.data() + start, len));
  }
}

inline void validate_sgd_args(const Dataset& data, double lr, std::size_t batch_size) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InputError("learning rate must be finite and >= 0");
  if (batch_size == 0) throw InputError("batch_size must be >= 1");
  if (data.empty()) throw InputError("training data is empty");
}

/// `epochs` passes of mini-batch SGD, reshuffling every epoch.
inline ParamVector train_local(const ModelSpec& spec, ParamVector w, const Dataset& data,
                               std::size_t epochs, double lr, std::size_t batch_size, Rng& rng) {
  validate_sgd_args(data, lr, batch_size);
  detail::check_shapes(spec, w, data);
  for (std::size_t e = 0; e < epochs; ++e) {
    for_each_minibatch(data.size(), batch_size, rng, [&](std::span<const std::size_t> batch) {
      const LossAndGradient lg = loss_and_grad(spec, w, data, batch);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = w[i] - lr * lg.grad[i];
    });
  }
  return w;
}

/// One elastic update:
///   w'     = (1 - alpha) w - lr g + alpha w_hat
///   w_hat' = (1 - beta) w_hat - lr g + beta w_bar
/// where w_bar is the last broadcast global model.
inline std::pair<ParamVector, ParamVector> esgd_step(const ParamVector& w, const ParamVector& w_hat,
                                                     const ParamVector& w_bar, const Gradient& g,
                                                     double alpha, double beta, double lr) {
  if (w_hat.size() != w.size() || w_bar.size() != w.size() || g.size() != w.size())
    throw InputError("esgd_step: vector length mismatch");
  if (!(alpha >= 0.0 && alpha <= 1.0) || !(beta >= 0.0 && beta <= 1.0))
    throw InputError("esgd_step: alpha and beta must lie in [0, 1]");
  ParamVector w_next(w.size()), hat_next(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double step = lr * g[i];
    w_next[i] = (1.0 - alpha) * w[i] - step + alpha * w_hat[i];
    hat_next[i] = (1.0 - beta) * w_hat[i] - step + beta * w_bar[i];
  }
  return {std::move(w_next), std::move(hat_next)};
}

struct ElasticState {
  ParamVector w;
  ParamVector anchor;
};

/// Mini-batch training with esgd_step in place of the plain SGD step.
inline ElasticState train_local_esgd(const ModelSpec& spec, ElasticState state,
                                     const ParamVector& w_bar, const Dataset& data,
                                     std::size_t epochs, double lr, std::size_t batch_size,
                                     double alpha, double beta, Rng& rng) {
  validate_sgd_args(data, lr, batch_size);
  detail::check_shapes(spec, state.w, data);
  for (std::size_t e = 0; e < epochs; ++e) {
    for_each_minibatch(data.size(), batch_size, rng, [&](std::span<const std::size_t> batch) {
      const LossAndGradient lg = loss_and_grad(spec, state.w, data, batch);
      auto [w_next, hat_next] = esgd_step(state.w, state.anchor, w_bar, lg.grad, alpha, beta, lr);
      state.w = std::move(w_next);
      state.anchor = std::move(hat_next);
    });
  }
  return state;
}

inline double param_dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("param_dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double param_dist(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("param_dist: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double param_dot(const ParamVector& a, const ParamVector& b) { return param_dot(a.span(), b.span()); }
inline double param_dist(const ParamVector& a, const ParamVector& b) { return param_dist(a.span(), b.span()); }
inline double param_norm(const ParamVector& a) { return std::sqrt(param_dot(a, a)); }

// Serialization: u64 little-endian length, then that many little-endian f64.

namespace detail {
inline void put_u64_le(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}
inline bool get_u64_le(std::istream& is, std::uint64_t& v) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return true;
}
}  // namespace detail

inline void write_params(std::ostream& os, const ParamVector& w) {
  detail::put_u64_le(os, w.size());
  for (double v : w) detail::put_u64_le(os, std::bit_cast<std::uint64_t>(v));
}

inline ParamVector read_params(std::istream& is) {
  std::uint64_t n = 0;
  if (!detail::get_u64_le(is, n)) throw FormatError("parameter file: missing length header at byte offset 0");
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 24)));
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    if (!detail::get_u64_le(is, bits))
      throw FormatError("parameter file: truncated at byte offset " + std::to_string(8 + 8 * i));
    values.push_back(std::bit_cast<double>(bits));
  }
  return ParamVector(std::move(values));
}

}  // namespace moefl
