// Copyright 2026 The mmel Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense layers, elementwise activations and layer normalization, each with an
// exact hand-written backward pass.

#pragma once

#include <cmath>
#include <string>

#include "mmel/common.hpp"
#include "mmel/nn/tensor.hpp"

namespace mmel::nn {

/// Glorot/Xavier uniform: entries i.i.d. on +-sqrt(6 / (fan_in + fan_out)).
/// Returned shape is fan_out x fan_in.
inline Matrix xavier_init(size_t fan_in, size_t fan_out, Rng& rng) {
  if (fan_in == 0 || fan_out == 0) throw ShapeError("xavier_init: zero fan");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_out, fan_in);
  for (double& x : w.span()) x = rng.uniform(-bound, bound);
  return w;
}

inline Matrix xavier_init(size_t fan_in, size_t fan_out, uint64_t seed) {
  Rng rng(seed);
  return xavier_init(fan_in, fan_out, rng);
}

struct DenseLayer {
  Matrix W;  // out x in
  Vector b;  // out

  DenseLayer() = default;
  DenseLayer(size_t in, size_t out) : W(out, in), b(out, 0.0) {}

  size_t in_dim() const { return W.cols(); }
  size_t out_dim() const { return W.rows(); }

  static DenseLayer xavier(size_t in, size_t out, Rng& rng) {
    DenseLayer l;
    l.W = xavier_init(in, out, rng);
    l.b.assign(out, 0.0);
    return l;
  }

  bool operator==(const DenseLayer&) const = default;
};

inline Vector dense_forward(const DenseLayer& layer, const Vector& x) {
  require_dim(x.size(), layer.in_dim(), "dense_forward input");
  require_dim(layer.b.size(), layer.out_dim(), "dense_forward bias");
  Vector y(layer.b);
  const size_t in = layer.in_dim();
  for (size_t r = 0; r < layer.out_dim(); ++r) {
    const double* w = &layer.W(r, 0);
    double s = 0.0;
    for (size_t c = 0; c < in; ++c) s += w[c] * x[c];
    y[r] += s;
  }
  return y;
}

/// Accumulates dW += dy x^T and db += dy into `grad`, returns dx = W^T dy.
inline Vector dense_backward(const DenseLayer& layer, const Vector& x, const Vector& dy,
                             DenseLayer& grad) {
  require_dim(x.size(), layer.in_dim(), "dense_backward input");
  require_dim(dy.size(), layer.out_dim(), "dense_backward upstream");
  require_dim(grad.W.rows(), layer.out_dim(), "dense_backward grad rows");
  require_dim(grad.W.cols(), layer.in_dim(), "dense_backward grad cols");
  const size_t in = layer.in_dim();
  Vector dx(in, 0.0);
  for (size_t r = 0; r < layer.out_dim(); ++r) {
    const double g = dy[r];
    if (g == 0.0) continue;
    grad.b[r] += g;
    const double* w = &layer.W(r, 0);
    double* gw = &grad.W(r, 0);
    for (size_t c = 0; c < in; ++c) {
      gw[c] += g * x[c];
      dx[c] += g * w[c];
    }
  }
  return dx;
}

struct DenseGrads {
  Vector dx;
  DenseLayer grad;
};

// Non-accumulating convenience form: (dx, dW, db).
inline DenseGrads dense_backward(const DenseLayer& layer, const Vector& x,
                                 const Vector& dy) {
  DenseGrads g{{}, DenseLayer(layer.in_dim(), layer.out_dim())};
  g.dx = dense_backward(layer, x, dy, g.grad);
  return g;
}

enum class Activation { kRelu, kTanh, kSigmoid };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "?";
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline Vector activation_forward(Activation kind, const Vector& x) {
  Vector y(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    switch (kind) {
      case Activation::kRelu: y[i] = x[i] > 0.0 ? x[i] : 0.0; break;
      case Activation::kTanh: y[i] = std::tanh(x[i]); break;
      case Activation::kSigmoid: y[i] = sigmoid(x[i]); break;
    }
  }
  return y;
}

/// Backward from the forward output `y` (and input `x` for relu).
/// The relu subgradient at 0 is 0.
inline Vector activation_backward(Activation kind, const Vector& x, const Vector& y,
                                  const Vector& dy) {
  require_dim(dy.size(), x.size(), "activation_backward");
  Vector dx(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    switch (kind) {
      case Activation::kRelu: dx[i] = x[i] > 0.0 ? dy[i] : 0.0; break;
      case Activation::kTanh: dx[i] = dy[i] * (1.0 - y[i] * y[i]); break;
      case Activation::kSigmoid: dx[i] = dy[i] * y[i] * (1.0 - y[i]); break;
    }
  }
  return dx;
}

struct LayerNormParams {
  Vector gain;
  Vector bias;
  double epsilon = 1e-5;

  LayerNormParams() = default;
  explicit LayerNormParams(size_t dim, double eps = 1e-5)
      : gain(dim, 1.0), bias(dim, 0.0), epsilon(eps) {}

  size_t dim() const { return gain.size(); }
  bool operator==(const LayerNormParams&) const = default;
};

// Saved forward state for the backward pass.
struct LayerNormCache {
  Vector xhat;
  double inv_std = 0.0;
};

/// y = gain * (x - mean) / sqrt(var + eps) + bias, population variance.
inline Vector layer_norm_forward(const LayerNormParams& p, const Vector& x,
                                 LayerNormCache* cache = nullptr) {
  if (x.size() < 2) throw ShapeError("layer_norm: dimension must be >= 2");
  require_dim(p.gain.size(), x.size(), "layer_norm gain");
  require_dim(p.bias.size(), x.size(), "layer_norm bias");
  if (!(p.epsilon > 0.0)) throw ShapeError("layer_norm: epsilon must be > 0");
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv_std = 1.0 / std::sqrt(var + p.epsilon);
  Vector xhat(x.size()), y(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    xhat[i] = (x[i] - mean) * inv_std;
    y[i] = p.gain[i] * xhat[i] + p.bias[i];
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = inv_std;
  }
  return y;
}

/// Accumulates gain/bias gradients into `grad`; returns dx.
inline Vector layer_norm_backward(const LayerNormParams& p, const LayerNormCache& cache,
                                  const Vector& dy, LayerNormParams& grad) {
  const size_t d = cache.xhat.size();
  require_dim(dy.size(), d, "layer_norm_backward");
  const double n = static_cast<double>(d);
  Vector dxhat(d);
  double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
  for (size_t i = 0; i < d; ++i) {
    grad.gain[i] += dy[i] * cache.xhat[i];
    grad.bias[i] += dy[i];
    dxhat[i] = dy[i] * p.gain[i];
    sum_dxhat += dxhat[i];
    sum_dxhat_xhat += dxhat[i] * cache.xhat[i];
  }
  Vector dx(d);
  for (size_t i = 0; i < d; ++i) {
    dx[i] = cache.inv_std / n * (n * dxhat[i] - sum_dxhat - cache.xhat[i] * sum_dxhat_xhat);
  }
  return dx;
}

}  // namespace mmel::nn
