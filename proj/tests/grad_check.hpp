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


// Finite-difference checks shared by the unit tests and the acceptance
// suite. Each check draws one random configuration from `seed`, takes the
// scalar probe L = w . output, and compares the analytic gradient of L
// against central differences over every input and parameter.

#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "mmel/fusion.hpp"
#include "mmel/jmel.hpp"
#include "mmel/nn/layers.hpp"
#include "mmel/nn/optim.hpp"

namespace mmel::testing {

inline constexpr double kFdStep = 1e-4;
// Pre-activations closer than this to a relu kink (or losses this close to
// the hinge) are resampled: central differences straddling the kink are
// meaningless there.
inline constexpr double kKinkMargin = 1e-2;

struct GradCheck {
  double max_rel_error = 0.0;
  size_t resampled = 0;  // configurations rejected for sitting near a kink
};

inline Vector random_vector(size_t n, Rng& rng, double scale = 1.0) {
  Vector v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline bool near_kink(const Vector& pre) {
  for (double v : pre) {
    if (std::abs(v) < kKinkMargin) return true;
  }
  return false;
}

// Gradient of `f` over a parameter layout, one slot at a time.
inline Vector fd_over_layout(nn::ParamLayout layout, const std::function<double()>& f) {
  Vector out;
  for (auto& s : layout) {
    for (double& v : s.data) {
      const double orig = v;
      v = orig + kFdStep;
      const double fp = f();
      v = orig - kFdStep;
      const double fm = f();
      v = orig;
      out.push_back((fp - fm) / (2.0 * kFdStep));
    }
  }
  return out;
}

inline GradCheck check_dense(uint64_t seed) {
  Rng rng(seed);
  const size_t in = 1 + rng.below(8), out = 1 + rng.below(8);
  nn::DenseLayer layer = nn::DenseLayer::xavier(in, out, rng);
  layer.b = random_vector(out, rng);
  const Vector x = random_vector(in, rng), w = random_vector(out, rng);
  nn::DenseLayer grad(in, out);
  const Vector dx = nn::dense_backward(layer, x, w, grad);
  auto probe = [&](const Vector& xx) { return dot(w, nn::dense_forward(layer, xx)); };
  GradCheck r;
  r.max_rel_error = nn::max_relative_error(dx, nn::finite_diff_grad(probe, x, kFdStep));
  nn::ParamLayout lp, lg;
  nn::append_slots(lp, "d", layer);
  nn::append_slots(lg, "d", grad);
  const Vector fd = fd_over_layout(lp, [&] { return probe(x); });
  r.max_rel_error = std::max(r.max_rel_error, nn::max_relative_error(nn::flatten(lg), fd));
  return r;
}

inline GradCheck check_activation(nn::Activation kind, uint64_t seed) {
  Rng rng(seed);
  GradCheck r;
  const size_t n = 1 + rng.below(16);
  Vector x = random_vector(n, rng, 2.0);
  while (kind == nn::Activation::kRelu && near_kink(x)) {
    ++r.resampled;
    x = random_vector(n, rng, 2.0);
  }
  const Vector w = random_vector(n, rng);
  const Vector dx = nn::activation_backward(kind, x, nn::activation_forward(kind, x), w);
  auto probe = [&](const Vector& xx) { return dot(w, nn::activation_forward(kind, xx)); };
  r.max_rel_error = nn::max_relative_error(dx, nn::finite_diff_grad(probe, x, kFdStep));
  return r;
}

inline GradCheck check_layer_norm(uint64_t seed) {
  Rng rng(seed);
  const size_t n = 2 + rng.below(15);
  nn::LayerNormParams p(n);
  p.gain = random_vector(n, rng);
  p.bias = random_vector(n, rng);
  const Vector x = random_vector(n, rng, 3.0), w = random_vector(n, rng);
  nn::LayerNormCache cache;
  nn::layer_norm_forward(p, x, &cache);
  nn::LayerNormParams grad(n);
  std::fill(grad.gain.begin(), grad.gain.end(), 0.0);
  const Vector dx = nn::layer_norm_backward(p, cache, w, grad);
  auto probe = [&](const Vector& xx) { return dot(w, nn::layer_norm_forward(p, xx)); };
  GradCheck r;
  r.max_rel_error = nn::max_relative_error(dx, nn::finite_diff_grad(probe, x, kFdStep));
  nn::ParamLayout lp, lg;
  nn::append_slots(lp, "n", p);
  nn::append_slots(lg, "n", grad);
  const Vector fd = fd_over_layout(lp, [&] { return probe(x); });
  r.max_rel_error = std::max(r.max_rel_error, nn::max_relative_error(nn::flatten(lg), fd));
  return r;
}

inline GradCheck check_triplet(uint64_t seed) {
  Rng rng(seed);
  GradCheck r;
  const size_t n = 2 + rng.below(15);
  const double margin = 0.5 + rng.uniform();
  Vector m, pos, neg;
  for (;;) {
    m = random_vector(n, rng);
    pos = random_vector(n, rng);
    neg = random_vector(n, rng);
    Vector dp(n), dn(n);
    for (size_t k = 0; k < n; ++k) {
      dp[k] = m[k] - pos[k];
      dn[k] = m[k] - neg[k];
    }
    if (std::abs(margin + norm2(dp) - norm2(dn)) >= kKinkMargin) break;
    ++r.resampled;
  }
  const TripletLoss tl = triplet_loss(m, pos, neg, margin);
  Vector all = m;
  all.insert(all.end(), pos.begin(), pos.end());
  all.insert(all.end(), neg.begin(), neg.end());
  Vector analytic = tl.d_mention;
  analytic.insert(analytic.end(), tl.d_positive.begin(), tl.d_positive.end());
  analytic.insert(analytic.end(), tl.d_negative.begin(), tl.d_negative.end());
  auto probe = [&](const Vector& v) {
    const Vector a(v.begin(), v.begin() + n), b(v.begin() + n, v.begin() + 2 * n),
        c(v.begin() + 2 * n, v.end());
    return triplet_loss(a, b, c, margin).loss;
  };
  r.max_rel_error = nn::max_relative_error(analytic, nn::finite_diff_grad(probe, all, kFdStep));
  return r;
}

// Random toy model with inputs of dimension 16 and every variant flag drawn.
inline JmelConfig random_jmel_config(Rng& rng) {
  JmelConfig c;
  c.inputs = {16, 16, 16};
  c.hidden = 16;
  c.branch = 8;
  c.joint = 8;
  do {
    c.mask = {rng.uniform() < 0.5, rng.uniform() < 0.5, rng.uniform() < 0.5};
  } while (c.mask.count() == 0);
  c.relu_after_second = rng.uniform() < 0.7;
  c.norm_last = rng.uniform() < 0.7;
  return c;
}

inline bool jmel_near_kink(const JmelConfig& c, const JmelCache& k) {
  auto branch = [&](bool on, const BranchCache& b) {
    if (!on) return false;
    if (near_kink(b.pre1)) return true;
    if (!c.relu_after_second) return false;
    return near_kink(c.norm_last ? b.pre2 : b.mid);
  };
  return branch(c.mask.uni, k.uni) || branch(c.mask.bi, k.bi) || branch(c.mask.img, k.img);
}

inline GradCheck check_jmel(uint64_t seed) {
  Rng rng(seed);
  GradCheck r;
  const JmelConfig c = random_jmel_config(rng);
  for (;;) {
    JmelParams p = JmelParams::init(c, rng.next_u64());
    for (auto* b : {&p.uni, &p.bi, &p.img}) {
      if (b->norm.dim() == 0) continue;
      b->norm.gain = random_vector(c.branch, rng);
      b->norm.bias = random_vector(c.branch, rng);
      b->dense1.b = random_vector(c.hidden, rng, 0.3);
    }
    const FeatureBundle x{random_vector(16, rng), random_vector(16, rng),
                          random_vector(16, rng)};
    const Vector w = random_vector(c.joint, rng);
    JmelCache cache;
    jmel_forward(p, x, &cache);
    if (jmel_near_kink(c, cache)) {
      ++r.resampled;
      continue;
    }
    JmelParams grad = p.zeros_like();
    jmel_backward(p, cache, w, grad);
    const Vector fd = fd_over_layout(p.layout(), [&] { return dot(w, jmel_forward(p, x)); });
    r.max_rel_error = nn::max_relative_error(nn::flatten(grad.layout()), fd);
    return r;
  }
}

inline GradCheck check_mlp(uint64_t seed) {
  Rng rng(seed);
  const size_t n_in = 1 + rng.below(8);
  FusionMlp mlp = FusionMlp::init(n_in, rng.next_u64());
  mlp.hidden1.b = random_vector(n_in + 1, rng, 0.5);
  const Vector x = random_vector(n_in, rng);
  const int label = rng.uniform() < 0.5 ? 0 : 1;
  MlpCache cache;
  const double p = mlp_forward(mlp, x, &cache);
  FusionMlp grad = mlp.zeros_like();
  const Vector dx = mlp_backward(mlp, cache, bce_dlogit(p, label), grad);
  auto loss = [&](const Vector& xx) { return bce(mlp_forward(mlp, xx), label); };
  GradCheck r;
  r.max_rel_error = nn::max_relative_error(dx, nn::finite_diff_grad(loss, x, kFdStep));
  const Vector fd = fd_over_layout(mlp.layout(), [&] { return loss(x); });
  r.max_rel_error = std::max(r.max_rel_error, nn::max_relative_error(nn::flatten(grad.layout()), fd));
  return r;
}

}  // namespace mmel::testing
