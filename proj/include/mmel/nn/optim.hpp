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

#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <span>
#include <sstream>
#include <string>

#include "mmel/common.hpp"
#include "mmel/nn/tensor.hpp"

namespace mmel::nn {

struct MomentumState {
  Vector velocity;
};

/// Classical momentum: v <- mu v - lr g; p <- p + v.
inline void sgd_momentum_step(std::span<double> params, std::span<const double> grads,
                              MomentumState& state, double lr, double mu = 0.9) {
  require_dim(grads.size(), params.size(), "sgd_momentum_step");
  if (state.velocity.empty()) state.velocity.assign(params.size(), 0.0);
  require_dim(state.velocity.size(), params.size(), "sgd_momentum_step state");
  for (size_t i = 0; i < params.size(); ++i) {
    state.velocity[i] = mu * state.velocity[i] - lr * grads[i];
    params[i] += state.velocity[i];
  }
}

// Returns f(x) and writes the gradient into `grad` (already sized).
using Objective = std::function<double(const Vector& x, Vector& grad)>;

struct LbfgsOptions {
  size_t history = 10;
  // Multiplies every line-search-accepted step. 1 gives textbook L-BFGS.
  double step_scale = 1e-5;
  size_t max_iters = 100;
  double grad_tol = 1e-8;
  double armijo_c1 = 1e-4;
  double backtrack = 0.5;
  size_t max_backtracks = 60;
};

struct LbfgsResult {
  Vector x;
  double f = 0.0;
  double grad_norm = 0.0;
  size_t iterations = 0;
  size_t evaluations = 0;
  bool converged = false;
};

namespace detail {

inline void check_finite(double f, const Vector& g, size_t iter, const char* where) {
  if (!std::isfinite(f) || !all_finite(g)) {
    std::ostringstream os;
    os << "lbfgs: non-finite " << (std::isfinite(f) ? "gradient" : "objective")
       << " at iteration " << iter << " (" << where << ")";
    throw NumericError(os.str());
  }
}

}  // namespace detail

/// Limited-memory BFGS with two-loop recursion and Armijo backtracking.
/// The accepted step length is multiplied by `step_scale` before moving.
/// Throws NumericError on a non-finite objective or gradient.
inline LbfgsResult lbfgs_minimize(const Objective& objective, Vector x0,
                                  const LbfgsOptions& opt = {}) {
  LbfgsResult res;
  const size_t n = x0.size();
  res.x = std::move(x0);
  Vector g(n, 0.0);
  double f = objective(res.x, g);
  ++res.evaluations;
  detail::check_finite(f, g, 0, "initial point");

  struct Pair {
    Vector s, y;
    double rho;
  };
  std::deque<Pair> hist;
  Vector d(n), x_new(n), g_new(n, 0.0);

  auto finish = [&](bool converged) {
    res.f = f;
    res.grad_norm = norm2(g);
    res.converged = converged;
    return res;
  };

  if (norm2(g) <= opt.grad_tol) return finish(true);

  for (size_t it = 0; it < opt.max_iters; ++it) {
    // Two-loop recursion: d = -H g.
    Vector q = g;
    std::vector<double> alpha(hist.size());
    for (size_t k = hist.size(); k-- > 0;) {
      alpha[k] = hist[k].rho * dot(hist[k].s, q);
      axpy(-alpha[k], hist[k].y, q);
    }
    double gamma = 1.0;
    if (!hist.empty()) {
      const auto& last = hist.back();
      gamma = dot(last.s, last.y) / dot(last.y, last.y);
    } else {
      gamma = 1.0 / std::max(1.0, norm2(g));
    }
    for (double& v : q) v *= gamma;
    for (size_t k = 0; k < hist.size(); ++k) {
      const double beta = hist[k].rho * dot(hist[k].y, q);
      axpy(alpha[k] - beta, hist[k].s, q);
    }
    for (size_t i = 0; i < n; ++i) d[i] = -q[i];

    double slope = dot(g, d);
    if (!(slope < 0.0)) {
      hist.clear();
      const double scale = 1.0 / std::max(1.0, norm2(g));
      for (size_t i = 0; i < n; ++i) d[i] = -g[i] * scale;
      slope = dot(g, d);
    }

    double step = 1.0;
    double f_trial = 0.0;
    bool accepted = false;
    for (size_t bt = 0; bt <= opt.max_backtracks; ++bt) {
      for (size_t i = 0; i < n; ++i) x_new[i] = res.x[i] + step * d[i];
      f_trial = objective(x_new, g_new);
      ++res.evaluations;
      if (std::isfinite(f_trial) && f_trial <= f + opt.armijo_c1 * step * slope) {
        accepted = true;
        break;
      }
      step *= opt.backtrack;
    }
    if (!accepted) {
      // No decrease along a descent direction: we are at numerical precision.
      res.iterations = it;
      return finish(norm2(g) <= opt.grad_tol);
    }

    if (opt.step_scale != 1.0) {
      step *= opt.step_scale;
      for (size_t i = 0; i < n; ++i) x_new[i] = res.x[i] + step * d[i];
      f_trial = objective(x_new, g_new);
      ++res.evaluations;
    }
    detail::check_finite(f_trial, g_new, it + 1, "after step");

    Pair p{Vector(n), Vector(n), 0.0};
    for (size_t i = 0; i < n; ++i) {
      p.s[i] = x_new[i] - res.x[i];
      p.y[i] = g_new[i] - g[i];
    }
    const double sy = dot(p.s, p.y);
    if (sy > 1e-12 * norm2(p.s) * norm2(p.y)) {
      p.rho = 1.0 / sy;
      hist.push_back(std::move(p));
      if (hist.size() > opt.history) hist.pop_front();
    }
    res.x.swap(x_new);
    g.swap(g_new);
    f = f_trial;
    res.iterations = it + 1;
    if (norm2(g) <= opt.grad_tol) return finish(true);
  }
  return finish(false);
}

/// Central differences, one coordinate at a time.
inline Vector finite_diff_grad(const std::function<double(const Vector&)>& f, Vector x,
                               double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
  Vector g(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(1, |a_i|, |b_i|)
inline double max_relative_error(const Vector& a, const Vector& b) {
  require_dim(b.size(), a.size(), "max_relative_error");
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace mmel::nn
