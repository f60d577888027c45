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

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmel/common.hpp"

namespace mmel::nn {

using mmel::Vector;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(size_t rows, size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(size_t n) {
    Matrix m(n, n);
    for (size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  size_t size() const { return data_.size(); }

  double& operator()(size_t r, size_t c) { return data_[r * cols_ + c]; }
  const double& operator()(size_t r, size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  std::span<const double> row(size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }

  bool operator==(const Matrix&) const = default;

 private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  std::vector<double> data_;
};

inline void require_dim(size_t got, size_t want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": expected dimension " + std::to_string(want) +
                     ", got " + std::to_string(got));
  }
}

// y += a * x
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  require_dim(y.size(), x.size(), "axpy");
  for (size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace mmel::nn
