#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "demea/error.hpp"

namespace demea {

/// Dense row-major matrix: one row per graph node / vertex, one column per channel.
template <typename Real>
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Real> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, Real fill = Real(0)) : rows(r), cols(c), data(r * c, fill) {}

  Real& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<Real> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const Real> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::size_t size() const { return data.size(); }
  void fill(Real v) { std::fill(data.begin(), data.end(), v); }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<Other>(data[i]);
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

using FeatureMap = Tensor<float>;

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace demea
