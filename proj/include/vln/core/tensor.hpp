#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

#include "vln/core/common.hpp"

namespace vln {

// Dense row-major 2D tensor. Vectors are 1xN.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<real> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor full(int r, int c, real x) {
    Tensor t(r, c);
    for (auto& e : t.v) e = x;
    return t;
  }
  static Tensor row(const std::vector<real>& xs) {
    Tensor t(1, static_cast<int>(xs.size()));
    t.v = xs;
    return t;
  }

  real& at(int r, int c) {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return v[static_cast<size_t>(r) * cols + c];
  }
  real at(int r, int c) const {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return v[static_cast<size_t>(r) * cols + c];
  }
  const real* row_ptr(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
  real* row_ptr(int r) { return v.data() + static_cast<size_t>(r) * cols; }

  int size() const { return rows * cols; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  bool operator==(const Tensor& o) const {
    return rows == o.rows && cols == o.cols && v == o.v;
  }

  real max_abs_diff(const Tensor& o) const {
    assert(same_shape(o));
    real m = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
      real d = std::fabs(v[i] - o.v[i]);
      if (d > m) m = d;
    }
    return m;
  }
};

}  // namespace vln
