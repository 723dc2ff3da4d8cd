#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace deepstruct {

// Dense f64 tensor, row-major. Shapes are small (at most rank 2 in practice)
// so everything lives in flat std::vectors.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(numel(shape), 0.0);
  }

  static std::size_t numel(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
  }

  std::size_t size() const { return v.size(); }
  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }

  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() > 1 ? shape[1] : 1; }

  double& at(int i, int j) { return v[static_cast<std::size_t>(i) * cols() + j]; }
  double at(int i, int j) const { return v[static_cast<std::size_t>(i) * cols() + j]; }

  void zero() { std::fill(v.begin(), v.end(), 0.0); }
};

}  // namespace deepstruct
