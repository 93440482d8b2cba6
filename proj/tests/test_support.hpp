#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "floodsparse/csr.hpp"
#include "floodsparse/matrix.hpp"
#include "floodsparse/rng.hpp"

namespace testing_support {

using floodsparse::CsrMatrix;
using floodsparse::Matrix;
using floodsparse::Rng;

template <class T = double>
Matrix<T> random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix<T> m(r, c);
  for (T& v : m.values()) v = static_cast<T>(lo + (hi - lo) * rng.uniform());
  return m;
}

/// Random binary mask with the given keep probability, as CSR.
template <class T = double>
CsrMatrix<T> random_pattern(std::size_t r, std::size_t c, double density, Rng& rng) {
  Matrix<T> mask(r, c);
  for (T& v : mask.values()) v = rng.uniform() < density ? T(1) : T(0);
  return floodsparse::mask_to_csr(mask);
}

/// ||a - b|| / max(||b||, floor), both flattened.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-8) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), floor);
}

template <class T>
std::vector<double> flat(const Matrix<T>& m) {
  return {m.values().begin(), m.values().end()};
}

template <class T>
std::vector<double> flat(const std::vector<T>& v) {
  return {v.begin(), v.end()};
}

/// Central differences of f with respect to every entry of x.
template <class T, class F>
std::vector<double> numeric_gradient(std::span<T> x, F&& f, double step = 1e-3) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T keep = x[i];
    x[i] = static_cast<T>(keep + step);
    const double up = f();
    x[i] = static_cast<T>(keep - step);
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2 * step);
  }
  return g;
}

}  // namespace testing_support
