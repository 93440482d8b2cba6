#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "floodsparse/error.hpp"
#include "floodsparse/matrix.hpp"
#include "floodsparse/op_counter.hpp"
#include "floodsparse/rng.hpp"

namespace floodsparse {

// Accumulations run in double regardless of the storage type.
using Accum = double;

template <class T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

/// C = A * B, or A * B^T when transpose_b is set. Each entry accumulates
/// over k in ascending order.
template <class T>
Matrix<T> gemm(const Matrix<T>& a, const Matrix<T>& b, bool transpose_b = false,
               OpCounter* counter = nullptr) {
  const std::size_t inner = transpose_b ? b.cols() : b.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  if (a.cols() != inner)
    throw ShapeError("gemm: " + shape_str(a) + " x " + shape_str(b) +
                     (transpose_b ? "^T" : "") + " inner dimensions disagree");
  const std::size_t m = a.rows();
  Matrix<T> c(m, n);
  const Matrix<T> bt = transpose_b ? transpose(b) : Matrix<T>();
  const T* bdata = transpose_b ? bt.data() : b.data();
  std::vector<Accum> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), Accum(0));
    for (std::size_t k = 0; k < inner; ++k) {
      const Accum aik = a(i, k);
      const T* br = bdata + k * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += aik * Accum(br[j]);
    }
    for (std::size_t j = 0; j < n; ++j) c(i, j) = static_cast<T>(acc[j]);
  }
  if (counter && inner > 0) {
    counter->multiplies += m * n * inner;
    counter->adds += m * n * (inner - 1);
  }
  return c;
}

/// Per-row statistics kept for the layer-norm backward pass.
template <class T>
struct LayerNormCache {
  Matrix<T> normalized;  // (x - mean) * rstd, before gamma/beta
  std::vector<Accum> rstd;
};

/// Row-wise layer norm with population variance. eps = 0 is accepted; a
/// zero-variance row then normalizes to zeros.
template <class T>
Matrix<T> layer_norm(const Matrix<T>& x, std::span<const T> gamma, std::span<const T> beta,
                     double eps = 1e-5, LayerNormCache<T>* cache = nullptr) {
  if (x.cols() == 0) throw ShapeError("layer_norm: zero-length rows");
  if (gamma.size() != x.cols() || beta.size() != x.cols())
    throw ShapeError("layer_norm: gamma/beta length must equal " + std::to_string(x.cols()));
  if (eps < 0) throw ParameterError("layer_norm: eps must be non-negative");
  const std::size_t d = x.cols();
  Matrix<T> out(x.rows(), d);
  if (cache) {
    cache->normalized = Matrix<T>(x.rows(), d);
    cache->rstd.assign(x.rows(), 0);
  }
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    Accum mean = 0;
    for (T v : r) mean += v;
    mean /= Accum(d);
    Accum var = 0;
    for (T v : r) var += (Accum(v) - mean) * (Accum(v) - mean);
    var /= Accum(d);
    const Accum denom = std::sqrt(var + eps);
    const Accum rstd = denom > 0 ? 1.0 / denom : 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const Accum xhat = (Accum(r[j]) - mean) * rstd;
      out(i, j) = static_cast<T>(xhat * Accum(gamma[j]) + Accum(beta[j]));
      if (cache) cache->normalized(i, j) = static_cast<T>(xhat);
    }
    if (cache) cache->rstd[i] = rstd;
  }
  return out;
}

/// Returns dX; accumulates into dgamma / dbeta (length cols).
template <class T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const LayerNormCache<T>& cache,
                              std::span<const T> gamma, std::span<T> dgamma,
                              std::span<T> dbeta) {
  const std::size_t d = dy.cols();
  if (!dy.same_shape(cache.normalized)) throw ShapeError("layer_norm_backward: shape mismatch");
  Matrix<T> dx(dy.rows(), d);
  std::vector<Accum> dxhat(d);
  for (std::size_t i = 0; i < dy.rows(); ++i) {
    Accum mean_dxhat = 0, mean_dxhat_xhat = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const Accum g = dy(i, j);
      const Accum xhat = cache.normalized(i, j);
      dgamma[j] += static_cast<T>(g * xhat);
      dbeta[j] += static_cast<T>(g);
      dxhat[j] = g * Accum(gamma[j]);
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * xhat;
    }
    mean_dxhat /= Accum(d);
    mean_dxhat_xhat /= Accum(d);
    for (std::size_t j = 0; j < d; ++j)
      dx(i, j) = static_cast<T>(cache.rstd[i] *
                                (dxhat[j] - mean_dxhat - Accum(cache.normalized(i, j)) * mean_dxhat_xhat));
  }
  return dx;
}

/// Row softmax of scale * x with the row max subtracted.
template <class T>
Matrix<T> dense_softmax_rows(const Matrix<T>& x, double scale = 1.0, OpCounter* counter = nullptr) {
  if (x.empty()) throw ShapeError("dense_softmax_rows: empty input");
  Matrix<T> out(x.rows(), x.cols());
  std::vector<Accum> e(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    Accum mx = -std::numeric_limits<Accum>::infinity();
    for (T v : r) mx = std::max(mx, scale * Accum(v));
    Accum sum = 0;
    for (std::size_t j = 0; j < r.size(); ++j) {
      e[j] = std::exp(scale * Accum(r[j]) - mx);
      sum += e[j];
    }
    for (std::size_t j = 0; j < r.size(); ++j) out(i, j) = static_cast<T>(e[j] / sum);
  }
  if (counter) {
    counter->exps += x.size();
    counter->divides += x.size();
    counter->adds += x.rows() * (x.cols() - 1);
  }
  return out;
}

/// Gradient w.r.t. the unscaled input of dense_softmax_rows, given its output y.
template <class T>
Matrix<T> dense_softmax_rows_backward(const Matrix<T>& y, const Matrix<T>& dy, double scale = 1.0) {
  if (!y.same_shape(dy)) throw ShapeError("dense_softmax_rows_backward: shape mismatch");
  Matrix<T> dx(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    Accum dot = 0;
    for (std::size_t j = 0; j < y.cols(); ++j) dot += Accum(dy(i, j)) * Accum(y(i, j));
    for (std::size_t j = 0; j < y.cols(); ++j)
      dx(i, j) = static_cast<T>(scale * Accum(y(i, j)) * (Accum(dy(i, j)) - dot));
  }
  return dx;
}

/// Dropout output together with the applied multiplier (0 or 1/(1-rate)).
template <class T>
struct DropoutResult {
  Matrix<T> output;
  Matrix<T> multiplier;
};

template <class T>
DropoutResult<T> dropout_with_mask(const Matrix<T>& x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("dropout: rate must be in [0, 1)");
  DropoutResult<T> res{x, Matrix<T>(x.rows(), x.cols(), T(1))};
  if (!training || rate == 0.0) return res;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  auto out = res.output.values();
  auto mul = res.multiplier.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    mul[i] = rng.uniform() < rate ? T(0) : keep_scale;
    out[i] *= mul[i];
  }
  return res;
}

template <class T>
Matrix<T> dropout(const Matrix<T>& x, double rate, Rng& rng, bool training) {
  return dropout_with_mask(x, rate, rng, training).output;
}

template <class T>
Matrix<T> relu(Matrix<T> x) {
  for (T& v : x.values()) v = std::max(v, T(0));
  return x;
}

template <class T>
Matrix<T> add(Matrix<T> x, const Matrix<T>& y) {
  if (!x.same_shape(y)) throw ShapeError("add: " + shape_str(x) + " vs " + shape_str(y));
  auto xv = x.values();
  auto yv = y.values();
  for (std::size_t i = 0; i < xv.size(); ++i) xv[i] += yv[i];
  return x;
}

template <class T>
Matrix<T> scale(Matrix<T> x, double c) {
  for (T& v : x.values()) v = static_cast<T>(Accum(v) * c);
  return x;
}

template <class T>
Matrix<T> hadamard(Matrix<T> x, const Matrix<T>& y) {
  if (!x.same_shape(y)) throw ShapeError("hadamard: " + shape_str(x) + " vs " + shape_str(y));
  auto xv = x.values();
  auto yv = y.values();
  for (std::size_t i = 0; i < xv.size(); ++i) xv[i] *= yv[i];
  return x;
}

template <class T>
void add_inplace(Matrix<T>& x, const Matrix<T>& y) {
  if (!x.same_shape(y)) throw ShapeError("add_inplace: " + shape_str(x) + " vs " + shape_str(y));
  auto xv = x.values();
  auto yv = y.values();
  for (std::size_t i = 0; i < xv.size(); ++i) xv[i] += yv[i];
}

template <class T>
bool all_finite(const Matrix<T>& x) {
  for (T v : x.values())
    if (!std::isfinite(v)) return false;
  return true;
}

template <class T>
Matrix<T> truncated_normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Matrix<T> m(rows, cols);
  for (T& v : m.values()) v = static_cast<T>(rng.truncated_normal(stddev));
  return m;
}

/// Copy a contiguous column band [col0, col0 + width).
template <class T>
Matrix<T> column_slice(const Matrix<T>& x, std::size_t col0, std::size_t width) {
  if (col0 + width > x.cols()) throw ShapeError("column_slice out of range");
  Matrix<T> out(x.rows(), width);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < width; ++j) out(i, j) = x(i, col0 + j);
  return out;
}

template <class T>
void set_column_slice(Matrix<T>& dst, std::size_t col0, const Matrix<T>& src) {
  if (src.rows() != dst.rows() || col0 + src.cols() > dst.cols())
    throw ShapeError("set_column_slice out of range");
  for (std::size_t i = 0; i < src.rows(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j) dst(i, col0 + j) = src(i, j);
}

template <class T>
double max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(double(a.values()[i]) - double(b.values()[i])));
  return m;
}

}  // namespace floodsparse
