#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "floodsparse/csr.hpp"
#include "floodsparse/error.hpp"
#include "floodsparse/matrix.hpp"
#include "floodsparse/op_counter.hpp"
#include "floodsparse/tensor_ops.hpp"

namespace floodsparse {

/// Sampled dense-dense product: stored (i, j) of the pattern receive
/// dot(Q[i], K[j]); structure is copied from the pattern.
template <class T>
CsrMatrix<T> sddmm(const Matrix<T>& q, const Matrix<T>& k, const CsrMatrix<T>& pattern,
                   OpCounter* counter = nullptr) {
  if (q.rows() != pattern.rows || k.rows() != pattern.cols || q.cols() != k.cols())
    throw ShapeError("sddmm: Q " + shape_str(q) + ", K " + shape_str(k) + ", pattern " +
                     shape_str(pattern.rows, pattern.cols));
  const std::size_t d = q.cols();
  std::vector<T> vals(pattern.nnz());
  for (std::size_t i = 0; i < pattern.rows; ++i) {
    const T* qi = q.data() + i * d;
    for (std::size_t p = pattern.row_ptr[i]; p < pattern.row_ptr[i + 1]; ++p) {
      const T* kj = k.data() + pattern.col_idx[p] * d;
      Accum s = 0;
      for (std::size_t t = 0; t < d; ++t) s += Accum(qi[t]) * Accum(kj[t]);
      vals[p] = static_cast<T>(s);
    }
  }
  if (counter && d > 0) {
    counter->multiplies += pattern.nnz() * d;
    counter->adds += pattern.nnz() * (d - 1);
  }
  return pattern.with_values(std::move(vals));
}

/// Per-row normalizer of sparse_softmax_forward.
struct SparseSoftmaxRowStats {
  double max = 0;  // shift subtracted before exp
  double z = 0;    // stored exp sum plus the implicit-zero term
};

/// Row softmax over stored entries where each of the (L - b_cnt) unstored
/// positions of a row takes logit 0. Stored logits are scaled first. The
/// shift is max(stored) and, when the row has unstored positions, at least 0,
/// so the implicit-zero term exp(-max) cannot overflow. Empty rows pass
/// through.
template <class T>
CsrMatrix<T> sparse_softmax_forward(const CsrMatrix<T>& s_r, double scale, std::size_t seq_len,
                                    OpCounter* counter = nullptr,
                                    std::vector<SparseSoftmaxRowStats>* stats = nullptr) {
  if (s_r.cols != seq_len)
    throw ShapeError("sparse_softmax_forward: cols " + std::to_string(s_r.cols) + " != L " +
                     std::to_string(seq_len));
  CsrMatrix<T> out = s_r;
  if (stats) stats->assign(s_r.rows, {});
  std::vector<Accum> e;
  for (std::size_t i = 0; i < s_r.rows; ++i) {
    const std::size_t begin = s_r.row_ptr[i];
    const std::size_t count = s_r.row_count(i);
    if (count == 0) continue;
    Accum mx = -std::numeric_limits<Accum>::infinity();
    for (std::size_t p = begin; p < begin + count; ++p) mx = std::max(mx, scale * Accum(s_r.values[p]));
    const std::size_t implicit = seq_len - count;
    if (implicit > 0) mx = std::max(mx, Accum(0));
    e.resize(count);
    Accum sum = 0;
    for (std::size_t p = 0; p < count; ++p) {
      e[p] = std::exp(scale * Accum(s_r.values[begin + p]) - mx);
      sum += e[p];
    }
    sum += std::exp(-mx) * Accum(implicit);
    for (std::size_t p = 0; p < count; ++p) out.values[begin + p] = static_cast<T>(e[p] / sum);
    if (stats) (*stats)[i] = {mx, sum};
    if (counter) {
      counter->exps += count;
      counter->divides += count;
      counter->adds += count - 1;
    }
  }
  return out;
}

/// Gradient w.r.t. the unscaled stored logits. Unstored positions are
/// constants that only enter through the normalizer.
template <class T>
CsrMatrix<T> sparse_softmax_backward(const CsrMatrix<T>& s_s, const CsrMatrix<T>& d_out, double scale,
                                     std::size_t seq_len) {
  if (!s_s.same_structure(d_out)) throw StructureError("sparse_softmax_backward: structure mismatch");
  if (s_s.cols != seq_len) throw ShapeError("sparse_softmax_backward: cols != L");
  CsrMatrix<T> grad = s_s.zeros_like();
  for (std::size_t i = 0; i < s_s.rows; ++i) {
    Accum dot = 0;
    for (std::size_t p = s_s.row_ptr[i]; p < s_s.row_ptr[i + 1]; ++p)
      dot += Accum(d_out.values[p]) * Accum(s_s.values[p]);
    for (std::size_t p = s_s.row_ptr[i]; p < s_s.row_ptr[i + 1]; ++p)
      grad.values[p] = static_cast<T>(scale * Accum(s_s.values[p]) * (Accum(d_out.values[p]) - dot));
  }
  return grad;
}

/// Out[i] = sum over stored (i, j) of S(i, j) * V[j], ascending j.
template <class T>
Matrix<T> spmm(const CsrMatrix<T>& s, const Matrix<T>& v, OpCounter* counter = nullptr) {
  if (s.cols != v.rows())
    throw ShapeError("spmm: S " + shape_str(s.rows, s.cols) + " x V " + shape_str(v));
  const std::size_t d = v.cols();
  Matrix<T> out(s.rows, d);
  std::vector<Accum> acc(d);
  for (std::size_t i = 0; i < s.rows; ++i) {
    std::fill(acc.begin(), acc.end(), Accum(0));
    for (std::size_t p = s.row_ptr[i]; p < s.row_ptr[i + 1]; ++p) {
      const Accum w = s.values[p];
      const T* vj = v.data() + s.col_idx[p] * d;
      for (std::size_t t = 0; t < d; ++t) acc[t] += w * Accum(vj[t]);
    }
    for (std::size_t t = 0; t < d; ++t) out(i, t) = static_cast<T>(acc[t]);
    if (counter && s.row_count(i) > 0) {
      counter->multiplies += s.row_count(i) * d;
      counter->adds += (s.row_count(i) - 1) * d;
    }
  }
  return out;
}

template <class T>
struct SddmmGrads {
  Matrix<T> dq;
  Matrix<T> dk;
};

template <class T>
SddmmGrads<T> sddmm_backward(const CsrMatrix<T>& d_s, const Matrix<T>& q, const Matrix<T>& k) {
  if (q.rows() != d_s.rows || k.rows() != d_s.cols || q.cols() != k.cols())
    throw ShapeError("sddmm_backward: shape mismatch");
  const std::size_t d = q.cols();
  Matrix<T> dq(q.rows(), d);
  Matrix<Accum> dk_acc(k.rows(), d);
  std::vector<Accum> acc(d);
  for (std::size_t i = 0; i < d_s.rows; ++i) {
    std::fill(acc.begin(), acc.end(), Accum(0));
    const T* qi = q.data() + i * d;
    for (std::size_t p = d_s.row_ptr[i]; p < d_s.row_ptr[i + 1]; ++p) {
      const std::size_t j = d_s.col_idx[p];
      const Accum g = d_s.values[p];
      const T* kj = k.data() + j * d;
      for (std::size_t t = 0; t < d; ++t) {
        acc[t] += g * Accum(kj[t]);
        dk_acc(j, t) += g * Accum(qi[t]);
      }
    }
    for (std::size_t t = 0; t < d; ++t) dq(i, t) = static_cast<T>(acc[t]);
  }
  return {std::move(dq), dk_acc.template cast<T>()};
}

template <class T>
struct SpmmGrads {
  CsrMatrix<T> ds;
  Matrix<T> dv;
};

template <class T>
SpmmGrads<T> spmm_backward(const Matrix<T>& d_out, const CsrMatrix<T>& s, const Matrix<T>& v) {
  if (d_out.rows() != s.rows || s.cols != v.rows() || d_out.cols() != v.cols())
    throw ShapeError("spmm_backward: shape mismatch");
  const std::size_t d = v.cols();
  std::vector<T> ds(s.nnz());
  Matrix<Accum> dv_acc(v.rows(), d);
  for (std::size_t i = 0; i < s.rows; ++i) {
    const T* gi = d_out.data() + i * d;
    for (std::size_t p = s.row_ptr[i]; p < s.row_ptr[i + 1]; ++p) {
      const std::size_t j = s.col_idx[p];
      const T* vj = v.data() + j * d;
      const Accum w = s.values[p];
      Accum dot = 0;
      for (std::size_t t = 0; t < d; ++t) {
        dot += Accum(gi[t]) * Accum(vj[t]);
        dv_acc(j, t) += w * Accum(gi[t]);
      }
      ds[p] = static_cast<T>(dot);
    }
  }
  return {s.with_values(std::move(ds)), dv_acc.template cast<T>()};
}

}  // namespace floodsparse
