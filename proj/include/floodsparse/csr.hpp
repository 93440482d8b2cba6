#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "floodsparse/error.hpp"
#include "floodsparse/matrix.hpp"

namespace floodsparse {

/// Compressed sparse row matrix. A pattern and every kernel output built
/// from it share row_ptr/col_idx; only values differ.
template <class T>
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col_idx;
  std::vector<T> values;

  std::size_t nnz() const { return col_idx.size(); }
  std::size_t row_count(std::size_t r) const { return row_ptr[r + 1] - row_ptr[r]; }

  /// Same structure with new values.
  template <class U = T>
  CsrMatrix<U> with_values(std::vector<U> v) const {
    if (v.size() != nnz()) throw ShapeError("with_values: length != nnz");
    return CsrMatrix<U>{rows, cols, row_ptr, col_idx, std::move(v)};
  }

  template <class U = T>
  CsrMatrix<U> zeros_like() const {
    return with_values(std::vector<U>(nnz(), U(0)));
  }

  template <class U>
  bool same_structure(const CsrMatrix<U>& o) const {
    return rows == o.rows && cols == o.cols && row_ptr == o.row_ptr && col_idx == o.col_idx;
  }

  /// Throws DataError naming the first violated invariant.
  void validate() const {
    if (row_ptr.size() != rows + 1) throw DataError("csr: row_ptr length != rows + 1");
    if (row_ptr.front() != 0) throw DataError("csr: row_ptr[0] != 0");
    if (row_ptr.back() != col_idx.size()) throw DataError("csr: row_ptr[rows] != nnz");
    if (values.size() != col_idx.size()) throw DataError("csr: values length != nnz");
    for (std::size_t r = 0; r < rows; ++r) {
      if (row_ptr[r + 1] < row_ptr[r]) throw DataError("csr: row_ptr decreasing at row " + std::to_string(r));
      for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
        if (col_idx[k] >= cols) throw DataError("csr: column index out of range in row " + std::to_string(r));
        if (k > row_ptr[r] && col_idx[k] <= col_idx[k - 1])
          throw DataError("csr: columns not strictly increasing in row " + std::to_string(r));
      }
    }
    for (const T& v : values)
      if (!std::isfinite(static_cast<double>(v))) throw DataError("csr: non-finite value");
  }

  Matrix<T> to_dense() const {
    Matrix<T> out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) out(r, col_idx[k]) = values[k];
    return out;
  }

  friend bool operator==(const CsrMatrix& a, const CsrMatrix& b) = default;
};

/// CSR with value 1 at every nonzero of a binary mask.
template <class T>
CsrMatrix<T> mask_to_csr(const Matrix<T>& mask) {
  CsrMatrix<T> out;
  out.rows = mask.rows();
  out.cols = mask.cols();
  out.row_ptr.assign(1, 0);
  out.row_ptr.reserve(mask.rows() + 1);
  for (std::size_t r = 0; r < mask.rows(); ++r) {
    for (std::size_t c = 0; c < mask.cols(); ++c) {
      const T v = mask(r, c);
      if (v == T(1)) {
        out.col_idx.push_back(c);
        out.values.push_back(T(1));
      } else if (v != T(0)) {
        throw DataError("mask_to_csr: non-binary entry at (" + std::to_string(r) + "," +
                        std::to_string(c) + ")");
      }
    }
    out.row_ptr.push_back(out.col_idx.size());
  }
  return out;
}

/// All-ones L x L pattern.
template <class T>
CsrMatrix<T> full_pattern(std::size_t rows, std::size_t cols) {
  return mask_to_csr(Matrix<T>(rows, cols, T(1)));
}

}  // namespace floodsparse
