#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "floodsparse/csr.hpp"
#include "floodsparse/error.hpp"

namespace floodsparse {

namespace detail {
inline std::int64_t narrow_ops(__int128 v) {
  if (v > std::numeric_limits<std::int64_t>::max() || v < std::numeric_limits<std::int64_t>::min())
    throw ParameterError("operation count overflows 64 bits");
  return static_cast<std::int64_t>(v);
}
}  // namespace detail

/// Operations to produce one head's dense attention output: QK^T, softmax
/// and the product with V, i.e. 2L^2(2D+1) - L(D+1).
inline std::int64_t dense_attention_ops(std::uint64_t seq_len, std::uint64_t dim) {
  if (seq_len == 0 || dim == 0) throw ParameterError("dense_attention_ops: L and D must be >= 1");
  const __int128 l = seq_len, d = dim;
  return detail::narrow_ops(2 * l * l * (2 * d + 1) - l * (d + 1));
}

/// Same count when only C scores are computed: 2C(2D+1) - L(D+1). May be
/// negative for near-empty patterns; make_op_report clamps.
inline std::int64_t sparse_attention_ops(std::uint64_t seq_len, std::uint64_t dim, std::uint64_t nnz) {
  if (seq_len == 0 || dim == 0) throw ParameterError("sparse_attention_ops: L and D must be >= 1");
  const __int128 l = seq_len, d = dim, c = nnz;
  if (c > l * l) throw ParameterError("sparse_attention_ops: C exceeds L^2");
  return detail::narrow_ops(2 * c * (2 * d + 1) - l * (d + 1));
}

/// Raw score products alone: count * (2D - 1).
inline std::int64_t raw_score_ops(std::uint64_t count, std::uint64_t dim) {
  if (dim == 0) throw ParameterError("raw_score_ops: D must be >= 1");
  return detail::narrow_ops(__int128(count) * (2 * __int128(dim) - 1));
}

struct OpReport {
  std::uint64_t seq_len = 0;
  std::uint64_t dim = 0;
  std::uint64_t nnz = 0;
  std::int64_t dense_ops = 0;
  std::int64_t sparse_ops = 0;
  double reduction_ratio = 0;
  double density = 0;
  std::vector<std::string> warnings;
};

inline OpReport make_op_report(std::uint64_t seq_len, std::uint64_t dim, std::uint64_t nnz) {
  OpReport r;
  r.seq_len = seq_len;
  r.dim = dim;
  r.nnz = nnz;
  r.dense_ops = dense_attention_ops(seq_len, dim);
  r.sparse_ops = sparse_attention_ops(seq_len, dim, nnz);
  if (r.sparse_ops < 0) {
    r.warnings.push_back("sparse op count " + std::to_string(r.sparse_ops) +
                         " is negative for this near-empty pattern; clamped to 0");
    r.sparse_ops = 0;
  }
  r.reduction_ratio = r.sparse_ops > 0 ? double(r.dense_ops) / double(r.sparse_ops)
                                       : std::numeric_limits<double>::infinity();
  r.density = double(nnz) / (double(seq_len) * double(seq_len));
  return r;
}

/// 4328255488 -> "4,328,255,488".
inline std::string group_thousands(std::int64_t v) {
  std::string digits = std::to_string(v < 0 ? -v : v);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return v < 0 ? "-" + out : out;
}

inline void print_op_report(std::ostream& os, const OpReport& r) {
  char ratio[64], density[64];
  std::snprintf(ratio, sizeof ratio, "%.4f", r.reduction_ratio);
  std::snprintf(density, sizeof density, "%.6f", r.density);
  os << "L = " << r.seq_len << ", D = " << r.dim << ", C = " << group_thousands(std::int64_t(r.nnz)) << '\n'
     << "dense_ops  = " << group_thousands(r.dense_ops) << '\n'
     << "sparse_ops = " << group_thousands(r.sparse_ops) << '\n'
     << "reduction  = " << ratio << "x\n"
     << "density    = " << density << '\n';
  for (const auto& w : r.warnings) os << "warning: " << w << '\n';
}

inline void write_op_report_csv_header(std::ostream& os) {
  os << "layer,L,D,C,dense_ops,sparse_ops,reduction_ratio,density\n";
}

inline void write_op_report_csv_row(std::ostream& os, const std::string& layer, const OpReport& r) {
  char ratio[64], density[64];
  std::snprintf(ratio, sizeof ratio, "%.6f", r.reduction_ratio);
  std::snprintf(density, sizeof density, "%.6f", r.density);
  os << layer << ',' << r.seq_len << ',' << r.dim << ',' << r.nnz << ',' << r.dense_ops << ',' << r.sparse_ops
     << ',' << ratio << ',' << density << '\n';
}

struct DensityStats {
  std::size_t nnz = 0;
  double density = 0;
  std::size_t nonzero_blocks = 0;  // B x B blocks with any stored entry; 0 when no block size given
  std::size_t empty_rows = 0;
};

template <class T>
DensityStats density_stats(const CsrMatrix<T>& p, std::size_t block_size = 0) {
  DensityStats s;
  s.nnz = p.nnz();
  const double cells = double(p.rows) * double(p.cols);
  s.density = cells > 0 ? double(s.nnz) / cells : 0.0;
  for (std::size_t r = 0; r < p.rows; ++r)
    if (p.row_count(r) == 0) ++s.empty_rows;
  if (block_size > 0 && p.rows % block_size == 0 && p.cols % block_size == 0) {
    const std::size_t bc = p.cols / block_size;
    std::vector<std::uint8_t> seen((p.rows / block_size) * bc, 0);
    for (std::size_t r = 0; r < p.rows; ++r)
      for (std::size_t k = p.row_ptr[r]; k < p.row_ptr[r + 1]; ++k)
        seen[(r / block_size) * bc + p.col_idx[k] / block_size] = 1;
    for (auto b : seen) s.nonzero_blocks += b;
  }
  return s;
}

}  // namespace floodsparse
