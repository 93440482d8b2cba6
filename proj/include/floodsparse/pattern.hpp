#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "floodsparse/csr.hpp"
#include "floodsparse/error.hpp"
#include "floodsparse/matrix.hpp"
#include "floodsparse/tensor_ops.hpp"

namespace floodsparse {

/// Square binary matrix over blocks of the attention matrix.
class BlockMask {
 public:
  BlockMask() = default;
  explicit BlockMask(std::size_t side) : side_(side), bits_(side * side, 0) {}

  std::size_t side() const { return side_; }
  bool operator()(std::size_t r, std::size_t c) const { return bits_[r * side_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v = true) { bits_[r * side_ + c] = v ? 1 : 0; }

  std::size_t count() const { return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1)); }

  MatrixF to_matrix() const {
    MatrixF m(side_, side_);
    for (std::size_t i = 0; i < bits_.size(); ++i) m.values()[i] = bits_[i];
    return m;
  }

  friend bool operator==(const BlockMask&, const BlockMask&) = default;

 private:
  std::size_t side_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Hyperparameters of pattern generation. Defaults: 31x31 filter, 32-wide
/// blocks, 96th-percentile threshold.
struct PatternConfig {
  std::size_t filter_size = 31;
  std::size_t block_size = 32;
  double quantile_alpha = 96.0;

  void validate(std::size_t seq_len) const {
    if (filter_size == 0 || filter_size % 2 == 0)
      throw ParameterError("filter size must be odd and >= 1, got " + std::to_string(filter_size));
    if (filter_size > seq_len)
      throw ParameterError("filter size " + std::to_string(filter_size) + " exceeds L " + std::to_string(seq_len));
    if (block_size == 0 || seq_len % block_size != 0)
      throw ShapeError("block size " + std::to_string(block_size) + " does not divide L " + std::to_string(seq_len));
    if (!(quantile_alpha > 0.0 && quantile_alpha < 100.0))
      throw ParameterError("quantile alpha must be in (0, 100)");
  }
};

/// Convolution with an F x F filter of ones on its main diagonal, centered
/// on (i, j), zero padding outside the matrix. Output has the input's shape.
template <class T>
Matrix<T> diagonal_conv(const Matrix<T>& a, std::size_t filter_size) {
  if (filter_size == 0 || filter_size % 2 == 0)
    throw ParameterError("diagonal_conv: filter size must be odd, got " + std::to_string(filter_size));
  if (filter_size > std::min(a.rows(), a.cols()))
    throw ParameterError("diagonal_conv: filter larger than input");
  const auto half = static_cast<std::ptrdiff_t>(filter_size / 2);
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
  const auto cols = static_cast<std::ptrdiff_t>(a.cols());
  Matrix<T> out(a.rows(), a.cols());
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    for (std::ptrdiff_t j = 0; j < cols; ++j) {
      // Valid offsets keep both i+f and j+f in range.
      const std::ptrdiff_t lo = std::max({-half, -i, -j});
      const std::ptrdiff_t hi = std::min({half, rows - 1 - i, cols - 1 - j});
      Accum s = 0;
      for (std::ptrdiff_t f = lo; f <= hi; ++f) s += a(i + f, j + f);
      out(i, j) = static_cast<T>(s);
    }
  }
  return out;
}

/// Non-overlapping B x B mean pooling.
template <class T>
Matrix<T> avg_pool(const Matrix<T>& x, std::size_t block) {
  if (block == 0 || x.rows() % block != 0 || x.cols() % block != 0)
    throw ShapeError("avg_pool: block " + std::to_string(block) + " does not divide " + shape_str(x));
  Matrix<T> out(x.rows() / block, x.cols() / block);
  const Accum inv = 1.0 / Accum(block * block);
  for (std::size_t bi = 0; bi < out.rows(); ++bi) {
    for (std::size_t bj = 0; bj < out.cols(); ++bj) {
      Accum s = 0;
      for (std::size_t p = 0; p < block; ++p)
        for (std::size_t q = 0; q < block; ++q) s += x(bi * block + p, bj * block + q);
      out(bi, bj) = static_cast<T>(s * inv);
    }
  }
  return out;
}

/// Nearest-rank percentile: sorted ascending, element ceil(alpha/100 * n) - 1.
template <class T>
T quantile_threshold(const Matrix<T>& x, double alpha) {
  if (x.empty()) throw ShapeError("quantile_threshold: empty input");
  if (!(alpha > 0.0 && alpha < 100.0)) throw ParameterError("quantile_threshold: alpha must be in (0, 100)");
  std::vector<T> v(x.values().begin(), x.values().end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  auto rank = static_cast<std::ptrdiff_t>(std::ceil(alpha * n / 100.0)) - 1;
  rank = std::clamp<std::ptrdiff_t>(rank, 0, static_cast<std::ptrdiff_t>(v.size()) - 1);
  return v[static_cast<std::size_t>(rank)];
}

/// Flood fill over a pooled block matrix. From cell (r, c) the walk looks at
/// the cells below, right and diagonally below; every one of them holding the
/// maximum of the three is entered, and marked when its value exceeds t.
/// Sub-threshold cells are walked through but never marked. The walk stops at
/// the last row or column.
///
/// Marks depend only on which cells are reachable from the seeds, so each
/// cell is expanded at most once per filler. That keeps the walk O(n^2)
/// where the plain recursive form is exponential on tied sub-threshold
/// plateaus, and yields the same marks.
template <class T>
class FloodFiller {
 public:
  FloodFiller(const Matrix<T>& pool, T threshold, BlockMask& marks)
      : pool_(pool), t_(threshold), marks_(marks), expanded_(pool.size(), 0) {
    if (pool.rows() != pool.cols()) throw ShapeError("flood_fill: pool_out must be square");
    if (marks.side() != pool.rows()) throw ShapeError("flood_fill: mask side != pool side");
  }

  void fill_from(std::size_t r, std::size_t c) {
    const std::size_t n = pool_.rows();
    if (r >= n || c >= n)
      throw IndexError("flood_fill: seed (" + std::to_string(r) + "," + std::to_string(c) + ") outside " +
                       std::to_string(n) + "x" + std::to_string(n));
    stack_.clear();
    stack_.emplace_back(r, c);
    while (!stack_.empty()) {
      auto [cr, cc] = stack_.back();
      stack_.pop_back();
      if (cr + 1 == n || cc + 1 == n) continue;
      auto& done = expanded_[cr * n + cc];
      if (done) continue;
      done = 1;
      const std::pair<std::size_t, std::size_t> nb[3] = {{cr + 1, cc}, {cr, cc + 1}, {cr + 1, cc + 1}};
      const T m = std::max({pool_(cr + 1, cc), pool_(cr, cc + 1), pool_(cr + 1, cc + 1)});
      // Pushed in reverse so the pop order is below, right, diagonal.
      for (int k = 2; k >= 0; --k) {
        const auto [nr, nc] = nb[k];
        if (pool_(nr, nc) != m || marks_(nr, nc)) continue;
        if (pool_(nr, nc) > t_) marks_.set(nr, nc);
        stack_.emplace_back(nr, nc);
      }
    }
  }

 private:
  const Matrix<T>& pool_;
  T t_;
  BlockMask& marks_;
  std::vector<std::uint8_t> expanded_;
  std::vector<std::pair<std::size_t, std::size_t>> stack_;
};

/// Single-seed flood fill updating fl_out in place.
template <class T>
void flood_fill(const Matrix<T>& pool, std::size_t r, std::size_t c, BlockMask& fl_out, T threshold) {
  FloodFiller<T> filler(pool, threshold, fl_out);
  filler.fill_from(r, c);
}

/// P[i][j] = mask[i / B][j / B].
inline MatrixF upsample_nearest(const BlockMask& mask, std::size_t block) {
  const std::size_t n = mask.side() * block;
  MatrixF out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = mask(i / block, j / block) ? 1.0f : 0.0f;
  return out;
}

/// Every intermediate of one pattern generation, kept for heatmaps.
template <class T>
struct PatternTrace {
  Matrix<T> conv_out;
  Matrix<T> pool_out;
  T threshold{};
  BlockMask flood_marks;  // before the diagonal is forced
  BlockMask block_mask;   // after
  CsrMatrix<T> pattern;
};

/// Full pipeline: conv -> pool -> percentile threshold -> flood fill seeded
/// along row 0 then column 0 -> forced diagonal -> upsample -> CSR.
template <class T>
PatternTrace<T> generate_pattern_traced(const Matrix<T>& attention, const PatternConfig& cfg) {
  if (attention.rows() != attention.cols())
    throw ShapeError("generate_pattern: attention matrix must be square, got " + shape_str(attention));
  cfg.validate(attention.rows());
  PatternTrace<T> tr;
  tr.conv_out = diagonal_conv(attention, cfg.filter_size);
  tr.pool_out = avg_pool(tr.conv_out, cfg.block_size);
  tr.threshold = quantile_threshold(tr.pool_out, cfg.quantile_alpha);
  const std::size_t n = tr.pool_out.rows();
  tr.flood_marks = BlockMask(n);
  {
    FloodFiller<T> filler(tr.pool_out, tr.threshold, tr.flood_marks);
    for (std::size_t i = 0; i < n; ++i) filler.fill_from(0, i);
    for (std::size_t j = 1; j < n; ++j) filler.fill_from(j, 0);
  }
  tr.block_mask = tr.flood_marks;
  for (std::size_t k = 0; k < n; ++k) tr.block_mask.set(k, k);
  tr.pattern = mask_to_csr(upsample_nearest(tr.block_mask, cfg.block_size).template cast<T>());
  return tr;
}

template <class T>
CsrMatrix<T> generate_pattern(const Matrix<T>& attention, const PatternConfig& cfg) {
  return generate_pattern_traced(attention, cfg).pattern;
}

}  // namespace floodsparse
