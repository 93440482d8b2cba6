#pragma once

#include <algorithm>
#include <vector>

#include "floodsparse/matrix.hpp"
#include "floodsparse/pattern.hpp"

namespace flood_oracle {

using floodsparse::BlockMask;
using floodsparse::FloodFiller;
using floodsparse::MatrixD;

// Direct transcription of the recursive fill: visit below, right, diagonal;
// enter every unmarked neighbor equal to the max of the three; mark it when
// its value exceeds t; recurse regardless.
inline void recursive_fill(const MatrixD& pool, std::size_t r, std::size_t c, std::vector<std::vector<int>>& fl, double t) {
  const std::size_t n = pool.rows();
  if (r + 1 == n || c + 1 == n) return;
  const double m = std::max({pool(r + 1, c), pool(r, c + 1), pool(r + 1, c + 1)});
  if (pool(r + 1, c) == m && fl[r + 1][c] == 0) {
    if (pool(r + 1, c) > t) fl[r + 1][c] = 1;
    recursive_fill(pool, r + 1, c, fl, t);
  }
  if (pool(r, c + 1) == m && fl[r][c + 1] == 0) {
    if (pool(r, c + 1) > t) fl[r][c + 1] = 1;
    recursive_fill(pool, r, c + 1, fl, t);
  }
  if (pool(r + 1, c + 1) == m && fl[r + 1][c + 1] == 0) {
    if (pool(r + 1, c + 1) > t) fl[r + 1][c + 1] = 1;
    recursive_fill(pool, r + 1, c + 1, fl, t);
  }
}

inline std::vector<std::vector<int>> recursive_seeded(const MatrixD& pool, double t) {
  const std::size_t n = pool.rows();
  std::vector<std::vector<int>> fl(n, std::vector<int>(n, 0));
  for (std::size_t i = 0; i < n; ++i) recursive_fill(pool, 0, i, fl, t);
  for (std::size_t j = 1; j < n; ++j) recursive_fill(pool, j, 0, fl, t);
  return fl;
}

inline BlockMask iterative_seeded(const MatrixD& pool, double t) {
  const std::size_t n = pool.rows();
  BlockMask marks(n);
  FloodFiller<double> filler(pool, t, marks);
  for (std::size_t i = 0; i < n; ++i) filler.fill_from(0, i);
  for (std::size_t j = 1; j < n; ++j) filler.fill_from(j, 0);
  return marks;
}

inline bool same_marks(const BlockMask& a, const std::vector<std::vector<int>>& b) {
  for (std::size_t r = 0; r < a.side(); ++r)
    for (std::size_t c = 0; c < a.side(); ++c)
      if (a(r, c) != (b[r][c] == 1)) return false;
  return true;
}

// Enumerates every grid over `values`, calling f(pool) for each.
template <class F>
void for_each_grid(std::size_t n, const std::vector<double>& values, F&& f) {
  const std::size_t cells = n * n;
  std::vector<std::size_t> digits(cells, 0);
  MatrixD pool(n, n);
  while (true) {
    for (std::size_t i = 0; i < cells; ++i) pool.values()[i] = values[digits[i]];
    f(pool);
    std::size_t k = 0;
    while (k < cells && ++digits[k] == values.size()) digits[k++] = 0;
    if (k == cells) return;
  }
}

}  // namespace flood_oracle
