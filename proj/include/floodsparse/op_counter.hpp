#pragma once

#include <cstdint>

namespace floodsparse {

/// Arithmetic tally filled in by kernels that accept an optional counter.
/// Conventions: a k-term dot product is k multiplies and k-1 adds; softmax
/// is one exp and one divide per output plus (n-1) adds per row. Scaling
/// and max subtraction are folded into the exp argument and not counted.
struct OpCounter {
  std::uint64_t multiplies = 0;
  std::uint64_t adds = 0;
  std::uint64_t exps = 0;
  std::uint64_t divides = 0;

  std::uint64_t total() const { return multiplies + adds + exps + divides; }

  OpCounter& operator+=(const OpCounter& o) {
    multiplies += o.multiplies;
    adds += o.adds;
    exps += o.exps;
    divides += o.divides;
    return *this;
  }
};

}  // namespace floodsparse
