#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

#include "floodsparse/error.hpp"
#include "floodsparse/model.hpp"

namespace floodsparse {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments mirror the parameter tree.
template <class T>
class Adam {
 public:
  Adam(const EncoderParams<T>& params, AdamConfig cfg)
      : cfg_(cfg), m_(params.zeros_like()), v_(params.zeros_like()) {}

  void step(EncoderParams<T>& params, EncoderParams<T>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    auto p = params.tensors();
    auto g = grads.tensors();
    auto m = m_.tensors();
    auto v = v_.tensors();
    if (p.size() != g.size() || p.size() != m.size()) throw ShapeError("adam: parameter tree mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto pv = p[i]->values();
      auto gv = g[i]->values();
      auto mv = m[i]->values();
      auto vv = v[i]->values();
      if (pv.size() != gv.size()) throw ShapeError("adam: gradient shape mismatch");
      for (std::size_t j = 0; j < pv.size(); ++j) {
        const double gj = gv[j];
        mv[j] = static_cast<T>(cfg_.beta1 * double(mv[j]) + (1.0 - cfg_.beta1) * gj);
        vv[j] = static_cast<T>(cfg_.beta2 * double(vv[j]) + (1.0 - cfg_.beta2) * gj * gj);
        const double mhat = double(mv[j]) / c1;
        const double vhat = double(vv[j]) / c2;
        pv[j] = static_cast<T>(double(pv[j]) - cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  EncoderParams<T> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace floodsparse
