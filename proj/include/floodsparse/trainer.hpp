#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "floodsparse/adam.hpp"
#include "floodsparse/analyzer.hpp"
#include "floodsparse/csr.hpp"
#include "floodsparse/dataset.hpp"
#include "floodsparse/error.hpp"
#include "floodsparse/model.hpp"
#include "floodsparse/pattern.hpp"
#include "floodsparse/rng.hpp"

namespace floodsparse {

template <class T>
double frobenius_norm(const Matrix<T>& a) {
  double s = 0;
  for (T v : a.values()) s += double(v) * double(v);
  return std::sqrt(s);
}

/// |‖A_prev‖_F - ‖A_cur‖_F|: the absolute difference of Frobenius norms.
template <class T>
double frobenius_distance(const Matrix<T>& prev, const Matrix<T>& cur) {
  if (!prev.same_shape(cur))
    throw ShapeError("frobenius_distance: " + shape_str(prev) + " vs " + shape_str(cur));
  return std::abs(frobenius_norm(prev) - frobenius_norm(cur));
}

/// Per-layer distance sequences; distances[n][k] belongs to epoch k + 1.
using DistanceHistory = std::vector<std::vector<double>>;

/// Transition test after dense epoch `epoch` (0-based). Not evaluated before
/// epoch 2; afterwards true iff the layer mean of |d_{i-1} - d_i| < tol.
inline bool transition_check(const DistanceHistory& history, std::size_t epoch, double tolerance) {
  if (epoch < 2) return false;
  if (history.empty()) throw StateError("transition_check: no layers in distance history");
  double sum = 0;
  for (const auto& d : history) {
    if (d.size() < epoch) throw StateError("transition_check: distance history shorter than epoch " + std::to_string(epoch));
    sum += std::abs(d[epoch - 2] - d[epoch - 1]);
  }
  return sum / double(history.size()) < tolerance;
}

struct TrainerConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  AdamConfig adam{};
  double transition_tolerance = 0.05;
  std::size_t min_dense_epochs = 3;
  PatternConfig pattern{};
  std::uint64_t seed = 0;

  void validate(const ModelConfig& model) const {
    if (batch_size == 0) throw ParameterError("trainer: batch size must be >= 1");
    if (!(transition_tolerance >= 0.0)) throw ParameterError("trainer: transition tolerance must be >= 0");
    if (min_dense_epochs < 2) throw ParameterError("trainer: min_dense_epochs must be >= 2");
    if (adam.learning_rate < 0) throw ParameterError("trainer: learning rate must be >= 0");
    pattern.validate(model.seq_len);
  }
};

struct EpochMetrics {
  std::size_t epoch = 0;
  AttentionMode phase = AttentionMode::Dense;
  double loss = 0;
  double accuracy = 0;
  double eval_accuracy = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> distances;  // per layer; empty when undefined
  std::vector<double> densities;  // per layer; 1.0 in the dense phase
  std::uint64_t attention_multiplies = 0;  // per sample, summed over layers
};

enum class Phase { Dense, Sparse };

struct TrainState {
  Phase phase = Phase::Dense;
  std::size_t epoch = 0;
  std::vector<std::vector<double>> norms;  // per layer, per dense epoch
  DistanceHistory distances;
  std::vector<CsrMatrix<float>> patterns;
  std::vector<PatternTrace<float>> traces;
  std::vector<LayerSnapshot> snapshots;  // from the latest dense epoch
  std::optional<std::size_t> transition_epoch;  // dense epoch at which the check fired
  std::vector<EpochMetrics> log;

  AttentionMode mode() const { return phase == Phase::Dense ? AttentionMode::Dense : AttentionMode::Sparse; }
};

struct Model {
  ModelConfig config;
  EncoderParams<float> params;
};

inline Model make_model(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  return {cfg, init_params<float>(cfg, rng)};
}

namespace detail {
inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return a * 0x100000001B3ULL ^ (b + 0x9E3779B97F4A7C15ULL); }
}  // namespace detail

/// One pass over seeded-shuffled batches with an Adam step per batch. Dense
/// epochs also rebuild the per-layer attention snapshots.
inline EpochMetrics train_epoch(TrainState& state, Model& model, Adam<float>& opt, const Dataset& data,
                                const TrainerConfig& cfg) {
  if (data.empty()) throw DataError("train_epoch: empty dataset");
  const ModelConfig& mc = model.config;
  const AttentionMode mode = state.mode();
  const std::uint64_t epoch_salt = detail::mix(cfg.seed, state.epoch);
  Rng shuffle_rng = Rng(cfg.seed).fork(epoch_salt);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

  SnapshotAccumulator snaps(mc.layers, mc.seq_len);
  EpochMetrics m;
  m.epoch = state.epoch;
  m.phase = mode;
  double loss_sum = 0;
  std::size_t correct = 0;
  std::vector<OpCounter> counters;
  std::uint64_t multiplies = 0;

  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    EncoderParams<float> grads = model.params.zeros_like();
    for (std::size_t pos = start; pos < end; ++pos) {
      const std::size_t idx = order[pos];
      Rng drop_rng = Rng(cfg.seed).fork(detail::mix(epoch_salt, pos + 1));
      ForwardOptions opts{true, &drop_rng, nullptr, &counters, true};
      auto st = classify_forward<float>(data.sequences[idx], model.params, mc, mode, state.patterns, opts,
                                        mode == AttentionMode::Dense);
      for (const auto& c : counters) multiplies += c.multiplies;
      const auto lr = cross_entropy<float>(st.logits, data.labels[idx]);
      loss_sum += lr.loss;
      correct += lr.predicted == data.labels[idx];
      classify_backward<float>(st, lr.dlogits, model.params, mc, grads);
      if (mode == AttentionMode::Dense) snaps.add_sample(st.head_mean_attention);
    }
    const float inv = 1.0f / float(end - start);
    grads.for_each([&](const std::string&, MatrixF& g) {
      for (float& v : g.values()) v *= inv;
    });
    opt.step(model.params, grads);
    snaps.end_batch();
  }
  m.loss = loss_sum / double(data.size());
  m.accuracy = double(correct) / double(data.size());
  m.attention_multiplies = multiplies / data.size();
  if (mode == AttentionMode::Dense) state.snapshots = snaps.snapshots();
  return m;
}

/// Accuracy without dropout in the current phase.
inline double evaluate(const Model& model, const Dataset& data, AttentionMode mode,
                       std::span<const CsrMatrix<float>> patterns) {
  if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t correct = 0;
  ForwardOptions opts{false, nullptr, nullptr, nullptr, false};
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto st = classify_forward<float>(data.sequences[i], model.params, model.config, mode, patterns, opts);
    std::size_t best = 0;
    for (std::size_t c = 1; c < st.logits.size(); ++c)
      if (st.logits[c] > st.logits[best]) best = c;
    correct += best == data.labels[i];
  }
  return double(correct) / double(data.size());
}

/// Dense epochs until the transition check fires (never before
/// min_dense_epochs), pattern generation from that epoch's snapshots, then
/// sparse epochs through config.epochs.
inline TrainState run_training(const TrainerConfig& cfg, Model& model, const Dataset& train,
                               const Dataset* eval = nullptr) {
  model.config.validate();
  cfg.validate(model.config);
  if (train.empty() && cfg.epochs > 0) throw DataError("run_training: empty dataset");
  const std::size_t layers = model.config.layers;
  TrainState state;
  state.norms.assign(layers, {});
  state.distances.assign(layers, {});
  Adam<float> opt(model.params, cfg.adam);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    state.epoch = epoch;
    EpochMetrics m = train_epoch(state, model, opt, train, cfg);
    if (state.phase == Phase::Dense) {
      for (std::size_t n = 0; n < layers; ++n) {
        state.norms[n].push_back(frobenius_norm(state.snapshots[n].a_s_mean));
        if (epoch >= 1) {
          const auto& nn = state.norms[n];
          state.distances[n].push_back(std::abs(nn[nn.size() - 2] - nn.back()));
          m.distances.push_back(state.distances[n].back());
        }
      }
      m.densities.assign(layers, 1.0);
      if (epoch + 1 >= cfg.min_dense_epochs && transition_check(state.distances, epoch, cfg.transition_tolerance)) {
        state.transition_epoch = epoch;
        state.phase = Phase::Sparse;
        for (std::size_t n = 0; n < layers; ++n) {
          auto tr = generate_pattern_traced(state.snapshots[n].a_s_mean, cfg.pattern);
          state.patterns.push_back(tr.pattern);
          state.traces.push_back(std::move(tr));
        }
      }
    } else {
      for (const auto& p : state.patterns) m.densities.push_back(density_stats(p).density);
    }
    if (eval) m.eval_accuracy = evaluate(model, *eval, state.mode(), state.patterns);
    state.log.push_back(std::move(m));
  }
  return state;
}

inline void write_metrics_csv(std::ostream& os, const std::vector<EpochMetrics>& log, std::size_t layers) {
  os << "epoch,phase,loss,accuracy,eval_accuracy,attention_multiplies";
  for (std::size_t n = 0; n < layers; ++n) os << ",distance_l" << n;
  for (std::size_t n = 0; n < layers; ++n) os << ",density_l" << n;
  os << '\n';
  auto num = [](double v) {
    if (std::isnan(v)) return std::string();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  for (const auto& m : log) {
    os << m.epoch << ',' << to_string(m.phase) << ',' << num(m.loss) << ',' << num(m.accuracy) << ','
       << num(m.eval_accuracy) << ',' << m.attention_multiplies;
    for (std::size_t n = 0; n < layers; ++n) os << ',' << (n < m.distances.size() ? num(m.distances[n]) : "");
    for (std::size_t n = 0; n < layers; ++n) os << ',' << (n < m.densities.size() ? num(m.densities[n]) : "");
    os << '\n';
  }
}

}  // namespace floodsparse
