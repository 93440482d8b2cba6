#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "floodsparse/csr.hpp"
#include "floodsparse/error.hpp"
#include "floodsparse/matrix.hpp"
#include "floodsparse/op_counter.hpp"
#include "floodsparse/rng.hpp"
#include "floodsparse/sparse_kernels.hpp"
#include "floodsparse/tensor_ops.hpp"

namespace floodsparse {

struct ModelConfig {
  std::size_t seq_len = 128;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t layers = 4;
  std::size_t vocab = 16;
  std::size_t classes = 2;
  double dropout_rate = 0.1;
  std::size_t ffn_dim = 128;
  double ln_eps = 1e-5;

  std::size_t head_dim() const { return d_model / heads; }

  void validate() const {
    if (seq_len == 0 || d_model == 0 || heads == 0 || layers == 0 || vocab == 0 || classes == 0 || ffn_dim == 0)
      throw ParameterError("model config: all sizes must be positive");
    if (d_model % heads != 0)
      throw ParameterError("model config: heads " + std::to_string(heads) + " must divide D " + std::to_string(d_model));
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ParameterError("model config: dropout must be in [0, 1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <class T>
struct EncoderLayerParams {
  Matrix<T> wq, wk, wv, wo;  // D x D
  Matrix<T> wf;              // D x ffn
  Matrix<T> we;              // ffn x D
  Matrix<T> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;  // 1 x D
};

template <class T>
struct EncoderParams {
  std::vector<EncoderLayerParams<T>> layers;
  Matrix<T> token_embedding;     // vocab x D
  Matrix<T> position_embedding;  // L x D
  Matrix<T> classifier;          // D x classes

  /// Calls f(name, tensor) for every parameter in a fixed order.
  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f(std::string("token_embedding"), self.token_embedding);
    f(std::string("position_embedding"), self.position_embedding);
    for (std::size_t n = 0; n < self.layers.size(); ++n) {
      auto& l = self.layers[n];
      const std::string p = "layer" + std::to_string(n) + ".";
      f(p + "wq", l.wq);
      f(p + "wk", l.wk);
      f(p + "wv", l.wv);
      f(p + "wo", l.wo);
      f(p + "wf", l.wf);
      f(p + "we", l.we);
      f(p + "ln1_gamma", l.ln1_gamma);
      f(p + "ln1_beta", l.ln1_beta);
      f(p + "ln2_gamma", l.ln2_gamma);
      f(p + "ln2_beta", l.ln2_beta);
    }
    f(std::string("classifier"), self.classifier);
  }
  template <class F> void for_each(F&& f) { visit(*this, std::forward<F>(f)); }
  template <class F> void for_each(F&& f) const { visit(*this, std::forward<F>(f)); }

  std::vector<Matrix<T>*> tensors() {
    std::vector<Matrix<T>*> out;
    for_each([&](const std::string&, Matrix<T>& m) { out.push_back(&m); });
    return out;
  }

  EncoderParams zeros_like() const {
    EncoderParams z = *this;
    z.for_each([](const std::string&, Matrix<T>& m) { m.fill(T(0)); });
    return z;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Matrix<T>& m) { n += m.size(); });
    return n;
  }
};

/// Weights truncated-normal(0.02), layer-norm gamma ones and beta zeros.
template <class T>
EncoderParams<T> init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  constexpr double kStd = 0.02;
  const std::size_t d = cfg.d_model;
  EncoderParams<T> p;
  p.token_embedding = truncated_normal<T>(cfg.vocab, d, kStd, rng);
  p.position_embedding = truncated_normal<T>(cfg.seq_len, d, kStd, rng);
  for (std::size_t n = 0; n < cfg.layers; ++n) {
    EncoderLayerParams<T> l;
    l.wq = truncated_normal<T>(d, d, kStd, rng);
    l.wk = truncated_normal<T>(d, d, kStd, rng);
    l.wv = truncated_normal<T>(d, d, kStd, rng);
    l.wo = truncated_normal<T>(d, d, kStd, rng);
    l.wf = truncated_normal<T>(d, cfg.ffn_dim, kStd, rng);
    l.we = truncated_normal<T>(cfg.ffn_dim, d, kStd, rng);
    l.ln1_gamma = Matrix<T>(1, d, T(1));
    l.ln1_beta = Matrix<T>(1, d, T(0));
    l.ln2_gamma = Matrix<T>(1, d, T(1));
    l.ln2_beta = Matrix<T>(1, d, T(0));
    p.layers.push_back(std::move(l));
  }
  p.classifier = truncated_normal<T>(d, cfg.classes, kStd, rng);
  return p;
}

enum class AttentionMode { Dense, Sparse };

inline const char* to_string(AttentionMode m) { return m == AttentionMode::Dense ? "dense" : "sparse"; }

struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;             // required when training with dropout
  OpCounter* counter = nullptr;   // attention-core arithmetic only
  std::vector<OpCounter>* layer_counters = nullptr;  // classify_forward: one per layer
  bool keep_cache = true;
};

/// Activations of one encoder layer needed by the backward pass.
template <class T>
struct LayerCache {
  Matrix<T> input;
  LayerNormCache<T> ln1;
  Matrix<T> x;
  std::vector<Matrix<T>> q, k, v;       // per head, L x dh
  std::vector<Matrix<T>> attn;          // dense mode: A^s per head
  std::vector<CsrMatrix<T>> attn_sparse;  // sparse mode: S^s per head
  Matrix<T> concat;
  Matrix<T> drop1;
  Matrix<T> o;
  LayerNormCache<T> ln2;
  Matrix<T> y;
  Matrix<T> pre_relu;
  Matrix<T> f;
  Matrix<T> drop2;
};

/// One encoder layer. pattern == nullptr selects dense attention. When
/// head_mean is given, it receives the head average of A^s (dense only).
template <class T>
Matrix<T> encoder_forward(const Matrix<T>& e, const EncoderLayerParams<T>& p, const ModelConfig& cfg,
                          const CsrMatrix<T>* pattern, const ForwardOptions& opts,
                          LayerCache<T>* cache = nullptr, Matrix<T>* head_mean = nullptr) {
  const std::size_t L = cfg.seq_len, D = cfg.d_model, H = cfg.heads, dh = cfg.head_dim();
  if (e.rows() != L || e.cols() != D)
    throw ShapeError("encoder_forward: E is " + shape_str(e) + ", expected " + shape_str(L, D));
  if (pattern && (pattern->rows != L || pattern->cols != L))
    throw ShapeError("encoder_forward: pattern is " + shape_str(pattern->rows, pattern->cols));
  if (pattern && head_mean) throw StateError("encoder_forward: snapshots are captured in dense mode only");
  const bool drop = opts.training && cfg.dropout_rate > 0.0;
  if (drop && !opts.rng) throw StateError("encoder_forward: dropout needs an rng");
  Rng dummy;
  Rng& rng = opts.rng ? *opts.rng : dummy;
  const double attn_scale = 1.0 / std::sqrt(double(dh));

  LayerNormCache<T> ln1;
  Matrix<T> x = layer_norm(e, p.ln1_gamma.values(), p.ln1_beta.values(), cfg.ln_eps, &ln1);
  const Matrix<T> q = gemm(x, p.wq), k = gemm(x, p.wk), v = gemm(x, p.wv);

  Matrix<T> concat(L, D);
  if (head_mean) *head_mean = Matrix<T>(L, L);
  std::vector<Matrix<T>> hq(H), hk(H), hv(H), attn;
  std::vector<CsrMatrix<T>> attn_sparse;
  for (std::size_t h = 0; h < H; ++h) {
    hq[h] = column_slice(q, h * dh, dh);
    hk[h] = column_slice(k, h * dh, dh);
    hv[h] = column_slice(v, h * dh, dh);
    if (pattern) {
      CsrMatrix<T> s_r = sddmm(hq[h], hk[h], *pattern, opts.counter);
      CsrMatrix<T> s_s = sparse_softmax_forward(s_r, attn_scale, L, opts.counter);
      set_column_slice(concat, h * dh, spmm(s_s, hv[h], opts.counter));
      attn_sparse.push_back(std::move(s_s));
    } else {
      Matrix<T> a_s = dense_softmax_rows(gemm(hq[h], hk[h], true, opts.counter), attn_scale, opts.counter);
      set_column_slice(concat, h * dh, gemm(a_s, hv[h], false, opts.counter));
      if (head_mean) add_inplace(*head_mean, a_s);
      attn.push_back(std::move(a_s));
    }
  }
  if (head_mean) *head_mean = scale(std::move(*head_mean), 1.0 / double(H));

  auto d1 = dropout_with_mask(gemm(concat, p.wo), cfg.dropout_rate, rng, drop);
  Matrix<T> o = add(std::move(d1.output), e);

  LayerNormCache<T> ln2;
  Matrix<T> y = layer_norm(o, p.ln2_gamma.values(), p.ln2_beta.values(), cfg.ln_eps, &ln2);
  Matrix<T> pre = gemm(y, p.wf);
  Matrix<T> f = relu(pre);
  auto d2 = dropout_with_mask(gemm(f, p.we), cfg.dropout_rate, rng, drop);
  Matrix<T> out = add(std::move(d2.output), o);

  if (cache) {
    cache->input = e;
    cache->ln1 = std::move(ln1);
    cache->x = std::move(x);
    cache->q = std::move(hq);
    cache->k = std::move(hk);
    cache->v = std::move(hv);
    cache->attn = std::move(attn);
    cache->attn_sparse = std::move(attn_sparse);
    cache->concat = std::move(concat);
    cache->drop1 = std::move(d1.multiplier);
    cache->o = std::move(o);
    cache->ln2 = std::move(ln2);
    cache->y = std::move(y);
    cache->pre_relu = std::move(pre);
    cache->f = std::move(f);
    cache->drop2 = std::move(d2.multiplier);
  }
  return out;
}

template <class T>
Matrix<T> dense_encoder_forward(const Matrix<T>& e, const EncoderLayerParams<T>& p, const ModelConfig& cfg,
                                const ForwardOptions& opts, LayerCache<T>* cache = nullptr,
                                Matrix<T>* head_mean = nullptr) {
  return encoder_forward<T>(e, p, cfg, nullptr, opts, cache, head_mean);
}

template <class T>
Matrix<T> sparse_encoder_forward(const Matrix<T>& e, const EncoderLayerParams<T>& p, const CsrMatrix<T>& pattern,
                                 const ModelConfig& cfg, const ForwardOptions& opts,
                                 LayerCache<T>* cache = nullptr) {
  return encoder_forward<T>(e, p, cfg, &pattern, opts, cache, nullptr);
}

/// Returns dE for the layer input and accumulates parameter gradients.
template <class T>
Matrix<T> encoder_backward(const Matrix<T>& d_out, const LayerCache<T>& c, const EncoderLayerParams<T>& p,
                           const ModelConfig& cfg, EncoderLayerParams<T>& g) {
  const std::size_t L = cfg.seq_len, D = cfg.d_model, H = cfg.heads, dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(double(dh));
  const bool sparse = !c.attn_sparse.empty();
  if (c.q.size() != H || (sparse ? c.attn_sparse.size() : c.attn.size()) != H)
    throw StateError("encoder_backward: incomplete layer cache");

  // Feed-forward sub-layer.
  Matrix<T> d_o = d_out;
  const Matrix<T> d_p2 = hadamard(d_out, c.drop2);
  add_inplace(g.we, gemm(transpose(c.f), d_p2));
  Matrix<T> d_pre = gemm(d_p2, p.we, true);
  for (std::size_t i = 0; i < d_pre.size(); ++i)
    if (!(c.pre_relu.values()[i] > T(0))) d_pre.values()[i] = T(0);
  add_inplace(g.wf, gemm(transpose(c.y), d_pre));
  const Matrix<T> d_y = gemm(d_pre, p.wf, true);
  add_inplace(d_o, layer_norm_backward(d_y, c.ln2, p.ln2_gamma.values(), g.ln2_gamma.values(), g.ln2_beta.values()));

  // Attention sub-layer.
  Matrix<T> d_e = d_o;
  const Matrix<T> d_p1 = hadamard(d_o, c.drop1);
  add_inplace(g.wo, gemm(transpose(c.concat), d_p1));
  const Matrix<T> d_concat = gemm(d_p1, p.wo, true);

  Matrix<T> d_q(L, D), d_k(L, D), d_v(L, D);
  for (std::size_t h = 0; h < H; ++h) {
    const Matrix<T> d_ac = column_slice(d_concat, h * dh, dh);
    if (sparse) {
      auto [d_ss, d_vh] = spmm_backward(d_ac, c.attn_sparse[h], c.v[h]);
      const CsrMatrix<T> d_sr = sparse_softmax_backward(c.attn_sparse[h], d_ss, scale, L);
      auto [d_qh, d_kh] = sddmm_backward(d_sr, c.q[h], c.k[h]);
      set_column_slice(d_q, h * dh, d_qh);
      set_column_slice(d_k, h * dh, d_kh);
      set_column_slice(d_v, h * dh, d_vh);
    } else {
      const Matrix<T>& a_s = c.attn[h];
      const Matrix<T> d_as = gemm(d_ac, c.v[h], true);
      set_column_slice(d_v, h * dh, gemm(transpose(a_s), d_ac));
      const Matrix<T> d_ar = dense_softmax_rows_backward(a_s, d_as, scale);
      set_column_slice(d_q, h * dh, gemm(d_ar, c.k[h]));
      set_column_slice(d_k, h * dh, gemm(transpose(d_ar), c.q[h]));
    }
  }
  const Matrix<T> xt = transpose(c.x);
  add_inplace(g.wq, gemm(xt, d_q));
  add_inplace(g.wk, gemm(xt, d_k));
  add_inplace(g.wv, gemm(xt, d_v));
  Matrix<T> d_x = gemm(d_q, p.wq, true);
  add_inplace(d_x, gemm(d_k, p.wk, true));
  add_inplace(d_x, gemm(d_v, p.wv, true));
  add_inplace(d_e, layer_norm_backward(d_x, c.ln1, p.ln1_gamma.values(), g.ln1_gamma.values(), g.ln1_beta.values()));
  return d_e;
}

/// Everything one classification forward pass produces.
template <class T>
struct ForwardState {
  std::vector<std::size_t> tokens;  // padded to L
  std::vector<LayerCache<T>> layers;
  Matrix<T> final_embedding;
  Matrix<T> pooled;  // 1 x D
  std::vector<T> logits;
  std::vector<Matrix<T>> head_mean_attention;  // per layer, when captured
  bool cached = false;
};

/// Pads with token 0 or truncates to L; rejects out-of-vocabulary ids.
inline std::vector<std::size_t> fit_tokens(std::span<const std::size_t> tokens, const ModelConfig& cfg) {
  std::vector<std::size_t> out(cfg.seq_len, 0);
  for (std::size_t i = 0; i < tokens.size() && i < cfg.seq_len; ++i) {
    if (tokens[i] >= cfg.vocab)
      throw DataError("token " + std::to_string(tokens[i]) + " at position " + std::to_string(i) +
                      " outside vocabulary of " + std::to_string(cfg.vocab));
    out[i] = tokens[i];
  }
  return out;
}

/// Embeds, runs the N encoder layers, mean-pools and applies the linear head.
/// In sparse mode `patterns` holds one L x L pattern per layer.
template <class T>
ForwardState<T> classify_forward(std::span<const std::size_t> tokens, const EncoderParams<T>& params,
                                 const ModelConfig& cfg, AttentionMode mode,
                                 std::span<const CsrMatrix<T>> patterns, const ForwardOptions& opts,
                                 bool capture = false) {
  if (mode == AttentionMode::Sparse && patterns.size() != cfg.layers)
    throw StateError("classify_forward: sparse mode needs one pattern per layer");
  ForwardState<T> st;
  st.tokens = fit_tokens(tokens, cfg);
  const std::size_t L = cfg.seq_len, D = cfg.d_model;
  Matrix<T> e(L, D);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < D; ++j)
      e(i, j) = params.token_embedding(st.tokens[i], j) + params.position_embedding(i, j);
  if (opts.keep_cache) st.layers.resize(cfg.layers);
  if (capture && mode == AttentionMode::Dense) st.head_mean_attention.resize(cfg.layers);
  if (opts.layer_counters) opts.layer_counters->assign(cfg.layers, OpCounter{});
  ForwardOptions layer_opts = opts;
  for (std::size_t n = 0; n < cfg.layers; ++n) {
    LayerCache<T>* cache = opts.keep_cache ? &st.layers[n] : nullptr;
    Matrix<T>* hm = st.head_mean_attention.empty() ? nullptr : &st.head_mean_attention[n];
    const CsrMatrix<T>* pat = mode == AttentionMode::Sparse ? &patterns[n] : nullptr;
    if (opts.layer_counters) layer_opts.counter = &(*opts.layer_counters)[n];
    e = encoder_forward(e, params.layers[n], cfg, pat, layer_opts, cache, hm);
  }
  st.pooled = Matrix<T>(1, D);
  for (std::size_t j = 0; j < D; ++j) {
    Accum s = 0;
    for (std::size_t i = 0; i < L; ++i) s += e(i, j);
    st.pooled(0, j) = static_cast<T>(s / Accum(L));
  }
  const Matrix<T> logits = gemm(st.pooled, params.classifier);
  st.logits.assign(logits.values().begin(), logits.values().end());
  st.final_embedding = std::move(e);
  st.cached = opts.keep_cache;
  return st;
}

struct LossResult {
  double loss = 0;
  std::vector<double> dlogits;
  std::size_t predicted = 0;
};

/// Softmax cross-entropy against an integer label.
template <class T>
LossResult cross_entropy(std::span<const T> logits, std::size_t label) {
  if (label >= logits.size()) throw DataError("label " + std::to_string(label) + " out of range");
  LossResult r;
  double mx = logits[0];
  for (std::size_t i = 0; i < logits.size(); ++i) {
    mx = std::max(mx, double(logits[i]));
    if (logits[i] > logits[r.predicted]) r.predicted = i;
  }
  double z = 0;
  r.dlogits.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) z += (r.dlogits[i] = std::exp(double(logits[i]) - mx));
  for (auto& v : r.dlogits) v /= z;
  r.loss = -std::log(std::max(r.dlogits[label], 1e-300));
  r.dlogits[label] -= 1.0;
  return r;
}

/// Reverse pass for one sample; accumulates into grads (same shapes as params).
template <class T>
void classify_backward(const ForwardState<T>& st, std::span<const double> dlogits, const EncoderParams<T>& params,
                       const ModelConfig& cfg, EncoderParams<T>& grads) {
  if (!st.cached || st.layers.size() != cfg.layers) throw StateError("backward: forward ran without activation cache");
  if (dlogits.size() != cfg.classes) throw ShapeError("backward: dlogits length != classes");
  const std::size_t L = cfg.seq_len, D = cfg.d_model;
  Matrix<T> dl(1, cfg.classes);
  for (std::size_t c = 0; c < cfg.classes; ++c) dl(0, c) = static_cast<T>(dlogits[c]);
  add_inplace(grads.classifier, gemm(transpose(st.pooled), dl));
  const Matrix<T> d_pooled = gemm(dl, params.classifier, true);
  Matrix<T> d_e(L, D);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < D; ++j) d_e(i, j) = static_cast<T>(Accum(d_pooled(0, j)) / Accum(L));
  for (std::size_t n = cfg.layers; n-- > 0;)
    d_e = encoder_backward(d_e, st.layers[n], params.layers[n], cfg, grads.layers[n]);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < D; ++j) {
      grads.token_embedding(st.tokens[i], j) += d_e(i, j);
      grads.position_embedding(i, j) += d_e(i, j);
    }
  }
}

/// Head-averaged attention of one layer, averaged over the batches of an
/// epoch: each batch contributes the mean over its samples, and batches are
/// combined as a running mean.
struct LayerSnapshot {
  std::size_t layer = 0;
  MatrixF a_s_mean;
};

class SnapshotAccumulator {
 public:
  SnapshotAccumulator(std::size_t layers, std::size_t seq_len) : layers_(layers), seq_len_(seq_len) { reset(); }

  void reset() {
    batch_sum_.assign(layers_, MatrixD(seq_len_, seq_len_));
    running_.assign(layers_, MatrixD(seq_len_, seq_len_));
    batch_samples_ = 0;
    batches_ = 0;
  }

  template <class T>
  void add_sample(const std::vector<Matrix<T>>& head_means) {
    if (head_means.size() != layers_) throw ShapeError("snapshot: one matrix per layer expected");
    for (std::size_t n = 0; n < layers_; ++n) {
      auto dst = batch_sum_[n].values();
      auto src = head_means[n].values();
      if (src.size() != dst.size()) throw ShapeError("snapshot: matrix must be L x L");
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += double(src[i]);
    }
    ++batch_samples_;
  }

  void end_batch() {
    if (batch_samples_ == 0) return;
    ++batches_;
    const double w = 1.0 / double(batches_);
    for (std::size_t n = 0; n < layers_; ++n) {
      auto run = running_[n].values();
      auto sum = batch_sum_[n].values();
      for (std::size_t i = 0; i < run.size(); ++i) {
        run[i] += (sum[i] / double(batch_samples_) - run[i]) * w;
        sum[i] = 0;
      }
    }
    batch_samples_ = 0;
  }

  std::size_t batches() const { return batches_; }

  std::vector<LayerSnapshot> snapshots() const {
    std::vector<LayerSnapshot> out;
    for (std::size_t n = 0; n < layers_; ++n) out.push_back({n, running_[n].cast<float>()});
    return out;
  }

 private:
  std::size_t layers_, seq_len_;
  std::vector<MatrixD> batch_sum_, running_;
  std::size_t batch_samples_ = 0, batches_ = 0;
};

}  // namespace floodsparse
