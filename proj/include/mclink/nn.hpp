#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mclink/linalg.hpp"
#include "mclink/rng.hpp"

namespace mclink {

enum class Act { Sigmoid, Tanh, Identity, Softmax };

inline std::string act_name(Act a) {
  switch (a) {
    case Act::Sigmoid: return "sigmoid";
    case Act::Tanh: return "tanh";
    case Act::Identity: return "identity";
    case Act::Softmax: return "softmax";
  }
  throw std::logic_error("act_name: bad enum");
}

inline Act act_from_name(const std::string& s) {
  if (s == "sigmoid") return Act::Sigmoid;
  if (s == "tanh") return Act::Tanh;
  if (s == "identity") return Act::Identity;
  if (s == "softmax") return Act::Softmax;
  throw std::invalid_argument("unknown activation: " + s);
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline Vec apply_act(Act act, const Vec& z) {
  Vec a(z.size());
  switch (act) {
    case Act::Sigmoid:
      for (size_t i = 0; i < z.size(); ++i) a[i] = sigmoid(z[i]);
      break;
    case Act::Tanh:
      for (size_t i = 0; i < z.size(); ++i) a[i] = std::tanh(z[i]);
      break;
    case Act::Identity:
      a = z;
      break;
    case Act::Softmax: {
      double zmax = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (size_t i = 0; i < z.size(); ++i) {
        a[i] = std::exp(z[i] - zmax);
        sum += a[i];
      }
      for (double& v : a) v /= sum;
      break;
    }
  }
  return a;
}

/// Converts a post-activation gradient da into the pre-activation gradient
/// dz, given the already-computed activation a.
inline Vec act_backward(Act act, const Vec& a, const Vec& da) {
  Vec dz(a.size());
  switch (act) {
    case Act::Sigmoid:
      for (size_t i = 0; i < a.size(); ++i) dz[i] = da[i] * a[i] * (1.0 - a[i]);
      break;
    case Act::Tanh:
      for (size_t i = 0; i < a.size(); ++i) dz[i] = da[i] * (1.0 - a[i] * a[i]);
      break;
    case Act::Identity:
      dz = da;
      break;
    case Act::Softmax: {
      double s = 0.0;
      for (size_t i = 0; i < a.size(); ++i) s += da[i] * a[i];
      for (size_t i = 0; i < a.size(); ++i) dz[i] = a[i] * (da[i] - s);
      break;
    }
  }
  return dz;
}

// ---------------------------------------------------------------------------
// Losses. Each pairs canonically with an output activation so that the
// output-layer pre-activation gradient is y - t: binary cross-entropy with
// sigmoid, cross-entropy with softmax, squared error 0.5*sum((y-t)^2) with
// identity.
// ---------------------------------------------------------------------------

enum class Loss { Bce, Ce, Mse };

inline double loss_value(Loss loss, const Vec& y, const Vec& t) {
  if (y.size() != t.size()) throw std::invalid_argument("loss_value: size mismatch");
  double L = 0.0;
  switch (loss) {
    case Loss::Bce:
      for (size_t i = 0; i < y.size(); ++i) {
        double p = std::clamp(y[i], 1e-12, 1.0 - 1e-12);
        L += -(t[i] * std::log(p) + (1.0 - t[i]) * std::log(1.0 - p));
      }
      break;
    case Loss::Ce:
      for (size_t i = 0; i < y.size(); ++i)
        L += -t[i] * std::log(std::max(y[i], 1e-12));
      break;
    case Loss::Mse:
      for (size_t i = 0; i < y.size(); ++i) L += 0.5 * (y[i] - t[i]) * (y[i] - t[i]);
      break;
  }
  return L;
}

/// Output-layer pre-activation gradient under the canonical pairing.
inline Vec loss_output_dz(Loss, const Vec& y, const Vec& t) {
  if (y.size() != t.size()) throw std::invalid_argument("loss_output_dz: size mismatch");
  Vec dz(y.size());
  for (size_t i = 0; i < y.size(); ++i) dz[i] = y[i] - t[i];
  return dz;
}

inline Act paired_output_act(Loss loss) {
  switch (loss) {
    case Loss::Bce: return Act::Sigmoid;
    case Loss::Ce: return Act::Softmax;
    case Loss::Mse: return Act::Identity;
  }
  throw std::logic_error("paired_output_act: bad enum");
}

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

struct Mlp {
  std::vector<Mat> w;
  std::vector<Vec> b;
  std::vector<Act> act;  // one per layer
  uint64_t seed = 0;

  int layers() const { return static_cast<int>(w.size()); }
  int input_size() const { return w.front().cols; }
  int output_size() const { return w.back().rows; }

  void validate() const {
    if (w.empty() || w.size() != b.size() || w.size() != act.size())
      throw std::invalid_argument("Mlp: inconsistent layer lists");
    for (size_t l = 0; l < w.size(); ++l) {
      if (static_cast<int>(b[l].size()) != w[l].rows)
        throw std::invalid_argument("Mlp: bias/weight mismatch");
      if (l > 0 && w[l].cols != w[l - 1].rows)
        throw std::invalid_argument("Mlp: layer dimensions do not chain");
    }
  }
};

inline Vec init_uniform(int n, double bound, Rng& rng) {
  Vec v(static_cast<size_t>(n));
  for (double& x : v) x = uniform(rng, -bound, bound);
  return v;
}

/// Fully-connected network over the given layer sizes, weights drawn
/// uniformly in ±1/sqrt(fan_in).
inline Mlp make_mlp(const std::vector<int>& sizes, Act hidden, Act output, uint64_t seed) {
  if (sizes.size() < 2) throw std::invalid_argument("make_mlp: need at least two layer sizes");
  Mlp m;
  m.seed = seed;
  Rng rng = make_rng(derive_seed(seed, 0xA11CEULL));
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    int in = sizes[l], out = sizes[l + 1];
    if (in <= 0 || out <= 0) throw std::invalid_argument("make_mlp: non-positive layer size");
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Mat W(out, in);
    W.a = init_uniform(out * in, bound, rng);
    m.w.push_back(std::move(W));
    m.b.push_back(init_uniform(out, bound, rng));
    m.act.push_back(l + 2 < sizes.size() ? hidden : output);
  }
  return m;
}

struct MlpCache {
  std::vector<Vec> a;  // a[0] = input, a[l+1] = activation of layer l
};

inline Vec mlp_forward_cached(const Mlp& m, const Vec& x, MlpCache& cache) {
  if (static_cast<int>(x.size()) != m.input_size())
    throw std::invalid_argument("mlp_forward: input size mismatch");
  cache.a.assign(1, x);
  Vec cur = x;
  for (int l = 0; l < m.layers(); ++l) {
    cur = apply_act(m.act[static_cast<size_t>(l)],
                    affine(m.w[static_cast<size_t>(l)], cur, m.b[static_cast<size_t>(l)]));
    cache.a.push_back(cur);
  }
  return cur;
}

inline Vec mlp_forward(const Mlp& m, const Vec& x) {
  MlpCache cache;
  return mlp_forward_cached(m, x, cache);
}

struct MlpGrads {
  std::vector<Mat> w;
  std::vector<Vec> b;
};

inline MlpGrads zero_grads(const Mlp& m) {
  MlpGrads g;
  for (int l = 0; l < m.layers(); ++l) {
    g.w.emplace_back(m.w[static_cast<size_t>(l)].rows, m.w[static_cast<size_t>(l)].cols);
    g.b.emplace_back(m.b[static_cast<size_t>(l)].size(), 0.0);
  }
  return g;
}

/// Backpropagates from the output-layer pre-activation gradient dz_out,
/// accumulating into g. Returns the gradient with respect to the input.
inline Vec mlp_backward(const Mlp& m, const MlpCache& cache, const Vec& dz_out, MlpGrads& g) {
  Vec dz = dz_out;
  for (int l = m.layers() - 1; l >= 0; --l) {
    const Vec& x = cache.a[static_cast<size_t>(l)];
    accumulate_outer(dz, x, g.w[static_cast<size_t>(l)]);
    axpy(1.0, dz, g.b[static_cast<size_t>(l)]);
    Vec da = matvec_transposed(m.w[static_cast<size_t>(l)], dz);
    if (l > 0) dz = act_backward(m.act[static_cast<size_t>(l - 1)], cache.a[static_cast<size_t>(l)], da);
    else return da;
  }
  return {};
}

// ---------------------------------------------------------------------------
// Vanilla RNN: h_t = phi(W_xh x_t + W_hh h_{t-1} + b_h), y_t = psi(W_hy h_t + b_y)
// ---------------------------------------------------------------------------

struct Rnn {
  Mat w_xh, w_hh, w_hy;
  Vec b_h, b_y;
  Act hidden_act = Act::Tanh;
  Act output_act = Act::Sigmoid;
  uint64_t seed = 0;

  int input_size() const { return w_xh.cols; }
  int hidden_size() const { return w_hh.rows; }
  int output_size() const { return w_hy.rows; }

  void validate() const {
    if (w_hh.rows != w_hh.cols) throw std::invalid_argument("Rnn: W_hh must be square");
    if (w_xh.rows != w_hh.rows || w_hy.cols != w_hh.rows)
      throw std::invalid_argument("Rnn: dimensions do not chain");
    if (static_cast<int>(b_h.size()) != w_hh.rows || static_cast<int>(b_y.size()) != w_hy.rows)
      throw std::invalid_argument("Rnn: bias size mismatch");
  }
};

inline Rnn make_rnn(int input, int hidden, int output, Act hidden_act, Act output_act,
                    uint64_t seed) {
  if (input <= 0 || hidden <= 0 || output <= 0)
    throw std::invalid_argument("make_rnn: non-positive size");
  Rnn r;
  r.seed = seed;
  r.hidden_act = hidden_act;
  r.output_act = output_act;
  Rng rng = make_rng(derive_seed(seed, 0xB0B1ULL));
  double bi = 1.0 / std::sqrt(static_cast<double>(input));
  double bh = 1.0 / std::sqrt(static_cast<double>(hidden));
  r.w_xh = Mat(hidden, input);
  r.w_xh.a = init_uniform(hidden * input, bi, rng);
  r.w_hh = Mat(hidden, hidden);
  r.w_hh.a = init_uniform(hidden * hidden, bh, rng);
  r.w_hy = Mat(output, hidden);
  r.w_hy.a = init_uniform(output * hidden, bh, rng);
  r.b_h = init_uniform(hidden, bh, rng);
  r.b_y = init_uniform(output, bh, rng);
  return r;
}

struct RnnCache {
  std::vector<Vec> x;  // inputs, length T
  std::vector<Vec> h;  // h[0] = h_0 (zeros), h[t] for t = 1..T
  std::vector<Vec> y;  // outputs per step
};

inline std::vector<Vec> rnn_forward_cached(const Rnn& r, const std::vector<Vec>& inputs,
                                           RnnCache& cache) {
  if (inputs.empty()) throw std::invalid_argument("rnn_forward: empty sequence");
  cache.x = inputs;
  cache.h.assign(1, Vec(static_cast<size_t>(r.hidden_size()), 0.0));
  cache.y.clear();
  for (const Vec& x : inputs) {
    if (static_cast<int>(x.size()) != r.input_size())
      throw std::invalid_argument("rnn_forward: input size mismatch");
    Vec zh = affine(r.w_xh, x, r.b_h);
    axpy(1.0, matvec(r.w_hh, cache.h.back()), zh);
    Vec h = apply_act(r.hidden_act, zh);
    cache.h.push_back(h);
    cache.y.push_back(apply_act(r.output_act, affine(r.w_hy, h, r.b_y)));
  }
  return cache.y;
}

inline std::vector<Vec> rnn_forward(const Rnn& r, const std::vector<Vec>& inputs) {
  RnnCache cache;
  return rnn_forward_cached(r, inputs, cache);
}

struct RnnGrads {
  Mat w_xh, w_hh, w_hy;
  Vec b_h, b_y;
};

inline RnnGrads zero_grads(const Rnn& r) {
  RnnGrads g;
  g.w_xh = Mat(r.w_xh.rows, r.w_xh.cols);
  g.w_hh = Mat(r.w_hh.rows, r.w_hh.cols);
  g.w_hy = Mat(r.w_hy.rows, r.w_hy.cols);
  g.b_h.assign(r.b_h.size(), 0.0);
  g.b_y.assign(r.b_y.size(), 0.0);
  return g;
}

/// Backpropagation through time over the whole cached sequence. dz_out holds
/// one output-layer pre-activation gradient per step (zero vectors for steps
/// without loss). Accumulates into g.
inline void rnn_backward(const Rnn& r, const RnnCache& cache,
                         const std::vector<Vec>& dz_out, RnnGrads& g) {
  size_t T = cache.x.size();
  if (dz_out.size() != T) throw std::invalid_argument("rnn_backward: dz_out length mismatch");
  Vec dh_next(static_cast<size_t>(r.hidden_size()), 0.0);
  for (size_t t = T; t-- > 0;) {
    const Vec& h = cache.h[t + 1];
    accumulate_outer(dz_out[t], h, g.w_hy);
    axpy(1.0, dz_out[t], g.b_y);
    Vec dh = matvec_transposed(r.w_hy, dz_out[t]);
    axpy(1.0, dh_next, dh);
    Vec dzh = act_backward(r.hidden_act, h, dh);
    accumulate_outer(dzh, cache.x[t], g.w_xh);
    accumulate_outer(dzh, cache.h[t], g.w_hh);
    axpy(1.0, dzh, g.b_h);
    dh_next = matvec_transposed(r.w_hh, dzh);
  }
}

// ---------------------------------------------------------------------------
// Flat parameter views (used by the optimizer and gradient checks)
// ---------------------------------------------------------------------------

inline Vec flatten(const Mlp& m) {
  Vec out;
  for (int l = 0; l < m.layers(); ++l) {
    const auto& W = m.w[static_cast<size_t>(l)];
    out.insert(out.end(), W.a.begin(), W.a.end());
    const auto& b = m.b[static_cast<size_t>(l)];
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

inline void unflatten(const Vec& p, Mlp& m) {
  size_t k = 0;
  for (int l = 0; l < m.layers(); ++l) {
    auto& W = m.w[static_cast<size_t>(l)];
    std::copy_n(p.begin() + static_cast<long>(k), W.a.size(), W.a.begin());
    k += W.a.size();
    auto& b = m.b[static_cast<size_t>(l)];
    std::copy_n(p.begin() + static_cast<long>(k), b.size(), b.begin());
    k += b.size();
  }
  if (k != p.size()) throw std::invalid_argument("unflatten: size mismatch");
}

inline Vec flatten(const MlpGrads& g) {
  Vec out;
  for (size_t l = 0; l < g.w.size(); ++l) {
    out.insert(out.end(), g.w[l].a.begin(), g.w[l].a.end());
    out.insert(out.end(), g.b[l].begin(), g.b[l].end());
  }
  return out;
}

inline Vec flatten(const Rnn& r) {
  Vec out;
  out.insert(out.end(), r.w_xh.a.begin(), r.w_xh.a.end());
  out.insert(out.end(), r.w_hh.a.begin(), r.w_hh.a.end());
  out.insert(out.end(), r.w_hy.a.begin(), r.w_hy.a.end());
  out.insert(out.end(), r.b_h.begin(), r.b_h.end());
  out.insert(out.end(), r.b_y.begin(), r.b_y.end());
  return out;
}

inline void unflatten(const Vec& p, Rnn& r) {
  size_t k = 0;
  auto take = [&](auto& dst) {
    std::copy_n(p.begin() + static_cast<long>(k), dst.size(), dst.begin());
    k += dst.size();
  };
  take(r.w_xh.a);
  take(r.w_hh.a);
  take(r.w_hy.a);
  take(r.b_h);
  take(r.b_y);
  if (k != p.size()) throw std::invalid_argument("unflatten: size mismatch");
}

inline Vec flatten(const RnnGrads& g) {
  Vec out;
  out.insert(out.end(), g.w_xh.a.begin(), g.w_xh.a.end());
  out.insert(out.end(), g.w_hh.a.begin(), g.w_hh.a.end());
  out.insert(out.end(), g.w_hy.a.begin(), g.w_hy.a.end());
  out.insert(out.end(), g.b_h.begin(), g.b_h.end());
  out.insert(out.end(), g.b_y.begin(), g.b_y.end());
  return out;
}

}  // namespace mclink
