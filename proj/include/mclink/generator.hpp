#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "mclink/bits.hpp"
#include "mclink/config.hpp"
#include "mclink/model_io.hpp"
#include "mclink/nn.hpp"
#include "mclink/rng.hpp"
#include "mclink/trace.hpp"
#include "mclink/train.hpp"

namespace mclink {

/// Learned forward channel map f: bit waveform -> response, running at the
/// sample rate. Scaling multiplies the symbol interval by k: integer k
/// composes the hidden transition k times per emitted sample, fractional
/// k = 1/q replaces the transition with its affine q-th root under a linear
/// relaxation of the hidden activation.
struct GeneratorModel {
  Rnn rnn;  // input 1 (injection waveform), output 1 (normalized amplitude)
  double base_t_s = 1.0;
  double t_w = 0.5;
  double f_p = 8.0;
  double k = 1.0;
  int steps_per_sample = 1;
  double out_mean = 0.0;
  double out_std = 1.0;

  double scaled_t_s() const { return base_t_s * k; }

  int scaled_window_len() const {
    double w = f_p * scaled_t_s();
    int wi = static_cast<int>(std::lround(w));
    if (wi <= 0 || std::abs(w - wi) > 1e-9)
      throw std::invalid_argument("GeneratorModel: scaled window length not integral");
    return wi;
  }

  void validate() const {
    rnn.validate();
    if (rnn.input_size() != 1 || rnn.output_size() != 1)
      throw std::invalid_argument("GeneratorModel: rnn must map 1 input to 1 output");
    if (!is_supported_interval(base_t_s))
      throw std::invalid_argument("GeneratorModel: base_t_s outside the supported set");
    if (k <= 0.0 || steps_per_sample < 1 || out_std <= 0.0)
      throw std::invalid_argument("GeneratorModel: bad scaling or normalization fields");
  }
};

inline void to_json(nlohmann::json& j, const GeneratorModel& g) {
  j = {{"kind", "generator"},
       {"rnn", g.rnn},
       {"base_t_s", g.base_t_s},
       {"t_w", g.t_w},
       {"f_p", g.f_p},
       {"k", g.k},
       {"steps_per_sample", g.steps_per_sample},
       {"out_mean", g.out_mean},
       {"out_std", g.out_std}};
}

inline void from_json(const nlohmann::json& j, GeneratorModel& g) {
  if (j.value("kind", "") != "generator")
    throw std::invalid_argument("model kind is not 'generator'");
  g.rnn = j.at("rnn").get<Rnn>();
  g.base_t_s = j.at("base_t_s").get<double>();
  g.t_w = j.value("t_w", 0.5);
  g.f_p = j.value("f_p", 8.0);
  g.k = j.value("k", 1.0);
  g.steps_per_sample = j.value("steps_per_sample", 1);
  g.out_mean = j.value("out_mean", 0.0);
  g.out_std = j.value("out_std", 1.0);
  g.validate();
}

/// One hidden update of the (possibly scaled) model: steps_per_sample
/// applications of the transition, the input term included in each.
inline void generator_step(const GeneratorModel& g, Vec& h, double input) {
  for (int s = 0; s < g.steps_per_sample; ++s) {
    Vec zh = affine(g.rnn.w_hh, h, g.rnn.b_h);
    for (int r = 0; r < g.rnn.w_xh.rows; ++r) zh[static_cast<size_t>(r)] += g.rnn.w_xh(r, 0) * input;
    h = apply_act(g.rnn.hidden_act, zh);
  }
}

/// Resting hidden state under zero input: iterate until the step converges.
inline Vec generator_rest_state(const GeneratorModel& g) {
  Vec h(static_cast<size_t>(g.rnn.hidden_size()), 0.0);
  Vec prev = h;
  for (int it = 0; it < 2000; ++it) {
    generator_step(g, h, 0.0);
    double diff = 0.0;
    for (size_t i = 0; i < h.size(); ++i) diff = std::max(diff, std::abs(h[i] - prev[i]));
    if (diff < 1e-13) break;
    prev = h;
  }
  return h;
}

inline double generator_emit(const GeneratorModel& g, const Vec& h) {
  Vec y = apply_act(g.rnn.output_act, affine(g.rnn.w_hy, h, g.rnn.b_y));
  return g.out_mean + g.out_std * y.front();
}

/// Rectangular injection waveform at the model's scaled interval: 1 while a
/// bit-1 slot is injecting (the first t_w/t_s fraction of the slot).
inline Vec injection_waveform(const GeneratorModel& g, const BitSequence& bits) {
  const int W = g.scaled_window_len();
  const double duty = g.t_w / g.base_t_s;
  Vec x(static_cast<size_t>(W) * bits.size(), 0.0);
  for (size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] != 1) continue;
    for (int s = 0; s < W; ++s)
      if ((s + 0.5) / W < duty) x[i * static_cast<size_t>(W) + static_cast<size_t>(s)] = 1.0;
  }
  return x;
}

/// Synthesizes a response trace of f_p*(base_t_s*k) samples per bit. The
/// hidden state starts at rest; noise_std > 0 adds seeded output noise so
/// repeated draws differ.
inline Trace generate_response(const GeneratorModel& g, const BitSequence& bits,
                               uint64_t seed, double noise_std = 0.0) {
  g.validate();
  if (bits.empty()) throw std::invalid_argument("generate_response: empty bits");
  Vec x = injection_waveform(g, bits);
  Vec h = generator_rest_state(g);
  Rng noise_rng = make_rng(derive_seed(seed, 0x6E01ULL));
  Trace out;
  out.f_p = g.f_p;
  out.origin_sample = 0;
  out.samples.reserve(x.size());
  for (double xi : x) {
    generator_step(g, h, xi);
    out.samples.push_back(generator_emit(g, h) + normal(noise_rng, noise_std));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

struct GenExample {
  BitSequence bits;
  Trace trace;
  LinkConfig link;
};

/// Fits the forward map on simulated transmissions by full-sequence BPTT
/// regression. Targets are standardized globally; stats live in the model.
inline GeneratorModel fit_forward_model(const std::vector<GenExample>& dataset,
                                        int hidden_size, const TrainConfig& cfg) {
  if (dataset.empty()) throw std::invalid_argument("fit_forward_model: empty dataset");
  const LinkConfig& link0 = dataset.front().link;
  for (const auto& ex : dataset) {
    if (std::abs(ex.link.t_s - link0.t_s) > 1e-9 || std::abs(ex.link.f_p - link0.f_p) > 1e-9)
      throw std::invalid_argument("fit_forward_model: dataset mixes symbol intervals");
    long origin = std::max(ex.trace.origin_sample, 0L);
    if (ex.trace.size() - origin < link0.window_len() * static_cast<long>(ex.bits.size()))
      throw std::invalid_argument("fit_forward_model: trace shorter than its bits");
  }

  GeneratorModel g;
  g.base_t_s = link0.t_s;
  g.t_w = link0.t_w;
  g.f_p = link0.f_p;

  double sum = 0.0, sq = 0.0;
  size_t count = 0;
  for (const auto& ex : dataset) {
    for (double v : ex.trace.samples) {
      sum += v;
      sq += v * v;
      ++count;
    }
  }
  g.out_mean = sum / static_cast<double>(count);
  g.out_std = std::sqrt(std::max(sq / static_cast<double>(count) - g.out_mean * g.out_mean, 1e-12));

  std::vector<SeqExample> seqs;
  for (const auto& ex : dataset) {
    const int W = link0.window_len();
    const double duty = ex.link.t_w / ex.link.t_s;
    long origin = std::max(ex.trace.origin_sample, 0L);
    SeqExample s;
    size_t n = static_cast<size_t>(W) * ex.bits.size();
    for (size_t t = 0; t < n; ++t) {
      size_t i = t / static_cast<size_t>(W);
      double frac = (static_cast<double>(t % static_cast<size_t>(W)) + 0.5) / W;
      double xin = (ex.bits[i] == 1 && frac < duty) ? 1.0 : 0.0;
      s.inputs.push_back(Vec{xin});
      s.targets.push_back(
          Vec{(ex.trace[static_cast<int>(origin + static_cast<long>(t))] - g.out_mean) / g.out_std});
    }
    seqs.push_back(std::move(s));
  }

  g.rnn = make_rnn(1, hidden_size, 1, Act::Tanh, Act::Identity, cfg.seed);
  TrainConfig fit_cfg = cfg;
  if (fit_cfg.gradient_clip_norm == 0.0) fit_cfg.gradient_clip_norm = 5.0;
  train_rnn(g.rnn, seqs, Loss::Mse, fit_cfg);
  return g;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

/// Independent zero-mean normal perturbation of every weight and bias.
inline GeneratorModel augment_weight_noise(const GeneratorModel& model, double sigma,
                                           uint64_t seed) {
  if (sigma < 0.0) throw std::invalid_argument("augment_weight_noise: negative sigma");
  GeneratorModel out = model;
  Rng rng = make_rng(derive_seed(seed, 0xA06ULL));
  auto perturb = [&](Vec& v) {
    for (double& x : v) x += normal(rng, sigma);
  };
  perturb(out.rnn.w_xh.a);
  perturb(out.rnn.w_hh.a);
  perturb(out.rnn.w_hy.a);
  perturb(out.rnn.b_h);
  perturb(out.rnn.b_y);
  return out;
}

/// Per-component source indices for group mixing, in the order
/// {W_xh, W_hh, W_hy, b_h, b_y}.
struct GroupMixChoice {
  std::array<size_t, 5> source{};
};

inline GeneratorModel augment_group_mix(const std::vector<GeneratorModel>& models,
                                        const GroupMixChoice& choice) {
  if (models.size() < 2) throw std::invalid_argument("augment_group_mix: need >= 2 models");
  const GeneratorModel& ref = models.front();
  for (const auto& m : models) {
    if (m.rnn.hidden_size() != ref.rnn.hidden_size() ||
        m.rnn.hidden_act != ref.rnn.hidden_act ||
        m.steps_per_sample != ref.steps_per_sample ||
        std::abs(m.base_t_s - ref.base_t_s) > 1e-9 || std::abs(m.k - ref.k) > 1e-9)
      throw std::invalid_argument("augment_group_mix: architecture or interval mismatch");
  }
  for (size_t s : choice.source)
    if (s >= models.size()) throw std::invalid_argument("augment_group_mix: source index out of range");

  GeneratorModel out = ref;
  out.rnn.w_xh = models[choice.source[0]].rnn.w_xh;
  out.rnn.w_hh = models[choice.source[1]].rnn.w_hh;
  out.rnn.w_hy = models[choice.source[2]].rnn.w_hy;
  out.rnn.b_h = models[choice.source[3]].rnn.b_h;
  out.rnn.b_y = models[choice.source[4]].rnn.b_y;
  double mean = 0.0, std_ = 0.0;
  for (const auto& m : models) {
    mean += m.out_mean;
    std_ += m.out_std;
  }
  out.out_mean = mean / static_cast<double>(models.size());
  out.out_std = std_ / static_cast<double>(models.size());
  return out;
}

/// Matrix-level mixing with uniformly drawn sources.
inline GeneratorModel augment_group_mix(const std::vector<GeneratorModel>& models,
                                        uint64_t seed) {
  if (models.size() < 2) throw std::invalid_argument("augment_group_mix: need >= 2 models");
  Rng rng = make_rng(derive_seed(seed, 0x31BULL));
  GroupMixChoice choice;
  for (size_t c = 0; c < choice.source.size(); ++c)
    choice.source[c] = static_cast<size_t>(uniform_int(rng, 0, static_cast<int>(models.size()) - 1));
  return augment_group_mix(models, choice);
}

// ---------------------------------------------------------------------------
// Symbol-interval scaling
// ---------------------------------------------------------------------------

/// Hidden transition of a scaled step under the linear relaxation.
struct ScaledStep {
  Mat w_g;
  Vec b_g;
  double k = 1.0;
  bool learned = false;  // true when the closed-form root failed
};

namespace detail {

inline Eigen::MatrixXd to_eigen(const Mat& m) {
  Eigen::MatrixXd e(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) e(r, c) = m(r, c);
  return e;
}

inline Mat from_eigen(const Eigen::MatrixXd& e) {
  Mat m(static_cast<int>(e.rows()), static_cast<int>(e.cols()));
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) m(r, c) = e(r, c);
  return m;
}

inline double recompose_error(const Mat& root, const Mat& a, int q) {
  Mat composed = mat_pow(root, q);
  double num = 0.0;
  for (size_t i = 0; i < a.a.size(); ++i) {
    double d = composed.a[i] - a.a[i];
    num += d * d;
  }
  return std::sqrt(num) / std::max(frobenius_norm(a), 1e-12);
}

/// Principal q-th root by eigendecomposition. Returns false when the
/// principal root has a non-negligible imaginary part or fails to recompose.
inline bool principal_root(const Mat& a, int q, Mat& out) {
  Eigen::MatrixXd A = to_eigen(a);
  Eigen::EigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success) return false;
  Eigen::MatrixXcd V = es.eigenvectors();
  Eigen::VectorXcd d = es.eigenvalues();
  Eigen::VectorXcd droot(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i)
    droot(i) = std::pow(d(i), 1.0 / static_cast<double>(q));
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(V);
  if (!lu.isInvertible()) return false;
  Eigen::MatrixXcd R = V * droot.asDiagonal() * lu.inverse();
  double imag_norm = R.imag().norm();
  double real_norm = std::max(R.real().norm(), 1e-12);
  if (imag_norm / real_norm > 1e-9) return false;
  out = from_eigen(Eigen::MatrixXd(R.real()));
  return recompose_error(out, a, q) < 1e-8;
}

/// Gradient-based root as the fallback: minimizes ||W^q - A||_F^2 by Adam
/// from several starts.
inline bool learned_root(const Mat& a, int q, uint64_t seed, Mat& out) {
  const int n = a.rows;
  double target = frobenius_norm(a);
  double tol = std::max(target, 1e-12) * 1e-4;

  auto objective_grad = [&](const Mat& w, Mat& grad) {
    Mat e = mat_pow(w, q);
    for (size_t i = 0; i < e.a.size(); ++i) e.a[i] -= a.a[i];
    grad = Mat(n, n);
    // d/dW ||W^q - A||^2 = 2 * sum_m (W^m)^T E (W^{q-1-m})^T
    std::vector<Mat> powers(static_cast<size_t>(q));
    powers[0] = mat_identity(n);
    for (int m = 1; m < q; ++m) powers[static_cast<size_t>(m)] = matmul(powers[static_cast<size_t>(m - 1)], w);
    for (int m = 0; m < q; ++m) {
      Mat left = powers[static_cast<size_t>(m)];
      Mat right = powers[static_cast<size_t>(q - 1 - m)];
      // (left)^T * E * (right)^T
      Mat lt(n, n), rt(n, n);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
          lt(r, c) = left(c, r);
          rt(r, c) = right(c, r);
        }
      Mat term = matmul(matmul(lt, e), rt);
      for (size_t i = 0; i < grad.a.size(); ++i) grad.a[i] += 2.0 * term.a[i];
    }
    double J = 0.0;
    for (double v : e.a) J += v * v;
    return J;
  };

  double best_err = std::numeric_limits<double>::infinity();
  Mat best;
  for (int start = 0; start < 6; ++start) {
    Mat w(n, n);
    Rng rng = make_rng(derive_seed(seed, 0x800ULL, static_cast<uint64_t>(start)));
    double scale = std::pow(std::max(target / std::sqrt(static_cast<double>(n)), 1e-3),
                            1.0 / static_cast<double>(q));
    for (double& v : w.a) v = normal(rng, scale);
    Adam opt;
    opt.lr = 0.02;
    Vec params = w.a;
    for (int it = 0; it < 4000; ++it) {
      Mat grad;
      Mat cur(n, n);
      cur.a = params;
      double J = objective_grad(cur, grad);
      if (std::sqrt(J) < tol) break;
      opt.step(params, grad.a);
    }
    Mat cand(n, n);
    cand.a = params;
    double err = recompose_error(cand, a, q);
    if (err < best_err) {
      best_err = err;
      best = cand;
    }
    if (best_err < 1e-6) break;
  }
  if (best_err < 1e-3) {
    out = best;
    return true;
  }
  return false;
}

}  // namespace detail

struct ScaleResult {
  GeneratorModel model;
  bool used_learned_root = false;
};

/// Computes the affine q-th root (W_g, b_g) of the step h -> A h + c.
inline ScaledStep affine_root(const Mat& a, const Vec& c, int q, uint64_t seed) {
  if (a.rows != a.cols) throw std::invalid_argument("affine_root: square matrix required");
  if (q < 2) throw std::invalid_argument("affine_root: q must be >= 2");
  ScaledStep step;
  step.k = 1.0 / static_cast<double>(q);
  if (!detail::principal_root(a, q, step.w_g)) {
    if (!detail::learned_root(a, q, seed, step.w_g))
      throw std::runtime_error("affine_root: no real root found (closed-form and learned both failed)");
    step.learned = true;
  }

  // b_g solves (I + W + ... + W^{q-1}) b_g = c.
  Mat s(a.rows, a.rows);
  Mat p = mat_identity(a.rows);
  for (int i = 0; i < q; ++i) {
    for (size_t j = 0; j < s.a.size(); ++j) s.a[j] += p.a[j];
    p = matmul(p, step.w_g);
  }
  Eigen::MatrixXd S = detail::to_eigen(s);
  Eigen::VectorXd rhs(a.rows);
  for (int i = 0; i < a.rows; ++i) rhs(i) = c[static_cast<size_t>(i)];
  Eigen::VectorXd b = S.colPivHouseholderQr().solve(rhs);
  step.b_g.assign(static_cast<size_t>(a.rows), 0.0);
  for (int i = 0; i < a.rows; ++i) step.b_g[static_cast<size_t>(i)] = b(i);
  return step;
}

/// Rescales the symbol interval by k. k = 1 is the identity; integer k
/// composes the existing step k times per emitted sample; k = 1/q swaps the
/// hidden transition for its affine q-th root and relaxes the hidden
/// activation to identity (W_xh and W_hy stay fixed).
inline ScaleResult scale_interval(const GeneratorModel& model, double k, uint64_t seed = 0) {
  model.validate();
  ScaleResult res;
  res.model = model;
  if (std::abs(k - 1.0) < 1e-12) return res;

  double ki = std::round(k);
  if (k > 1.0 && std::abs(k - ki) < 1e-9) {
    res.model.steps_per_sample *= static_cast<int>(ki);
    res.model.k *= ki;
    return res;
  }

  double qd = std::round(1.0 / k);
  if (k >= 1.0 || std::abs(1.0 / k - qd) > 1e-9)
    throw std::invalid_argument("scale_interval: k must be a positive integer or a unit fraction");
  int q = static_cast<int>(qd);
  if (model.steps_per_sample != 1)
    throw std::invalid_argument("scale_interval: fractional scaling requires an uncomposed model");

  ScaledStep step = affine_root(model.rnn.w_hh, model.rnn.b_h, q, seed);
  res.used_learned_root = step.learned;
  res.model.rnn.w_hh = step.w_g;
  res.model.rnn.b_h = step.b_g;
  res.model.rnn.hidden_act = Act::Identity;
  res.model.k *= step.k;
  return res;
}

// ---------------------------------------------------------------------------
// Plausibility statistic
// ---------------------------------------------------------------------------

/// Fraction of (bit-1 window, bit-0 window) pairs where the bit-1 window
/// rises higher above its first sample. 1.0 means every pulse window beats
/// every quiet window.
inline double peak_discrimination(const GeneratorModel& model, const BitSequence& bits,
                                  uint64_t seed = 0) {
  Trace tr = generate_response(model, bits, seed);
  const int W = model.scaled_window_len();
  std::vector<double> rise1, rise0;
  for (size_t i = 0; i < bits.size(); ++i) {
    auto begin = tr.samples.begin() + static_cast<long>(i) * W;
    double first = *begin;
    double peak = *std::max_element(begin, begin + W);
    (bits[i] == 1 ? rise1 : rise0).push_back(peak - first);
  }
  if (rise1.empty() || rise0.empty()) return 1.0;
  size_t wins = 0;
  for (double a : rise1)
    for (double b : rise0)
      if (a > b) ++wins;
  return static_cast<double>(wins) / (static_cast<double>(rise1.size()) * rise0.size());
}

}  // namespace mclink
