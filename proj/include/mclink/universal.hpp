#pragma once

#include <algorithm>
#include <array>
#include <numeric>
#include <random>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mclink/bits.hpp"
#include "mclink/config.hpp"
#include "mclink/detectors.hpp"
#include "mclink/framing.hpp"
#include "mclink/model_io.hpp"
#include "mclink/nn.hpp"
#include "mclink/trace.hpp"
#include "mclink/train.hpp"

namespace mclink {

inline constexpr double kProbEps = 1e-6;

inline double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

struct TrainingSwitches {
  bool noise_on = true;
  bool delay_on = true;
  bool adjacent_on = true;

  void validate() const {
    if (!noise_on && !delay_on && !adjacent_on)
      throw std::invalid_argument("TrainingSwitches: at least one block must be on");
  }
};

inline void to_json(nlohmann::json& j, const TrainingSwitches& s) {
  j = {{"noise_on", s.noise_on}, {"delay_on", s.delay_on}, {"adjacent_on", s.adjacent_on}};
}

inline void from_json(const nlohmann::json& j, TrainingSwitches& s) {
  s.noise_on = j.value("noise_on", true);
  s.delay_on = j.value("delay_on", true);
  s.adjacent_on = j.value("adjacent_on", true);
}

struct PhaseConfig {
  TrainingSwitches switches;
  int max_epochs = 60;
};

/// Default schedule: joint training of all blocks, then a noise-block-only
/// fine-tune once validation BER stops improving.
inline std::vector<PhaseConfig> default_phase_schedule() {
  PhaseConfig joint;
  joint.max_epochs = 60;
  PhaseConfig noise_only;
  noise_only.switches = TrainingSwitches{true, false, false};
  noise_only.max_epochs = 20;
  return {joint, noise_only};
}

/// The three-block universal decoder with a log-probability merge.
///
/// noise_net: per-window MLP emitting (p, confidence) from the raw window,
/// its rise, and the calibrated nst threshold. delay_net: RNN over extended
/// windows (y_t, y_{t+1}, y_{t+2}) plus a run-length feature. adjacent_net:
/// MLP over window pairs emitting (p_left, p_right); interior bits combine
/// their two estimates by geometric mean. merge: a single affine layer over
/// the three log-probabilities, sigmoid(w · (log pn, log pd, log pa) + b),
/// every weight kept >= 0 so the fused output is monotone in each input.
struct UniversalModel {
  Mlp noise_net;
  Rnn delay_net;
  Mlp adjacent_net;
  Vec merge_w = Vec(3, 1.0);
  double merge_b = 3.0 * std::numbers::ln2_v<double>;
  double eta = 0.5;  // nst ratio backing the threshold feature
  double input_mean = 0.0;
  double input_std = 1.0;
  double t_s = 1.0;
  double f_p = 8.0;

  int window_len() const { return static_cast<int>(std::lround(f_p * t_s)); }

  void validate() const {
    noise_net.validate();
    delay_net.validate();
    adjacent_net.validate();
    const int W = window_len();
    if (noise_net.input_size() != W + 2 || noise_net.output_size() != 2)
      throw std::invalid_argument("UniversalModel: noise_net shape mismatch");
    if (delay_net.input_size() != 3 * W + 4 || delay_net.output_size() != 1)
      throw std::invalid_argument("UniversalModel: delay_net shape mismatch");
    if (adjacent_net.input_size() != 2 * W || adjacent_net.output_size() != 2)
      throw std::invalid_argument("UniversalModel: adjacent_net shape mismatch");
    if (merge_w.size() != 3)
      throw std::invalid_argument("UniversalModel: merge takes exactly three inputs");
    for (double w : merge_w)
      if (w < 0.0) throw std::invalid_argument("UniversalModel: merge weights must be >= 0");
    if (input_std <= 0.0) throw std::invalid_argument("UniversalModel: input_std must be > 0");
  }

  double normalize(double v) const { return (v - input_mean) / input_std; }
};

inline void to_json(nlohmann::json& j, const UniversalModel& m) {
  j = {{"kind", "universal"},
       {"noise_net", m.noise_net},
       {"delay_net", m.delay_net},
       {"adjacent_net", m.adjacent_net},
       {"merge_w", m.merge_w},
       {"merge_b", m.merge_b},
       {"eta", m.eta},
       {"input_mean", m.input_mean},
       {"input_std", m.input_std},
       {"t_s", m.t_s},
       {"f_p", m.f_p}};
}

inline void from_json(const nlohmann::json& j, UniversalModel& m) {
  if (j.value("kind", "") != "universal")
    throw std::invalid_argument("model kind is not 'universal'");
  m.noise_net = j.at("noise_net").get<Mlp>();
  m.delay_net = j.at("delay_net").get<Rnn>();
  m.adjacent_net = j.at("adjacent_net").get<Mlp>();
  m.merge_w = j.at("merge_w").get<Vec>();
  m.merge_b = j.at("merge_b").get<double>();
  m.eta = j.value("eta", 0.5);
  m.input_mean = j.value("input_mean", 0.0);
  m.input_std = j.value("input_std", 1.0);
  m.t_s = j.at("t_s").get<double>();
  m.f_p = j.value("f_p", 8.0);
  m.validate();
}

/// Freshly initialized model for the given interval.
inline UniversalModel make_universal(double t_s, double f_p, uint64_t seed) {
  UniversalModel m;
  m.t_s = t_s;
  m.f_p = f_p;
  const int W = m.window_len();
  m.noise_net = make_mlp({W + 2, 10, 10, 10, 2}, Act::Sigmoid, Act::Sigmoid, derive_seed(seed, 1));
  m.delay_net = make_rnn(3 * W + 4, 16, 1, Act::Tanh, Act::Sigmoid, derive_seed(seed, 2));
  m.adjacent_net = make_mlp({2 * W, 10, 2}, Act::Sigmoid, Act::Sigmoid, derive_seed(seed, 3));
  // The sequence blocks start as exact constants (p = 0.5): zeroed output
  // layers keep them out of the merge until training pulls them in where
  // they actually reduce the fused loss.
  std::fill(m.delay_net.w_hy.a.begin(), m.delay_net.w_hy.a.end(), 0.0);
  std::fill(m.delay_net.b_y.begin(), m.delay_net.b_y.end(), 0.0);
  std::fill(m.adjacent_net.w.back().a.begin(), m.adjacent_net.w.back().a.end(), 0.0);
  std::fill(m.adjacent_net.b.back().begin(), m.adjacent_net.b.back().end(), 0.0);
  return m;
}

// ---------------------------------------------------------------------------
// Block features and inference
// ---------------------------------------------------------------------------

inline Vec noise_features(const UniversalModel& m, const SymbolWindow& w,
                          const ThresholdState& state) {
  Vec x;
  x.reserve(w.values.size() + 2);
  for (double v : w.values) x.push_back(m.normalize(v));
  x.push_back(m.normalize(window_rise(w) + m.input_mean));
  x.push_back(m.normalize(state.threshold() + m.input_mean));
  return x;
}

struct NoiseOut {
  double p = 0.5;
  double confidence = 0.5;
};

inline NoiseOut noise_block_infer(const SymbolWindow& w, const UniversalModel& m,
                                  const ThresholdState& state) {
  Vec out = mlp_forward(m.noise_net, noise_features(m, w, state));
  return NoiseOut{out[0], out[1]};
}

/// Extended window for bit t: three consecutive normalized windows, zero
/// padded past the end of the stream, each window's rise (drift cancels in
/// the in-window difference), plus the saturating run-length feature
/// min(run, 8)/8.
inline Vec delay_features(const UniversalModel& m, const std::vector<SymbolWindow>& windows,
                          size_t t, int run_length) {
  const int W = m.window_len();
  Vec x(static_cast<size_t>(3 * W) + 4, 0.0);
  for (int j = 0; j < 3; ++j) {
    if (t + static_cast<size_t>(j) >= windows.size()) break;
    const Vec& v = windows[t + static_cast<size_t>(j)].values;
    for (int s = 0; s < W; ++s)
      x[static_cast<size_t>(j * W + s)] = m.normalize(v[static_cast<size_t>(s)]);
    x[static_cast<size_t>(3 * W + j)] = window_rise(windows[t + static_cast<size_t>(j)]) / m.input_std;
  }
  x.back() = std::min(run_length, 8) / 8.0;
  return x;
}

/// Single-step delay inference; the caller owns the recurrent state (start
/// it at zeros).
inline double delay_block_infer(const Vec& extended_features, const UniversalModel& m,
                                Vec& hidden) {
  if (static_cast<int>(hidden.size()) != m.delay_net.hidden_size())
    throw std::invalid_argument("delay_block_infer: bad hidden state size");
  Vec zh = affine(m.delay_net.w_xh, extended_features, m.delay_net.b_h);
  axpy(1.0, matvec(m.delay_net.w_hh, hidden), zh);
  hidden = apply_act(m.delay_net.hidden_act, zh);
  Vec y = apply_act(m.delay_net.output_act, affine(m.delay_net.w_hy, hidden, m.delay_net.b_y));
  return y.front();
}

struct AdjacentOut {
  double p_left = 0.5;
  double p_right = 0.5;
};

inline AdjacentOut adjacent_block_infer(const SymbolWindow& left, const SymbolWindow& right,
                                        const UniversalModel& m) {
  const int W = m.window_len();
  Vec x(static_cast<size_t>(2 * W));
  for (int s = 0; s < W; ++s) {
    x[static_cast<size_t>(s)] = m.normalize(left.values[static_cast<size_t>(s)]);
    x[static_cast<size_t>(W + s)] = m.normalize(right.values[static_cast<size_t>(s)]);
  }
  Vec out = mlp_forward(m.adjacent_net, x);
  return AdjacentOut{out[0], out[1]};
}

/// Combined adjacent-block estimate per bit: geometric mean of the two
/// estimates for interior bits, the single available estimate at the ends.
inline std::vector<double> adjacent_combined(const std::vector<AdjacentOut>& pairs,
                                             size_t n_bits) {
  std::vector<double> out(n_bits, 0.5);
  if (pairs.empty()) return out;
  for (size_t t = 0; t < n_bits; ++t) {
    bool has_left = t > 0 && t - 1 < pairs.size();    // estimate as right element
    bool has_right = t < pairs.size();                // estimate as left element
    if (has_left && has_right)
      out[t] = std::sqrt(clamp_prob(pairs[t - 1].p_right) * clamp_prob(pairs[t].p_left));
    else if (has_right)
      out[t] = pairs[t].p_left;
    else if (has_left)
      out[t] = pairs[t - 1].p_right;
  }
  return out;
}

struct MergeOut {
  int bit = 0;
  double fused = 0.5;
};

inline MergeOut merge_decide(double p_noise, double p_delay, double p_adjacent,
                             const UniversalModel& m) {
  double s = m.merge_w[0] * std::log(clamp_prob(p_noise)) +
             m.merge_w[1] * std::log(clamp_prob(p_delay)) +
             m.merge_w[2] * std::log(clamp_prob(p_adjacent));
  double fused = sigmoid(s + m.merge_b);
  return MergeOut{fused > 0.5 ? 1 : 0, fused};
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

struct DecodeResult {
  std::vector<int> pilot_decisions;  // decisions over the 5 pilot windows
  BitSequence payload;               // decoded payload bits
  std::vector<double> fused;         // fused probability per window (pilot first)
  long origin = 0;
};

/// Decodes all windows from a known origin: noise and adjacent blocks run
/// per window, the delay block runs sequentially with its run-length taken
/// greedily from already-decided bits.
inline DecodeResult decode_at(const Trace& trace, const LinkConfig& link,
                              const UniversalModel& model, long origin) {
  model.validate();
  if (std::abs(link.t_s - model.t_s) > 1e-9 || std::abs(link.f_p - model.f_p) > 1e-9)
    throw std::invalid_argument("decode_at: model trained for a different interval");
  std::vector<SymbolWindow> windows = segment(trace, link, origin);
  if (windows.empty()) throw std::invalid_argument("decode_at: trace shorter than one window");

  ThresholdState state;
  if (windows.size() >= 4) {
    std::vector<SymbolWindow> pilot(windows.begin(), windows.begin() + 4);
    state = nst_calibrate(pilot, model.eta);
  } else {
    state = ThresholdState{model.eta, window_rise(windows.front())};
  }

  const size_t n = windows.size();
  std::vector<AdjacentOut> pairs;
  for (size_t t = 0; t + 1 < n; ++t)
    pairs.push_back(adjacent_block_infer(windows[t], windows[t + 1], model));
  std::vector<double> p_adj = adjacent_combined(pairs, n);

  DecodeResult res;
  res.origin = origin;
  Vec hidden(static_cast<size_t>(model.delay_net.hidden_size()), 0.0);
  int run = 0;
  std::vector<int> decisions(n, 0);
  for (size_t t = 0; t < n; ++t) {
    NoiseOut nb = noise_block_infer(windows[t], model, state);
    double pd = delay_block_infer(delay_features(model, windows, t, run), model, hidden);
    MergeOut mo = merge_decide(nb.p, pd, p_adj[t], model);
    decisions[t] = mo.bit;
    run = mo.bit == 1 ? run + 1 : 0;
    res.fused.push_back(mo.fused);
  }

  size_t pilot_n = std::min<size_t>(kPilot.size(), n);
  res.pilot_decisions.assign(decisions.begin(), decisions.begin() + pilot_n);
  res.payload = BitSequence(std::vector<int>(decisions.begin() + pilot_n, decisions.end()));
  return res;
}

/// Full receive path: pilot search then decode.
inline DecodeResult decode(const Trace& trace, const LinkConfig& link,
                           const UniversalModel& model, const OriginOptions& opt = {}) {
  return decode_at(trace, link, model, detect_origin(trace, link, opt));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// One labeled transmission; the trace origin must be known.
struct LabeledTrace {
  Trace trace;
  BitSequence bits;
};

struct UniversalTrainConfig {
  TrainConfig opt;                    // learning rate, betas, seed
  std::vector<PhaseConfig> schedule = default_phase_schedule();
  double confidence_weight = 0.5;     // weight of the confidence head loss
  double min_improvement = 0.005;     // phase advances below this val-BER gain
  double validation_fraction = 0.2;
  bool keep_best = false;             // restore the best-validation weights at the end
};

struct UniversalTrainResult {
  std::vector<std::vector<double>> phase_loss;  // mean fused loss per epoch, per phase
  std::vector<double> validation_ber;           // after each epoch, all phases
  double best_validation_ber = 1.0;             // lowest phase-end validation BER
};

namespace detail {

struct TracePack {
  std::vector<SymbolWindow> windows;
  ThresholdState state;
  std::vector<int> bits;
  std::vector<int> run_length;  // teacher-forced, from true bits
  size_t payload_from = 0;      // first window index included in the loss
};

inline TracePack pack_trace(const LabeledTrace& item, const LinkConfig& link,
                            const UniversalModel& model) {
  TracePack p;
  long origin = std::max(item.trace.origin_sample, 0L);
  p.windows = segment(item.trace, link, origin);
  if (p.windows.size() > item.bits.size()) p.windows.resize(item.bits.size());
  if (p.windows.size() < item.bits.size())
    throw std::invalid_argument("train_universal: trace shorter than its bits");
  p.bits.assign(item.bits.bits.begin(), item.bits.bits.end());
  std::vector<SymbolWindow> pilot(p.windows.begin(), p.windows.begin() + 4);
  p.state = nst_calibrate(pilot, model.eta);
  p.run_length.assign(p.bits.size(), 0);
  int run = 0;
  for (size_t t = 0; t < p.bits.size(); ++t) {
    p.run_length[t] = run;
    run = p.bits[t] == 1 ? run + 1 : 0;
  }
  p.payload_from = static_cast<size_t>(item.bits.pilot_len);
  return p;
}

struct JointGrads {
  MlpGrads noise;
  RnnGrads delay;
  MlpGrads adjacent;
  Vec merge_w = Vec(3, 0.0);
  double merge_b = 0.0;
};

/// Forward + backward over one packed trace. Returns summed fused loss over
/// payload bits (plus weighted confidence loss) and the payload bit count.
inline std::pair<double, size_t> accumulate_trace(const UniversalModel& model,
                                                  const TracePack& pack,
                                                  double confidence_weight,
                                                  const TrainingSwitches& switches,
                                                  JointGrads& grads) {
  const size_t n = pack.windows.size();
  // A phase refining exactly one block supervises that block's own output
  // directly; joint phases train everything through the fused cross-entropy.
  const int on_count = int(switches.noise_on) + int(switches.delay_on) + int(switches.adjacent_on);
  const bool solo = on_count == 1;

  std::vector<MlpCache> noise_caches(n);
  std::vector<NoiseOut> noise_out(n);
  for (size_t t = 0; t < n; ++t) {
    Vec out = mlp_forward_cached(model.noise_net,
                                 noise_features(model, pack.windows[t], pack.state),
                                 noise_caches[t]);
    noise_out[t] = NoiseOut{out[0], out[1]};
  }

  std::vector<MlpCache> pair_caches(n > 0 ? n - 1 : 0);
  std::vector<AdjacentOut> pairs(n > 0 ? n - 1 : 0);
  const int W = model.window_len();
  for (size_t t = 0; t + 1 < n; ++t) {
    Vec x(static_cast<size_t>(2 * W));
    for (int s = 0; s < W; ++s) {
      x[static_cast<size_t>(s)] = model.normalize(pack.windows[t].values[static_cast<size_t>(s)]);
      x[static_cast<size_t>(W + s)] =
          model.normalize(pack.windows[t + 1].values[static_cast<size_t>(s)]);
    }
    Vec out = mlp_forward_cached(model.adjacent_net, x, pair_caches[t]);
    pairs[t] = AdjacentOut{out[0], out[1]};
  }
  std::vector<double> p_adj = adjacent_combined(pairs, n);

  std::vector<Vec> delay_inputs(n);
  for (size_t t = 0; t < n; ++t)
    delay_inputs[t] = delay_features(model, pack.windows, t, pack.run_length[t]);
  RnnCache delay_cache;
  std::vector<Vec> delay_out = rnn_forward_cached(model.delay_net, delay_inputs, delay_cache);

  double loss = 0.0;
  size_t counted = 0;
  std::vector<Vec> noise_dz(n, Vec(2, 0.0));
  std::vector<Vec> pair_dz(pairs.size(), Vec(2, 0.0));
  std::vector<Vec> delay_dz(n, Vec(1, 0.0));

  for (size_t t = pack.payload_from; t < n; ++t) {
    double target = static_cast<double>(pack.bits[t]);
    double pn = clamp_prob(noise_out[t].p);
    double pd = clamp_prob(delay_out[t][0]);
    double pa = clamp_prob(p_adj[t]);
    double ln_n = std::log(pn), ln_d = std::log(pd), ln_a = std::log(pa);
    double fused = sigmoid(model.merge_w[0] * ln_n + model.merge_w[1] * ln_d +
                           model.merge_w[2] * ln_a + model.merge_b);
    loss += loss_value(Loss::Bce, Vec{fused}, Vec{target});
    ++counted;

    double dzf = fused - target;  // pre-sigmoid gradient at the merge
    grads.merge_w[0] += dzf * ln_n;
    grads.merge_w[1] += dzf * ln_d;
    grads.merge_w[2] += dzf * ln_a;
    grads.merge_b += dzf;

    auto unclamped = [](double p) { return p > kProbEps && p < 1.0 - kProbEps; };
    if (solo && switches.noise_on) {
      noise_dz[t][0] += noise_out[t].p - target;
    } else if (unclamped(noise_out[t].p)) {
      double dp = dzf * model.merge_w[0] / pn;
      noise_dz[t][0] += dp * noise_out[t].p * (1.0 - noise_out[t].p);
    }
    if (solo && switches.delay_on) {
      delay_dz[t][0] += delay_out[t][0] - target;
    } else if (unclamped(delay_out[t][0])) {
      double dp = dzf * model.merge_w[1] / pd;
      delay_dz[t][0] += dp * delay_out[t][0] * (1.0 - delay_out[t][0]);
    }

    bool has_left = t > 0 && t - 1 < pairs.size();
    bool has_right = t < pairs.size();
    if (solo && switches.adjacent_on) {
      if (has_right) pair_dz[t][0] += pairs[t].p_left - target;
      if (has_left) pair_dz[t - 1][1] += pairs[t - 1].p_right - target;
    } else {
      double dpa = dzf * model.merge_w[2] / pa;
      if (has_left && has_right) {
        double pl = clamp_prob(pairs[t].p_left);
        double pr = clamp_prob(pairs[t - 1].p_right);
        if (unclamped(pairs[t].p_left)) {
          double dpl = dpa * p_adj[t] / (2.0 * pl);
          pair_dz[t][0] += dpl * pairs[t].p_left * (1.0 - pairs[t].p_left);
        }
        if (unclamped(pairs[t - 1].p_right)) {
          double dpr = dpa * p_adj[t] / (2.0 * pr);
          pair_dz[t - 1][1] += dpr * pairs[t - 1].p_right * (1.0 - pairs[t - 1].p_right);
        }
      } else if (has_right && unclamped(pairs[t].p_left)) {
        pair_dz[t][0] += dpa * pairs[t].p_left * (1.0 - pairs[t].p_left);
      } else if (has_left && unclamped(pairs[t - 1].p_right)) {
        pair_dz[t - 1][1] += dpa * pairs[t - 1].p_right * (1.0 - pairs[t - 1].p_right);
      }
    }

    // Confidence head: does the nst decision agree with the true bit?
    // The gradient stays in the head's own output row so the auxiliary
    // target cannot reshape trunk features out from under the p head.
    int nst_bit = nst_detect(pack.windows[t], pack.state);
    double agree = nst_bit == pack.bits[t] ? 1.0 : 0.0;
    double conf = noise_out[t].confidence;
    loss += confidence_weight * loss_value(Loss::Bce, Vec{conf}, Vec{agree});
    double dzc = confidence_weight * (conf - agree);
    if (dzc != 0.0) {
      size_t last = static_cast<size_t>(model.noise_net.layers()) - 1;
      const Vec& h = noise_caches[t].a[last];
      Mat& gw = grads.noise.w[last];
      for (int c = 0; c < gw.cols; ++c) gw(1, c) += dzc * h[static_cast<size_t>(c)];
      grads.noise.b[last][1] += dzc;
    }
  }

  for (size_t t = 0; t < n; ++t)
    if (noise_dz[t][0] != 0.0)
      mlp_backward(model.noise_net, noise_caches[t], noise_dz[t], grads.noise);
  for (size_t t = 0; t < pairs.size(); ++t)
    if (pair_dz[t][0] != 0.0 || pair_dz[t][1] != 0.0)
      mlp_backward(model.adjacent_net, pair_caches[t], pair_dz[t], grads.adjacent);
  rnn_backward(model.delay_net, delay_cache, delay_dz, grads.delay);

  return {loss, counted};
}

struct BlockLogRow {
  double ln_n = 0.0, ln_d = 0.0, ln_a = 0.0;
  double target = 0.0;
};

/// Frozen-block forward pass: per payload window, the three block
/// log-probabilities plus the true bit, for refitting the merge layer.
inline std::vector<BlockLogRow> collect_block_logs(const UniversalModel& model,
                                                   const std::vector<TracePack>& packs) {
  std::vector<BlockLogRow> rows;
  for (const auto& pack : packs) {
    const size_t n = pack.windows.size();
    std::vector<AdjacentOut> pairs(n > 0 ? n - 1 : 0);
    for (size_t t = 0; t + 1 < n; ++t)
      pairs[t] = adjacent_block_infer(pack.windows[t], pack.windows[t + 1], model);
    std::vector<double> p_adj = adjacent_combined(pairs, n);
    Vec hidden(static_cast<size_t>(model.delay_net.hidden_size()), 0.0);
    for (size_t t = 0; t < n; ++t) {
      double pd = delay_block_infer(delay_features(model, pack.windows, t, pack.run_length[t]),
                                    model, hidden);
      if (t < pack.payload_from) continue;
      NoiseOut no = noise_block_infer(pack.windows[t], model, pack.state);
      BlockLogRow row;
      row.ln_n = std::log(clamp_prob(no.p));
      row.ln_d = std::log(clamp_prob(pd));
      row.ln_a = std::log(clamp_prob(p_adj[t]));
      row.target = static_cast<double>(pack.bits[t]);
      rows.push_back(row);
    }
  }
  return rows;
}

/// Stacking pass: with the blocks frozen, refit the merge layer as a
/// sign-constrained logistic regression over the block log-probabilities of
/// the training split. Disabled inputs are pinned to weight zero so a block
/// whose sharp mistakes outvote the others can be dropped outright.
inline void calibrate_merge(UniversalModel& model, const std::vector<BlockLogRow>& rows,
                            const TrainConfig& opt, std::array<bool, 3> enable) {
  if (rows.empty()) return;
  Vec p{model.merge_w[0], model.merge_w[1], model.merge_w[2], model.merge_b};
  for (size_t i = 0; i < 3; ++i)
    if (!enable[i]) p[i] = 0.0;
  TrainConfig mcfg = opt;
  mcfg.learning_rate = 0.05;
  Adam cal(mcfg);
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (int it = 0; it < 300; ++it) {
    Vec g(4, 0.0);
    for (const auto& r : rows) {
      double fused = sigmoid(p[0] * r.ln_n + p[1] * r.ln_d + p[2] * r.ln_a + p[3]);
      double dz = (fused - r.target) * inv;
      g[0] += dz * r.ln_n;
      g[1] += dz * r.ln_d;
      g[2] += dz * r.ln_a;
      g[3] += dz;
    }
    cal.step(p, g);
    for (size_t i = 0; i < 3; ++i) p[i] = enable[i] ? std::max(0.0, p[i]) : 0.0;
  }
  model.merge_w = Vec{p[0], p[1], p[2]};
  model.merge_b = p[3];
}

inline double payload_ber(const UniversalModel& model, const std::vector<LabeledTrace>& items,
                          const LinkConfig& link);

/// Merge model selection: the cross-entropy refit likes sharp blocks whose
/// rare confident mistakes still veto the fused vote, so the refit variants
/// (full and per-block knockouts) compete on held-out decoding instead.
/// Ties go to the latest candidate, which has fewer live blocks.
inline UniversalModel select_merge(const UniversalModel& model,
                                   const std::vector<TracePack>& packs,
                                   const std::vector<LabeledTrace>& val_items,
                                   const LinkConfig& link, const TrainConfig& opt,
                                   double& best_ber_out) {
  auto rows = collect_block_logs(model, packs);
  UniversalModel best = model;
  double best_ber = payload_ber(model, val_items, link);
  auto consider = [&](std::array<bool, 3> enable) {
    UniversalModel cand = model;
    calibrate_merge(cand, rows, opt, enable);
    double ber = payload_ber(cand, val_items, link);
    if (ber <= best_ber) {
      best_ber = ber;
      best = cand;
    }
  };
  consider({true, true, true});
  consider({true, true, false});
  consider({true, false, true});
  consider({false, true, true});
  consider({true, false, false});
  best_ber_out = best_ber;
  return best;
}

inline double payload_ber(const UniversalModel& model, const std::vector<LabeledTrace>& items,
                          const LinkConfig& link) {
  size_t errors = 0, total = 0;
  for (const auto& item : items) {
    DecodeResult res = decode_at(item.trace, link, model,
                                 std::max(item.trace.origin_sample, 0L));
    auto truth = item.bits.payload();
    size_t n = std::min(truth.size(), res.payload.size());
    for (size_t i = 0; i < n; ++i)
      if (res.payload[i] != truth[i]) ++errors;
    total += n;
  }
  return total > 0 ? static_cast<double>(errors) / static_cast<double>(total) : 0.0;
}

}  // namespace detail

/// Joint phase-scheduled training. All blocks run forward every phase; a
/// block's parameters update only while its switch is on. The merge layer
/// trains throughout, with w projected back to >= 0.
inline UniversalTrainResult train_universal(UniversalModel& model,
                                            const std::vector<LabeledTrace>& dataset,
                                            const LinkConfig& link,
                                            const UniversalTrainConfig& cfg) {
  model.validate();
  cfg.opt.validate();
  if (dataset.empty()) throw std::invalid_argument("train_universal: empty dataset");
  if (cfg.schedule.empty()) throw std::invalid_argument("train_universal: empty schedule");
  for (const auto& phase : cfg.schedule) phase.switches.validate();
  for (const auto& item : dataset) {
    if (item.bits.pilot_len != static_cast<int>(kPilot.size()))
      throw std::invalid_argument("train_universal: items must carry the pilot header");
  }

  // Input standardization from the whole dataset.
  {
    double sum = 0.0, sq = 0.0;
    size_t count = 0;
    for (const auto& item : dataset)
      for (double v : item.trace.samples) {
        sum += v;
        sq += v * v;
        ++count;
      }
    model.input_mean = sum / static_cast<double>(count);
    model.input_std =
        std::sqrt(std::max(sq / static_cast<double>(count) - model.input_mean * model.input_mean,
                           1e-12));
  }

  size_t val_n = static_cast<size_t>(std::floor(cfg.validation_fraction *
                                                static_cast<double>(dataset.size())));
  std::vector<LabeledTrace> train_items(dataset.begin(), dataset.end() - static_cast<long>(val_n));
  std::vector<LabeledTrace> val_items(dataset.end() - static_cast<long>(val_n), dataset.end());
  if (val_items.empty()) val_items = train_items;

  std::vector<detail::TracePack> packs;
  for (const auto& item : train_items) packs.push_back(detail::pack_trace(item, link, model));

  Adam opt_noise(cfg.opt), opt_delay(cfg.opt), opt_adjacent(cfg.opt), opt_merge(cfg.opt);
  UniversalTrainResult result;
  UniversalModel best = model;
  double best_ber = detail::payload_ber(model, val_items, link);

  // Traces per parameter update; everything in one batch when batch_size
  // covers the dataset.
  const size_t batch = std::min<size_t>(
      packs.size(), static_cast<size_t>(std::max(cfg.opt.batch_size, 1)));
  Rng shuffle_rng = make_rng(derive_seed(cfg.opt.seed, 0x5EED2ULL));
  std::vector<size_t> order(packs.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (const PhaseConfig& phase : cfg.schedule) {
    std::vector<double> curve;
    double prev_ber = std::numeric_limits<double>::infinity();
    for (int epoch = 0; epoch < phase.max_epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      double total = 0.0;
      size_t counted = 0;
      for (size_t at = 0; at < order.size(); at += batch) {
        detail::JointGrads grads;
        grads.noise = zero_grads(model.noise_net);
        grads.delay = zero_grads(model.delay_net);
        grads.adjacent = zero_grads(model.adjacent_net);
        double batch_loss = 0.0;
        size_t batch_bits = 0;
        for (size_t b = at; b < std::min(at + batch, order.size()); ++b) {
          auto [loss, bits] = detail::accumulate_trace(model, packs[order[b]],
                                                       cfg.confidence_weight, phase.switches,
                                                       grads);
          batch_loss += loss;
          batch_bits += bits;
        }
        if (batch_bits == 0) throw std::invalid_argument("train_universal: no payload bits in loss");
        total += batch_loss;
        counted += batch_bits;
        double inv = 1.0 / static_cast<double>(batch_bits);

        if (phase.switches.noise_on) {
          Vec p = flatten(model.noise_net);
          Vec g = flatten(grads.noise);
          for (double& x : g) x *= inv;
          clip_to_norm(g, cfg.opt.gradient_clip_norm);
          opt_noise.step(p, g);
          unflatten(p, model.noise_net);
        }
        if (phase.switches.delay_on) {
          Vec p = flatten(model.delay_net);
          Vec g = flatten(grads.delay);
          for (double& x : g) x *= inv;
          clip_to_norm(g, cfg.opt.gradient_clip_norm);
          opt_delay.step(p, g);
          unflatten(p, model.delay_net);
        }
        if (phase.switches.adjacent_on) {
          Vec p = flatten(model.adjacent_net);
          Vec g = flatten(grads.adjacent);
          for (double& x : g) x *= inv;
          clip_to_norm(g, cfg.opt.gradient_clip_norm);
          opt_adjacent.step(p, g);
          unflatten(p, model.adjacent_net);
        }
        {
          // A frozen block keeps its merge weight too: against a frozen
          // constant input the weight would only absorb bias drift, and a
          // weight parked at zero would cut that block's gradient off for
          // every later phase.
          bool on[3] = {phase.switches.noise_on, phase.switches.delay_on,
                        phase.switches.adjacent_on};
          Vec p{model.merge_w[0], model.merge_w[1], model.merge_w[2], model.merge_b};
          Vec g{on[0] ? grads.merge_w[0] * inv : 0.0, on[1] ? grads.merge_w[1] * inv : 0.0,
                on[2] ? grads.merge_w[2] * inv : 0.0, grads.merge_b * inv};
          opt_merge.step(p, g);
          for (size_t i = 0; i < 3; ++i)
            model.merge_w[i] = on[i] ? std::max(0.0, p[i]) : model.merge_w[i];
          model.merge_b = p[3];
        }
      }

      double mean_loss = total / static_cast<double>(counted);
      check_finite_loss(mean_loss, epoch);
      curve.push_back(mean_loss);

      double ber = detail::payload_ber(model, val_items, link);
      result.validation_ber.push_back(ber);
      if (prev_ber - ber < cfg.min_improvement && epoch >= 4) break;
      prev_ber = std::min(prev_ber, ber);
    }
    result.phase_loss.push_back(std::move(curve));
    // Snapshot at phase boundaries only, judging each candidate with a
    // freshly selected merge: a block trained this phase may look bad
    // through stale merge weights yet add real value once reweighted.
    double cand_ber = 1.0;
    UniversalModel cand = detail::select_merge(model, packs, val_items, link, cfg.opt, cand_ber);
    if (cand_ber <= best_ber) {
      best_ber = cand_ber;
      best = cand;
    }
  }
  if (cfg.keep_best) {
    model = best;
    result.best_validation_ber = best_ber;
  } else {
    double final_ber = 1.0;
    model = detail::select_merge(model, packs, val_items, link, cfg.opt, final_ber);
    result.best_validation_ber = final_ber;
  }
  return result;
}

}  // namespace mclink
