#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mclink/bits.hpp"
#include "mclink/channel.hpp"
#include "mclink/config.hpp"
#include "mclink/model_io.hpp"
#include "mclink/nn.hpp"
#include "mclink/rng.hpp"
#include "mclink/trace.hpp"
#include "mclink/train.hpp"

namespace mclink {

/// One bit's worth of samples.
struct SymbolWindow {
  Vec values;
  int index = 0;
};

/// Splits trace[origin..] into consecutive windows of f_p*t_s samples,
/// dropping any incomplete tail.
inline std::vector<SymbolWindow> segment(const Trace& trace, const LinkConfig& link,
                                         long origin) {
  if (origin < 0 || origin > trace.size())
    throw std::invalid_argument("segment: origin out of range");
  const int W = link.window_len();
  std::vector<SymbolWindow> windows;
  long k = (trace.size() - origin) / W;
  for (long i = 0; i < k; ++i) {
    SymbolWindow win;
    win.index = static_cast<int>(i);
    win.values.assign(trace.samples.begin() + origin + i * W,
                      trace.samples.begin() + origin + (i + 1) * W);
    windows.push_back(std::move(win));
  }
  return windows;
}

struct NoPilotError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OriginOptions {
  ChannelModel template_channel{};  // kernel used to build the pilot template
  double min_correlation = 0.4;
};

/// Matched-filter pilot search: slides a noiseless four-pulse pilot template
/// over the trace and returns the index with the highest Pearson correlation.
/// Throws NoPilotError when nothing correlates above the confidence floor.
inline long detect_origin(const Trace& trace, const LinkConfig& link,
                          const OriginOptions& opt = {}) {
  const int W = link.window_len();
  const long span = 5L * W;
  if (trace.size() < span)
    throw std::invalid_argument("detect_origin: trace shorter than the pilot span");

  ChannelModel tc = opt.template_channel.noiseless();
  tc.baseline = 0.0;
  tc.drift_slope = 0.0;
  Trace tmpl = perfect_trace(BitSequence(std::vector<int>(kPilot.begin(), kPilot.end()), 5),
                             link, tc);

  long best = -1;
  double best_score = -2.0;
  Vec seg(static_cast<size_t>(span));
  for (long o = 0; o + span <= trace.size(); ++o) {
    std::copy(trace.samples.begin() + o, trace.samples.begin() + o + span, seg.begin());
    double score = pearson(seg, tmpl.samples);
    if (std::isfinite(score) && score > best_score) {
      best_score = score;
      best = o;
    }
  }
  if (best < 0 || best_score < opt.min_correlation)
    throw NoPilotError("no pilot found (best correlation " + std::to_string(best_score) + ")");
  return best;
}

// ---------------------------------------------------------------------------
// Symbol-interval estimation from the first 10 s of pilot response
// ---------------------------------------------------------------------------

inline constexpr int kPilotSpanSamples = 80;  // 10 s at 8 Hz

/// 80-sample MLP classifier over {0.5, 1, 2, 3} s. Inputs are standardized
/// per trace so the decision rides on shape, not on baseline level.
struct IntervalClassifier {
  Mlp net;  // 80 -> 32 -> 4, softmax
};

inline void to_json(nlohmann::json& j, const IntervalClassifier& c) {
  j = {{"kind", "interval_classifier"}, {"net", c.net}};
}

inline void from_json(const nlohmann::json& j, IntervalClassifier& c) {
  if (j.value("kind", "") != "interval_classifier")
    throw std::invalid_argument("model kind is not 'interval_classifier'");
  c.net = j.at("net").get<Mlp>();
}

inline Vec standardize(const Vec& x) {
  double mu = mean(x);
  double sd = stddev(x);
  if (sd < 1e-12) sd = 1.0;
  Vec out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mu) / sd;
  return out;
}

inline int interval_class_index(double t_s) {
  for (size_t i = 0; i < kSymbolIntervals.size(); ++i)
    if (std::abs(kSymbolIntervals[i] - t_s) < 1e-9) return static_cast<int>(i);
  throw std::invalid_argument("unsupported symbol interval");
}

/// Picks the symbol interval for a pilot response spanning the first 10 s.
inline double estimate_symbol_interval(const Trace& pilot_trace,
                                       const IntervalClassifier& model) {
  if (pilot_trace.size() != kPilotSpanSamples)
    throw std::invalid_argument("estimate_symbol_interval: input must be exactly 80 samples");
  Vec probs = mlp_forward(model.net, standardize(pilot_trace.samples));
  int best = 0;
  for (size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[static_cast<size_t>(best)]) best = static_cast<int>(i);
  return kSymbolIntervals[static_cast<size_t>(best)];
}

/// Labeled pilot spans for classifier training/evaluation.
struct PilotDataset {
  std::vector<Example> examples;  // standardized 80-sample input, one-hot target
};

inline Example make_pilot_example(const Trace& trace, long origin, int class_index) {
  if (trace.size() - origin < kPilotSpanSamples)
    throw std::invalid_argument("make_pilot_example: trace too short");
  Vec x(trace.samples.begin() + origin, trace.samples.begin() + origin + kPilotSpanSamples);
  Vec t(kSymbolIntervals.size(), 0.0);
  t[static_cast<size_t>(class_index)] = 1.0;
  return {standardize(x), t};
}

/// Simulates n noisy pilot spans per interval class, each with a fresh
/// payload, channel drift redraw, and seed. Adds a handful of noiseless
/// exemplars per class so perfect inputs stay inside the training
/// distribution.
inline PilotDataset make_pilot_dataset(const ChannelPreset& preset, int n_per_class,
                                       uint64_t seed) {
  PilotDataset ds;
  for (size_t ci = 0; ci < kSymbolIntervals.size(); ++ci) {
    LinkConfig link = make_link(kSymbolIntervals[ci]);
    for (int k = 0; k < n_per_class; ++k) {
      uint64_t trial = derive_seed(seed, ci, static_cast<uint64_t>(k));
      ChannelModel chan = preset.instantiate(link, trial);
      BitSequence bits = with_pilot(random_payload(16, derive_seed(trial, 7)));
      Trace tr = simulate_trace(bits, link, chan, trial);
      ds.examples.push_back(make_pilot_example(tr, 0, static_cast<int>(ci)));
    }
    ChannelModel clean = preset.instantiate(link);
    for (int k = 0; k < 4; ++k) {
      std::vector<int> payload(16, 0);
      if (k > 0) payload = random_payload(16, derive_seed(seed, ci, 9000 + static_cast<uint64_t>(k)));
      Trace tr = perfect_trace(with_pilot(payload), link, clean);
      ds.examples.push_back(make_pilot_example(tr, 0, static_cast<int>(ci)));
    }
  }
  return ds;
}

inline IntervalClassifier train_interval_classifier(const PilotDataset& ds,
                                                    const TrainConfig& cfg) {
  IntervalClassifier c;
  c.net = make_mlp({kPilotSpanSamples, 32, 4}, Act::Sigmoid, Act::Softmax, cfg.seed);
  train_mlp(c.net, ds.examples, Loss::Ce, cfg);
  return c;
}

}  // namespace mclink
