#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mclink/framing.hpp"
#include "mclink/model_io.hpp"
#include "mclink/nn.hpp"
#include "mclink/train.hpp"

namespace mclink {

// ---------------------------------------------------------------------------
// Naive successive thresholding
// ---------------------------------------------------------------------------

/// Rise of a window: its maximum over its first sample.
inline double window_rise(const SymbolWindow& w) {
  if (w.values.empty()) throw std::invalid_argument("window_rise: empty window");
  return *std::max_element(w.values.begin(), w.values.end()) - w.values.front();
}

struct ThresholdState {
  double eta = 0.0;
  double pilot_mean_rise = 0.0;

  double threshold() const { return eta * pilot_mean_rise; }
};

/// Calibrates the threshold from the four bit-1 pilot windows: eta times the
/// mean of their rises.
inline ThresholdState nst_calibrate(const std::vector<SymbolWindow>& pilot_windows,
                                    double eta) {
  if (pilot_windows.size() != 4)
    throw std::invalid_argument("nst_calibrate: exactly 4 pilot windows required");
  if (eta <= 0.0) throw std::invalid_argument("nst_calibrate: eta must be positive");
  double sum = 0.0;
  for (const auto& w : pilot_windows) sum += window_rise(w);
  return ThresholdState{eta, sum / 4.0};
}

/// Decides 1 iff the window rise exceeds the calibrated threshold.
inline int nst_detect(const SymbolWindow& w, const ThresholdState& state) {
  return window_rise(w) > state.threshold() ? 1 : 0;
}

inline std::vector<double> default_eta_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 16; ++i) grid.push_back(0.1 + 0.05 * i);
  return grid;
}

/// One labeled transmission for threshold tuning: all windows (pilot first)
/// plus the true bits they carry.
struct NstTrainingItem {
  std::vector<SymbolWindow> windows;
  std::vector<int> bits;
};

inline size_t nst_errors(const NstTrainingItem& item, double eta) {
  std::vector<SymbolWindow> pilot(item.windows.begin(), item.windows.begin() + 4);
  ThresholdState state = nst_calibrate(pilot, eta);
  size_t errors = 0;
  for (size_t i = 0; i < item.windows.size(); ++i)
    if (nst_detect(item.windows[i], state) != item.bits[i]) ++errors;
  return errors;
}

/// Grid search for the eta minimizing total bit errors across the training
/// set; ties break toward the smaller eta.
inline double nst_tune(const std::vector<NstTrainingItem>& training,
                       const std::vector<double>& eta_grid) {
  if (training.empty() || eta_grid.empty())
    throw std::invalid_argument("nst_tune: empty training set or grid");
  for (const auto& item : training) {
    if (item.windows.size() < 4 || item.windows.size() != item.bits.size())
      throw std::invalid_argument("nst_tune: item needs >= 4 windows and matching bits");
  }
  std::vector<double> grid = eta_grid;
  std::sort(grid.begin(), grid.end());
  double best_eta = grid.front();
  size_t best_errors = std::numeric_limits<size_t>::max();
  for (double eta : grid) {
    size_t errors = 0;
    for (const auto& item : training) errors += nst_errors(item, eta);
    if (errors < best_errors) {
      best_errors = errors;
      best_eta = eta;
    }
  }
  return best_eta;
}

// ---------------------------------------------------------------------------
// Spike classification and repair
// ---------------------------------------------------------------------------

/// A detected vibration spike: samples (start, end) exclusive of endpoints
/// are corrupted. height is the interior max above the larger endpoint;
/// sharpness is the drop achieved within a few samples of the peak.
struct SpikeEvent {
  int start = 0;
  int end = 0;
  double height = 0.0;
  double sharpness = 0.0;
};

inline void to_json(nlohmann::json& j, const SpikeEvent& e) {
  j = {{"start", e.start}, {"end", e.end}, {"height", e.height}, {"sharpness", e.sharpness}};
}

inline void from_json(const nlohmann::json& j, SpikeEvent& e) {
  e.start = j.at("start").get<int>();
  e.end = j.at("end").get<int>();
  e.height = j.value("height", 0.0);
  e.sharpness = j.value("sharpness", 0.0);
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty input");
  size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
  return 0.5 * (v[mid - 1] + hi);
}

inline double median_abs_deviation(const std::vector<double>& v) {
  double med = median(v);
  std::vector<double> dev(v.size());
  for (size_t i = 0; i < v.size(); ++i) dev[i] = std::abs(v[i] - med);
  return median(dev);
}

struct SpikeOptions {
  double height_floor = -1.0;  // < 0: auto, 3x the pilot-span MAD
  int max_half_width = 4;      // samples searched on each side of a peak
  int max_rise = 3;            // samples within which a true spike collapses
  double sharpness_ratio = 0.5;  // required sharpness as a fraction of the floor
};

/// Scans for sharp interior maxima: sub-symbol-interval segments whose peak
/// exceeds both endpoints by more than the height floor and collapses within
/// max_rise samples on both sides. Injection pulses rise over a full
/// rise_time and fail the sharpness gate; vibration spikes pass it.
inline std::vector<SpikeEvent> find_spikes(const Trace& trace, const LinkConfig& link,
                                           const SpikeOptions& opt = {}) {
  const int n = trace.size();
  if (n < 3) return {};
  const int W = link.window_len();

  double floor_v = opt.height_floor;
  if (floor_v < 0.0) {
    long origin = trace.origin_sample >= 0 ? trace.origin_sample : 0;
    long span_end = std::min<long>(n, origin + 5L * W);
    if (span_end - origin < 3) {
      origin = 0;
      span_end = n;
    }
    std::vector<double> pilot_span(trace.samples.begin() + origin,
                                   trace.samples.begin() + span_end);
    floor_v = 3.0 * median_abs_deviation(pilot_span);
  }

  int half = std::min(opt.max_half_width, (W - 1) / 2);
  half = std::max(half, 1);

  std::vector<SpikeEvent> events;
  for (int m = 1; m + 1 < n; ++m) {
    if (trace[m] < trace[m - 1] || trace[m] < trace[m + 1]) continue;
    int i = std::max(0, m - half);
    int j = std::min(n - 1, m + half);
    if (j - i >= W) continue;
    double interior_max = trace[m];
    double height = interior_max - std::max(trace[i], trace[j]);
    if (height <= floor_v) continue;
    int li = std::max(i, m - opt.max_rise);
    int rj = std::min(j, m + opt.max_rise);
    double sharp = std::min(trace[m] - trace[li], trace[m] - trace[rj]);
    if (sharp <= floor_v * opt.sharpness_ratio) continue;
    if (!events.empty() && i <= events.back().end) {
      SpikeEvent& prev = events.back();
      if (j - prev.start < W) {
        prev.end = j;
        prev.height = std::max(prev.height, height);
        prev.sharpness = std::max(prev.sharpness, sharp);
        continue;
      }
      continue;
    }
    events.push_back(SpikeEvent{i, j, height, sharp});
  }
  return events;
}

/// Replaces the interior of each event with the straight line between its
/// endpoints; everything else is untouched.
inline Trace repair_spikes(const Trace& trace, const std::vector<SpikeEvent>& events) {
  Trace out = trace;
  int prev_end = -1;
  for (const auto& e : events) {
    if (e.start < 0 || e.end >= trace.size() || e.end <= e.start)
      throw std::invalid_argument("repair_spikes: event out of bounds");
    if (e.start < prev_end) throw std::invalid_argument("repair_spikes: overlapping events");
    prev_end = e.end;
    double yi = trace[e.start];
    double yj = trace[e.end];
    for (int k = e.start + 1; k < e.end; ++k)
      out[k] = yi + static_cast<double>(k - e.start) / (e.end - e.start) * (yj - yi);
  }
  return out;
}

// ---------------------------------------------------------------------------
// ANN bit detector (one model per symbol interval)
// ---------------------------------------------------------------------------

/// MLP bit detector over one window: input is the raw window plus its first
/// sample as a context feature, standardized by train-time statistics.
struct AnnDetector {
  Mlp net;  // (W+1) -> 10 -> 10 -> 10 -> 1, sigmoid throughout
  double input_mean = 0.0;
  double input_std = 1.0;

  Vec features(const SymbolWindow& w) const {
    Vec x = w.values;
    x.push_back(w.values.front());
    for (double& v : x) v = (v - input_mean) / input_std;
    return x;
  }
};

inline void to_json(nlohmann::json& j, const AnnDetector& d) {
  j = {{"kind", "ann_detector"},
       {"net", d.net},
       {"input_mean", d.input_mean},
       {"input_std", d.input_std}};
}

inline void from_json(const nlohmann::json& j, AnnDetector& d) {
  if (j.value("kind", "") != "ann_detector")
    throw std::invalid_argument("model kind is not 'ann_detector'");
  d.net = j.at("net").get<Mlp>();
  d.input_mean = j.value("input_mean", 0.0);
  d.input_std = j.value("input_std", 1.0);
}

/// Probability that the window carries a 1; decide at 0.5.
inline double ann_detect(const SymbolWindow& w, const AnnDetector& model) {
  return mlp_forward(model.net, model.features(w)).front();
}

/// Labeled windows for detector training.
struct WindowDataset {
  std::vector<SymbolWindow> windows;
  std::vector<int> labels;
};

inline AnnDetector train_ann_detector(const WindowDataset& ds, const TrainConfig& cfg) {
  if (ds.windows.empty() || ds.windows.size() != ds.labels.size())
    throw std::invalid_argument("train_ann_detector: bad dataset");
  int W = static_cast<int>(ds.windows.front().values.size());

  AnnDetector d;
  double sum = 0.0, sq = 0.0;
  size_t count = 0;
  for (const auto& w : ds.windows) {
    for (double v : w.values) {
      sum += v;
      sq += v * v;
      ++count;
    }
  }
  d.input_mean = sum / static_cast<double>(count);
  d.input_std = std::sqrt(std::max(sq / static_cast<double>(count) - d.input_mean * d.input_mean, 1e-12));

  d.net = make_mlp({W + 1, 10, 10, 10, 1}, Act::Sigmoid, Act::Sigmoid, cfg.seed);
  std::vector<Example> data;
  for (size_t i = 0; i < ds.windows.size(); ++i)
    data.push_back({d.features(ds.windows[i]), Vec{static_cast<double>(ds.labels[i])}});
  train_mlp(d.net, data, Loss::Bce, cfg);
  return d;
}

}  // namespace mclink
