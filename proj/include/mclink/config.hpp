#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "mclink/rng.hpp"

namespace mclink {

/// The symbol intervals the testbed supports, in seconds.
inline constexpr std::array<double, 4> kSymbolIntervals = {0.5, 1.0, 2.0, 3.0};

inline bool is_supported_interval(double t_s) {
  for (double v : kSymbolIntervals)
    if (std::abs(v - t_s) < 1e-9) return true;
  return false;
}

/// Link-level parameters of one transmission: OOK at symbol interval t_s,
/// glucose injected for t_w seconds per bit-1, probed at f_p Hz.
struct LinkConfig {
  double t_s = 1.0;   // symbol interval, s
  double t_w = 0.5;   // injection duration, s
  double v = 0.5;     // carrier drift rate, ml/min
  double r = 2.0;     // glucose injection rate, ml/min
  double f_p = 8.0;   // probing frequency, Hz

  int window_len() const {
    double w = f_p * t_s;
    int wi = static_cast<int>(std::lround(w));
    if (wi <= 0 || std::abs(w - wi) > 1e-9)
      throw std::invalid_argument("LinkConfig: f_p * t_s must be a positive integer");
    return wi;
  }

  void validate() const {
    if (!is_supported_interval(t_s)) throw std::invalid_argument("LinkConfig: t_s must be one of {0.5, 1, 2, 3} s");
    if (t_w <= 0.0 || t_w > t_s + 1e-12) throw std::invalid_argument("LinkConfig: need 0 < t_w <= t_s");
    if (v <= 0.0 || r <= 0.0) throw std::invalid_argument("LinkConfig: flow rates must be positive");
    if (f_p <= 0.0) throw std::invalid_argument("LinkConfig: f_p must be positive");
    window_len();
  }
};

inline LinkConfig make_link(double t_s, double f_p = 8.0) {
  LinkConfig link;
  link.t_s = t_s;
  link.t_w = t_s / 2.0;
  link.f_p = f_p;
  link.validate();
  return link;
}

/// Phenomenological receiver-response model. A bit-1 injection produces a
/// pulse that rises linearly over rise_time and then decays exponentially
/// with time constant decay_time. Pulses are confined to their own symbol
/// window; what crosses a window boundary is the residual, a fraction
/// isi_tap of the signal level at the boundary, reduced by wash_gain when
/// the previous slot carried an injection (frequent injections flush the
/// channel). The baseline declines at drift_slope and wanders as a Gaussian
/// random walk; vibration spikes arrive as a Poisson process.
struct ChannelModel {
  double pulse_amplitude = 1.0;   // response units per bit-1
  double rise_time = 1.0;         // s, sensor response (<= 5)
  double decay_time = 1.5;        // s
  double isi_tap = 0.3;           // residual fraction carried across a boundary
  double wash_gain = 0.1;         // isi_tap reduction after a bit-1
  double baseline = 7.0;          // resting response level
  double drift_slope = -0.002;    // response units / s
  double drift_walk_std = 0.0;    // response units / sqrt(s)
  double spike_rate = 0.0;        // events / s
  double spike_height_range = 0.0;  // max spike height, response units
  int spike_width_range = 5;        // max spike base width, samples
  double delay_jitter_std = 0.0;  // s, injection/reception misalignment
  double sensor_noise_std = 0.0;  // response units

  void validate() const {
    if (pulse_amplitude < 0.0) throw std::invalid_argument("ChannelModel: pulse_amplitude < 0");
    if (rise_time <= 0.0 || rise_time > 5.0) throw std::invalid_argument("ChannelModel: need 0 < rise_time <= 5 s");
    if (decay_time <= 0.0) throw std::invalid_argument("ChannelModel: decay_time must be positive");
    if (isi_tap < 0.0 || isi_tap >= 1.0) throw std::invalid_argument("ChannelModel: need 0 <= isi_tap < 1");
    if (wash_gain < 0.0 || wash_gain > isi_tap) throw std::invalid_argument("ChannelModel: need 0 <= wash_gain <= isi_tap");
    if (drift_walk_std < 0.0 || spike_rate < 0.0 || spike_height_range < 0.0 ||
        delay_jitter_std < 0.0 || sensor_noise_std < 0.0)
      throw std::invalid_argument("ChannelModel: std/rate fields must be >= 0");
    if (spike_width_range < 2) throw std::invalid_argument("ChannelModel: spike_width_range must be >= 2 samples");
  }

  /// Copy with all stochastic terms removed.
  ChannelModel noiseless() const {
    ChannelModel c = *this;
    c.drift_walk_std = 0.0;
    c.spike_rate = 0.0;
    c.delay_jitter_std = 0.0;
    c.sensor_noise_std = 0.0;
    return c;
  }
};

inline void to_json(nlohmann::json& j, const LinkConfig& c) {
  j = {{"t_s", c.t_s}, {"t_w", c.t_w}, {"v", c.v}, {"r", c.r}, {"f_p", c.f_p}};
}

inline void from_json(const nlohmann::json& j, LinkConfig& c) {
  c.t_s = j.at("t_s").get<double>();
  c.t_w = j.at("t_w").get<double>();
  c.v = j.value("v", 0.5);
  c.r = j.value("r", 2.0);
  c.f_p = j.value("f_p", 8.0);
}

inline void to_json(nlohmann::json& j, const ChannelModel& c) {
  j = {{"pulse_amplitude", c.pulse_amplitude},
       {"rise_time", c.rise_time},
       {"decay_time", c.decay_time},
       {"isi_tap", c.isi_tap},
       {"wash_gain", c.wash_gain},
       {"baseline", c.baseline},
       {"drift_slope", c.drift_slope},
       {"drift_walk_std", c.drift_walk_std},
       {"spike_rate", c.spike_rate},
       {"spike_height_range", c.spike_height_range},
       {"spike_width_range", c.spike_width_range},
       {"delay_jitter_std", c.delay_jitter_std},
       {"sensor_noise_std", c.sensor_noise_std}};
}

inline void from_json(const nlohmann::json& j, ChannelModel& c) {
  ChannelModel d;
  c.pulse_amplitude = j.value("pulse_amplitude", d.pulse_amplitude);
  c.rise_time = j.value("rise_time", d.rise_time);
  c.decay_time = j.value("decay_time", d.decay_time);
  c.isi_tap = j.value("isi_tap", d.isi_tap);
  c.wash_gain = j.value("wash_gain", d.wash_gain);
  c.baseline = j.value("baseline", d.baseline);
  c.drift_slope = j.value("drift_slope", d.drift_slope);
  c.drift_walk_std = j.value("drift_walk_std", d.drift_walk_std);
  c.spike_rate = j.value("spike_rate", d.spike_rate);
  c.spike_height_range = j.value("spike_height_range", d.spike_height_range);
  c.spike_width_range = j.value("spike_width_range", d.spike_width_range);
  c.delay_jitter_std = j.value("delay_jitter_std", d.delay_jitter_std);
  c.sensor_noise_std = j.value("sensor_noise_std", d.sensor_noise_std);
}

/// A named channel calibration loaded from a JSON config file. Flow rates
/// scale the base parameters relative to the reference pair: injection rate
/// grows the pulse, drift rate shortens the decay. Per-trial drift redraws
/// model day-to-day chip replacement.
struct ChannelPreset {
  std::string name;
  ChannelModel channel;
  double flow_ref_v = 0.5;
  double flow_ref_r = 2.0;
  double drift_slope_min = 0.0;  // per-trial redraw range; both 0 disables
  double drift_slope_max = 0.0;

  ChannelModel instantiate(const LinkConfig& link) const {
    ChannelModel c = channel;
    c.pulse_amplitude *= link.r / flow_ref_r;
    c.decay_time *= flow_ref_v / link.v;
    c.validate();
    return c;
  }

  /// Trial-specific variant: flow scaling plus a drift redraw.
  ChannelModel instantiate(const LinkConfig& link, uint64_t trial_seed) const {
    ChannelModel c = instantiate(link);
    if (drift_slope_max > drift_slope_min) {
      Rng rng = make_rng(derive_seed(trial_seed, 0xD21F7ULL));
      c.drift_slope = uniform(rng, drift_slope_min, drift_slope_max);
    }
    return c;
  }
};

inline void to_json(nlohmann::json& j, const ChannelPreset& p) {
  j = {{"name", p.name},
       {"channel", p.channel},
       {"flow_reference", {{"v", p.flow_ref_v}, {"r", p.flow_ref_r}}},
       {"trial_drift_slope_range", {p.drift_slope_min, p.drift_slope_max}}};
}

inline void from_json(const nlohmann::json& j, ChannelPreset& p) {
  p.name = j.value("name", "unnamed");
  p.channel = j.at("channel").get<ChannelModel>();
  if (j.contains("flow_reference")) {
    p.flow_ref_v = j["flow_reference"].value("v", 0.5);
    p.flow_ref_r = j["flow_reference"].value("r", 2.0);
  }
  if (j.contains("trial_drift_slope_range")) {
    p.drift_slope_min = j["trial_drift_slope_range"].at(0).get<double>();
    p.drift_slope_max = j["trial_drift_slope_range"].at(1).get<double>();
  }
  p.channel.validate();
}

}  // namespace mclink
