#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "mclink/bits.hpp"
#include "mclink/config.hpp"
#include "mclink/trace.hpp"

namespace mclink {

/// Response of one injection, tau seconds after its start: linear rise to
/// pulse_amplitude over rise_time, then exponential decay.
inline double pulse_kernel(const ChannelModel& chan, double tau) {
  if (tau < 0.0) return 0.0;
  if (tau < chan.rise_time) return chan.pulse_amplitude * tau / chan.rise_time;
  return chan.pulse_amplitude * std::exp(-(tau - chan.rise_time) / chan.decay_time);
}

/// Largest |injection jitter| the simulator will produce.
inline double max_jitter(const LinkConfig& link, const ChannelModel& chan) {
  return std::min(3.0 * chan.delay_jitter_std, 0.45 * link.t_s);
}

namespace detail {

// RNG stream ids; every stochastic term draws from its own substream so
// that toggling one term never perturbs the others.
inline constexpr uint64_t kStreamJitter = 1;
inline constexpr uint64_t kStreamWalk = 2;
inline constexpr uint64_t kStreamSpikes = 3;
inline constexpr uint64_t kStreamSensor = 4;

inline void add_spikes(std::vector<double>& samples, const ChannelModel& chan,
                       double f_p, uint64_t seed) {
  if (chan.spike_rate <= 0.0 || chan.spike_height_range <= 0.0) return;
  Rng rng = make_rng(derive_seed(seed, kStreamSpikes));
  const int n = static_cast<int>(samples.size());
  double duration = n / f_p;
  std::poisson_distribution<int> count_dist(chan.spike_rate * duration);
  int count = count_dist(rng);
  for (int s = 0; s < count; ++s) {
    int peak = uniform_int(rng, 0, n - 1);
    double height = uniform(rng, 0.3, 1.0) * chan.spike_height_range;
    int width = uniform_int(rng, 2, chan.spike_width_range);
    double half = width / 2.0;
    for (int k = peak - width / 2; k <= peak + width / 2; ++k) {
      if (k < 0 || k >= n) continue;
      double frac = 1.0 - std::abs(k - peak) / half;
      if (frac > 0.0) samples[static_cast<size_t>(k)] += height * frac;
    }
  }
}

}  // namespace detail

/// Simulates the receiver response to an OOK transmission.
///
/// Sample k is taken at time k/f_p; the first pilot window starts at sample
/// lead_in (time origin of the transmission). Each bit-1 launches a pulse at
/// its window start plus a clamped jitter draw; the pulse is evaluated up to
/// the end of its own window. What survives a window boundary is the
/// residual: isi_tap times the signal level at the boundary, the tap reduced
/// by wash_gain when that window carried an injection. Residuals decay with
/// decay_time. On top of the signal sit the baseline with its linear drift
/// and random walk, Poisson spikes, and white sensor noise.
inline Trace simulate_trace(const BitSequence& bits, const LinkConfig& link,
                            const ChannelModel& chan, uint64_t seed,
                            int lead_in = 0, int lead_out = 0) {
  bits.validate();
  link.validate();
  chan.validate();
  if (bits.empty()) throw std::invalid_argument("simulate_trace: empty bit sequence");
  if (lead_in < 0 || lead_out < 0) throw std::invalid_argument("simulate_trace: negative padding");

  const int W = link.window_len();
  const int nbits = static_cast<int>(bits.size());
  const int n = lead_in + W * nbits + lead_out;
  const double dt = 1.0 / link.f_p;
  const double t_origin = lead_in * dt;
  const double jcap = max_jitter(link, chan);

  // Pulse start time per bit (absolute seconds), NaN when bit is 0.
  std::vector<double> start(static_cast<size_t>(nbits),
                            std::numeric_limits<double>::quiet_NaN());
  for (int i = 0; i < nbits; ++i) {
    if (bits[i] != 1) continue;
    Rng jr = make_rng(derive_seed(seed, detail::kStreamJitter, static_cast<uint64_t>(i)));
    double j = std::clamp(normal(jr, chan.delay_jitter_std), -jcap, jcap);
    start[static_cast<size_t>(i)] = t_origin + i * link.t_s + j;
  }

  // Residual level entering each window (value at the window-start instant).
  std::vector<double> residual(static_cast<size_t>(nbits) + 1, 0.0);
  const double boundary_decay = std::exp(-link.t_s / chan.decay_time);
  for (int i = 0; i < nbits; ++i) {
    double end_level = residual[static_cast<size_t>(i)] * boundary_decay;
    if (bits[i] == 1) {
      double wend = t_origin + (i + 1) * link.t_s;
      end_level += pulse_kernel(chan, wend - start[static_cast<size_t>(i)]);
    }
    double tap = bits[i] == 1 ? std::max(0.0, chan.isi_tap - chan.wash_gain) : chan.isi_tap;
    residual[static_cast<size_t>(i) + 1] = tap * end_level;
  }

  Trace trace;
  trace.f_p = link.f_p;
  trace.origin_sample = lead_in;
  trace.samples.assign(static_cast<size_t>(n), 0.0);

  for (int k = 0; k < n; ++k) {
    double t = k * dt;
    double y = chan.baseline + chan.drift_slope * t;
    double rel = t - t_origin;
    if (rel >= 0.0) {
      int i = std::min(static_cast<int>(rel / link.t_s), nbits - 1);
      double into = t - (t_origin + i * link.t_s);
      y += residual[static_cast<size_t>(i)] * std::exp(-into / chan.decay_time);
      // A pulse contributes only inside its own window, except that a
      // negative jitter draw may pull its start a few samples early.
      for (int b : {i, i + 1}) {
        if (b < 0 || b >= nbits || bits[b] != 1) continue;
        double s = start[static_cast<size_t>(b)];
        double wend = t_origin + (b + 1) * link.t_s;
        if (t >= s && t < wend - 1e-12) y += pulse_kernel(chan, t - s);
      }
    }
    trace.samples[static_cast<size_t>(k)] = y;
  }

  if (chan.drift_walk_std > 0.0) {
    Rng wr = make_rng(derive_seed(seed, detail::kStreamWalk));
    double step_std = chan.drift_walk_std / std::sqrt(link.f_p);
    double walk = 0.0;
    for (int k = 0; k < n; ++k) {
      walk += normal(wr, step_std);
      trace.samples[static_cast<size_t>(k)] += walk;
    }
  }

  detail::add_spikes(trace.samples, chan, link.f_p, seed);

  if (chan.sensor_noise_std > 0.0) {
    Rng sr = make_rng(derive_seed(seed, detail::kStreamSensor));
    for (int k = 0; k < n; ++k)
      trace.samples[static_cast<size_t>(k)] += normal(sr, chan.sensor_noise_std);
  }

  return trace;
}

/// Noise-free reference trace: all stochastic parameters forced to zero.
/// The deterministic drift_slope is kept.
inline Trace perfect_trace(const BitSequence& bits, const LinkConfig& link,
                           const ChannelModel& chan, int lead_in = 0, int lead_out = 0) {
  return simulate_trace(bits, link, chan.noiseless(), 0, lead_in, lead_out);
}

}  // namespace mclink
