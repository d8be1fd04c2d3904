#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mclink/channel.hpp"
#include "mclink/config.hpp"
#include "mclink/receive.hpp"
#include "mclink/train.hpp"

namespace mclink {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Wilson score interval for a binomial proportion (default 95%).
inline Interval wilson_interval(size_t errors, size_t n, double z = 1.959963984540054) {
  if (n == 0) throw std::invalid_argument("wilson_interval: n must be positive");
  double p = static_cast<double>(errors) / static_cast<double>(n);
  double nn = static_cast<double>(n);
  double z2 = z * z;
  double denom = 1.0 + z2 / nn;
  double center = (p + z2 / (2.0 * nn)) / denom;
  double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  // At the extremes the bound cancels to exactly 0 (or 1); skip the rounding dust.
  double lo = errors == 0 ? 0.0 : std::max(0.0, center - half);
  double hi = errors == n ? 1.0 : std::min(1.0, center + half);
  return Interval{lo, hi};
}

/// True when two Wilson intervals are disjoint (a strict statistical gap).
inline bool intervals_separated(const Interval& lower, const Interval& higher) {
  return lower.hi < higher.lo;
}

struct ExperimentConfig {
  std::vector<double> t_s_grid = {0.5, 1.0, 2.0, 3.0};
  std::vector<std::pair<double, double>> flow_pairs = {{0.5, 2.0}};  // (v, r), ml/min
  int bits_per_trial = 80;
  int trials_per_cell = 25;
  int train_traces = 16;
  int train_bits_per_trace = 40;
  std::vector<std::string> decoders = {"nst", "ann", "universal"};
  ChannelPreset preset;
  uint64_t master_seed = 1;

  void validate() const {
    if (t_s_grid.empty() || flow_pairs.empty()) throw std::invalid_argument("ExperimentConfig: empty grid");
    for (double t : t_s_grid)
      if (!is_supported_interval(t)) throw std::invalid_argument("ExperimentConfig: t_s outside supported set");
    for (auto [v, r] : flow_pairs)
      if (v <= 0.0 || r <= 0.0) throw std::invalid_argument("ExperimentConfig: flow rates must be positive");
    if (trials_per_cell < 1 || bits_per_trial < 1)
      throw std::invalid_argument("ExperimentConfig: trials and bits must be >= 1");
    if (static_cast<long>(trials_per_cell) * bits_per_trial < 500)
      throw std::invalid_argument("ExperimentConfig: need >= 500 evaluation bits per cell");
    if (train_traces < 2) throw std::invalid_argument("ExperimentConfig: need >= 2 training traces");
    if (decoders.empty()) throw std::invalid_argument("ExperimentConfig: no decoders selected");
  }
};

struct BerRow {
  std::string decoder;
  double t_s = 1.0;
  double v = 0.5;
  double r = 2.0;
  size_t trials = 0;
  size_t bits = 0;
  size_t bit_errors = 0;
  double ber = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

struct BerTable {
  std::vector<BerRow> rows;

  const BerRow* find(const std::string& decoder, double t_s) const {
    for (const auto& row : rows)
      if (row.decoder == decoder && std::abs(row.t_s - t_s) < 1e-9) return &row;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Simulation batches (seed-disjoint training and evaluation splits)
// ---------------------------------------------------------------------------

namespace detail {
inline constexpr uint64_t kTrainStream = 0x7121AA01ULL;
inline constexpr uint64_t kEvalStream = 0xE7A10B02ULL;
}  // namespace detail

/// Simulates labeled transmissions; every trace gets its own payload, seed,
/// and per-trial channel redraw.
inline std::vector<LabeledTrace> simulate_batch(const ChannelPreset& preset,
                                                const LinkConfig& link, int n_traces,
                                                int payload_len, uint64_t stream_seed) {
  std::vector<LabeledTrace> out;
  for (int i = 0; i < n_traces; ++i) {
    uint64_t trial = derive_seed(stream_seed, 0xBA7C4ULL, static_cast<uint64_t>(i));
    ChannelModel chan = preset.instantiate(link, trial);
    BitSequence bits =
        with_pilot(random_payload(static_cast<size_t>(payload_len), derive_seed(trial, 3)));
    LabeledTrace item;
    item.trace = simulate_trace(bits, link, chan, trial);
    item.bits = bits;
    out.push_back(std::move(item));
  }
  return out;
}

/// Trains the requested decoder from labeled traces.
inline AnyDecoder train_decoder(const std::string& name,
                                const std::vector<LabeledTrace>& training,
                                const LinkConfig& link, uint64_t seed) {
  if (name == "nst") {
    std::vector<NstTrainingItem> items;
    for (const auto& item : training) {
      NstTrainingItem ti;
      ti.windows = segment(item.trace, link, item.trace.origin_sample);
      ti.windows.resize(item.bits.size());
      ti.bits = item.bits.bits;
      items.push_back(std::move(ti));
    }
    return NstDecoder{nst_tune(items, default_eta_grid())};
  }
  if (name == "ann") {
    WindowDataset ds;
    for (const auto& item : training) {
      auto windows = segment(item.trace, link, item.trace.origin_sample);
      windows.resize(item.bits.size());
      for (size_t i = 0; i < windows.size(); ++i) {
        ds.windows.push_back(windows[i]);
        ds.labels.push_back(item.bits[i]);
      }
    }
    TrainConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.epochs = 120;
    cfg.batch_size = 16;
    cfg.seed = derive_seed(seed, 0xA22ULL);
    return AnnDecoder{train_ann_detector(ds, cfg)};
  }
  if (name == "universal") {
    UniversalModel model = make_universal(link.t_s, link.f_p, derive_seed(seed, 0x0117ULL));
    UniversalTrainConfig ucfg;
    ucfg.opt.learning_rate = 0.05;
    ucfg.opt.seed = derive_seed(seed, 0x0118ULL);
    // Full-batch joint updates need room; disable the plateau stop, let both
    // phases run long, and keep the best-validation weights.
    ucfg.min_improvement = -1.0;
    ucfg.schedule[0].max_epochs = 200;
    ucfg.schedule[1].max_epochs = 40;
    ucfg.keep_best = true;
    train_universal(model, training, link, ucfg);
    return model;
  }
  throw std::invalid_argument("unknown decoder: " + name);
}

/// Counts payload bit errors of one decoder over evaluation traces.
inline std::pair<size_t, size_t> evaluate_decoder(const AnyDecoder& decoder,
                                                  const std::vector<LabeledTrace>& eval,
                                                  const LinkConfig& link) {
  size_t errors = 0, bits = 0;
  for (const auto& item : eval) {
    std::vector<int> decoded =
        decode_payload(item.trace, link, decoder, item.trace.origin_sample);
    auto truth = item.bits.payload();
    size_t n = std::min(truth.size(), decoded.size());
    for (size_t i = 0; i < n; ++i)
      if (decoded[i] != truth[i]) ++errors;
    bits += n;
  }
  return {errors, bits};
}

/// Grid campaign over (t_s, flow) cells: train each decoder on its own
/// seed-disjoint batch, evaluate on fresh traces, tabulate BER with Wilson
/// intervals. Deterministic in the master seed.
inline BerTable run_campaign(const ExperimentConfig& cfg) {
  cfg.validate();
  BerTable table;
  for (size_t fi = 0; fi < cfg.flow_pairs.size(); ++fi) {
    for (size_t ti = 0; ti < cfg.t_s_grid.size(); ++ti) {
      LinkConfig link = make_link(cfg.t_s_grid[ti]);
      link.v = cfg.flow_pairs[fi].first;
      link.r = cfg.flow_pairs[fi].second;

      uint64_t cell = derive_seed(cfg.master_seed, fi * 101 + ti);
      std::vector<LabeledTrace> training =
          simulate_batch(cfg.preset, link, cfg.train_traces, cfg.train_bits_per_trace,
                         derive_seed(cell, detail::kTrainStream));
      std::vector<LabeledTrace> eval =
          simulate_batch(cfg.preset, link, cfg.trials_per_cell, cfg.bits_per_trial,
                         derive_seed(cell, detail::kEvalStream));

      for (const std::string& name : cfg.decoders) {
        AnyDecoder decoder = train_decoder(name, training, link, cell);
        auto [errors, bits] = evaluate_decoder(decoder, eval, link);
        BerRow row;
        row.decoder = name;
        row.t_s = link.t_s;
        row.v = link.v;
        row.r = link.r;
        row.trials = static_cast<size_t>(cfg.trials_per_cell);
        row.bits = bits;
        row.bit_errors = errors;
        row.ber = bits > 0 ? static_cast<double>(errors) / static_cast<double>(bits) : 0.0;
        Interval ci = wilson_interval(errors, bits);
        row.ci_lo = ci.lo;
        row.ci_hi = ci.hi;
        table.rows.push_back(std::move(row));
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// CSV persistence
// ---------------------------------------------------------------------------

inline constexpr const char* kBerCsvHeader =
    "decoder,t_s,v,r,trials,bits,bit_errors,ber,ci_lo,ci_hi";

inline void export_csv(const BerTable& table, const std::filesystem::path& path) {
  if (table.rows.empty()) throw std::invalid_argument("export_csv: empty table");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << kBerCsvHeader << "\n";
  out.precision(17);
  for (const auto& row : table.rows) {
    out << row.decoder << "," << row.t_s << "," << row.v << "," << row.r << "," << row.trials
        << "," << row.bits << "," << row.bit_errors << "," << row.ber << "," << row.ci_lo << ","
        << row.ci_hi << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline BerTable import_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kBerCsvHeader)
    throw std::runtime_error("bad BER table header in " + path.string());
  BerTable table;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    BerRow r;
    auto next = [&]() {
      if (!std::getline(row, field, ',')) throw std::runtime_error("short BER row: " + line);
      return field;
    };
    r.decoder = next();
    r.t_s = std::stod(next());
    r.v = std::stod(next());
    r.r = std::stod(next());
    r.trials = std::stoul(next());
    r.bits = std::stoul(next());
    r.bit_errors = std::stoul(next());
    r.ber = std::stod(next());
    r.ci_lo = std::stod(next());
    r.ci_hi = std::stod(next());
    table.rows.push_back(std::move(r));
  }
  return table;
}

}  // namespace mclink
