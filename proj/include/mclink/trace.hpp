#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mclink/config.hpp"

namespace mclink {

/// A sampled receiver response. origin_sample is the index of the first
/// sample of the first pilot window, when known (simulation metadata or a
/// synchronizer estimate); -1 when unknown.
struct Trace {
  std::vector<double> samples;
  double f_p = 8.0;
  long origin_sample = 0;

  int size() const { return static_cast<int>(samples.size()); }
  double& operator[](int i) { return samples[static_cast<size_t>(i)]; }
  double operator[](int i) const { return samples[static_cast<size_t>(i)]; }
};

/// Metadata written next to the waveform so a trace file round-trips with
/// everything needed to reproduce or decode it.
struct TraceMeta {
  LinkConfig link;
  std::optional<ChannelModel> channel;
  uint64_t seed = 0;
  long origin_sample = 0;
  std::vector<int> bits;  // empty when the ground truth is withheld
};

inline void to_json(nlohmann::json& j, const TraceMeta& m) {
  j = {{"link", m.link}, {"seed", m.seed}, {"origin_sample", m.origin_sample}};
  if (m.channel) j["channel"] = *m.channel;
  if (!m.bits.empty()) j["bits"] = m.bits;
}

inline void from_json(const nlohmann::json& j, TraceMeta& m) {
  m.link = j.at("link").get<LinkConfig>();
  if (j.contains("channel")) m.channel = j["channel"].get<ChannelModel>();
  m.seed = j.value("seed", uint64_t{0});
  m.origin_sample = j.value("origin_sample", 0L);
  if (j.contains("bits")) m.bits = j["bits"].get<std::vector<int>>();
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  std::filesystem::path p = csv_path;
  p.replace_extension(".json");
  return p;
}

inline void save_trace_csv(const std::filesystem::path& path, const Trace& trace,
                           const TraceMeta& meta) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "sample_index,amplitude\n";
  out.precision(17);
  for (int i = 0; i < trace.size(); ++i) out << i << "," << trace[i] << "\n";
  if (!out) throw std::runtime_error("write failed: " + path.string());

  TraceMeta m = meta;
  m.origin_sample = trace.origin_sample;
  m.link.f_p = trace.f_p;
  nlohmann::json j = m;
  std::ofstream side(sidecar_path(path));
  if (!side) throw std::runtime_error("cannot open for writing: " + sidecar_path(path).string());
  side << j.dump(2) << "\n";
}

inline std::pair<Trace, TraceMeta> load_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample_index", 0) != 0)
    throw std::runtime_error("bad trace header in " + path.string());

  Trace trace;
  long expect = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    long idx;
    char comma;
    double amp;
    if (!(row >> idx >> comma >> amp) || comma != ',')
      throw std::runtime_error("bad trace row in " + path.string() + ": " + line);
    if (idx != expect)
      throw std::runtime_error("non-contiguous sample_index in " + path.string());
    ++expect;
    trace.samples.push_back(amp);
  }

  TraceMeta meta;
  std::ifstream side(sidecar_path(path));
  if (!side) throw std::runtime_error("missing sidecar: " + sidecar_path(path).string());
  nlohmann::json j;
  side >> j;
  meta = j.get<TraceMeta>();
  trace.f_p = meta.link.f_p;
  trace.origin_sample = meta.origin_sample;
  return {trace, meta};
}

}  // namespace mclink
