#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "mclink/linalg.hpp"
#include "mclink/nn.hpp"

namespace mclink {

inline void to_json(nlohmann::json& j, const Mat& m) {
  j = {{"rows", m.rows}, {"cols", m.cols}, {"data", m.a}};
}

inline void from_json(const nlohmann::json& j, Mat& m) {
  m.rows = j.at("rows").get<int>();
  m.cols = j.at("cols").get<int>();
  m.a = j.at("data").get<Vec>();
  if (m.rows < 0 || m.cols < 0 ||
      m.a.size() != static_cast<size_t>(m.rows) * static_cast<size_t>(m.cols))
    throw std::invalid_argument("Mat: data size does not match rows*cols");
}

inline void to_json(nlohmann::json& j, const Mlp& m) {
  j["kind"] = "mlp";
  j["seed"] = m.seed;
  nlohmann::json layers = nlohmann::json::array();
  for (int l = 0; l < m.layers(); ++l) {
    layers.push_back({{"weights", m.w[static_cast<size_t>(l)]},
                      {"biases", m.b[static_cast<size_t>(l)]},
                      {"activation", act_name(m.act[static_cast<size_t>(l)])}});
  }
  j["layers"] = layers;
}

inline void from_json(const nlohmann::json& j, Mlp& m) {
  if (j.value("kind", "") != "mlp") throw std::invalid_argument("model kind is not 'mlp'");
  m = Mlp{};
  m.seed = j.value("seed", uint64_t{0});
  for (const auto& layer : j.at("layers")) {
    m.w.push_back(layer.at("weights").get<Mat>());
    m.b.push_back(layer.at("biases").get<Vec>());
    m.act.push_back(act_from_name(layer.at("activation").get<std::string>()));
  }
  m.validate();
}

inline void to_json(nlohmann::json& j, const Rnn& r) {
  j = {{"kind", "rnn"},
       {"seed", r.seed},
       {"w_xh", r.w_xh},
       {"w_hh", r.w_hh},
       {"w_hy", r.w_hy},
       {"b_h", r.b_h},
       {"b_y", r.b_y},
       {"hidden_activation", act_name(r.hidden_act)},
       {"output_activation", act_name(r.output_act)}};
}

inline void from_json(const nlohmann::json& j, Rnn& r) {
  if (j.value("kind", "") != "rnn") throw std::invalid_argument("model kind is not 'rnn'");
  r.seed = j.value("seed", uint64_t{0});
  r.w_xh = j.at("w_xh").get<Mat>();
  r.w_hh = j.at("w_hh").get<Mat>();
  r.w_hy = j.at("w_hy").get<Mat>();
  r.b_h = j.at("b_h").get<Vec>();
  r.b_y = j.at("b_y").get<Vec>();
  r.hidden_act = act_from_name(j.at("hidden_activation").get<std::string>());
  r.output_act = act_from_name(j.at("output_activation").get<std::string>());
  r.validate();
}

inline void save_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline nlohmann::json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  nlohmann::json j;
  in >> j;
  return j;
}

template <class Model>
void save_model(const std::filesystem::path& path, const Model& model) {
  save_json(path, nlohmann::json(model));
}

template <class Model>
Model load_model(const std::filesystem::path& path) {
  return load_json(path).get<Model>();
}

}  // namespace mclink
