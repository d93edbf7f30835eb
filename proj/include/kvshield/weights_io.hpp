#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kvshield/attention.hpp"

namespace kvshield {

inline constexpr int kWeightsVersion = 1;

namespace detail {

template <typename Scalar>
nlohmann::json matrix_to_json(const Mat<Scalar>& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows; ++i) {
    nlohmann::json r = nlohmann::json::array();
    for (std::size_t j = 0; j < m.cols; ++j) r.push_back(static_cast<double>(m.at(i, j)));
    rows.push_back(std::move(r));
  }
  return rows;
}

template <typename Scalar>
Mat<Scalar> matrix_from_json(const nlohmann::json& j, std::size_t dim) {
  if (j.size() != dim) throw std::runtime_error("weights: bad matrix row count");
  Mat<Scalar> m(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) {
    if (j[i].size() != dim) throw std::runtime_error("weights: bad matrix col count");
    for (std::size_t c = 0; c < dim; ++c) m.at(i, c) = static_cast<Scalar>(j[i][c].get<double>());
  }
  return m;
}

}  // namespace detail

// Simple versioned JSON container of per-layer plaintext q/k/v/o projections.
template <typename Scalar>
void save_weights(const std::vector<AttentionWeights<Scalar>>& layers, const ModelConfig& cfg,
                  const std::string& path) {
  nlohmann::json j;
  j["version"] = kWeightsVersion;
  j["model"] = {{"d_model", cfg.d_model},     {"num_heads", cfg.num_heads},
                {"head_dim", cfg.head_dim},   {"num_layers", cfg.num_layers},
                {"num_kv_heads", cfg.num_kv_heads},
                {"precision", precision_name(cfg.precision)}};
  j["layers"] = nlohmann::json::array();
  for (const auto& w : layers) {
    if (w.permuted) throw std::runtime_error("weights: refusing to save permuted weights");
    nlohmann::json layer;
    layer["w_q"] = detail::matrix_to_json(w.w_q);
    layer["w_k"] = detail::matrix_to_json(w.w_k);
    layer["w_v"] = detail::matrix_to_json(w.w_v);
    if (w.w_o) layer["w_o"] = detail::matrix_to_json(*w.w_o);
    j["layers"].push_back(std::move(layer));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("weights: cannot write " + path);
  out << j.dump() << "\n";
}

template <typename Scalar>
std::vector<AttentionWeights<Scalar>> load_weights(const std::string& path,
                                                   const ModelConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("weights: cannot read " + path);
  nlohmann::json j;
  in >> j;
  if (j.at("version").get<int>() != kWeightsVersion)
    throw std::runtime_error("weights: unsupported version in " + path);
  if (j.at("model").at("d_model").get<std::size_t>() != cfg.d_model ||
      j.at("model").at("num_layers").get<std::size_t>() != cfg.num_layers)
    throw std::runtime_error("weights: file does not match the model config");

  std::vector<AttentionWeights<Scalar>> out;
  for (const auto& layer : j.at("layers")) {
    AttentionWeights<Scalar> w;
    w.w_q = detail::matrix_from_json<Scalar>(layer.at("w_q"), cfg.d_model);
    w.w_k = detail::matrix_from_json<Scalar>(layer.at("w_k"), cfg.d_model);
    w.w_v = detail::matrix_from_json<Scalar>(layer.at("w_v"), cfg.d_model);
    if (layer.contains("w_o"))
      w.w_o = detail::matrix_from_json<Scalar>(layer.at("w_o"), cfg.d_model);
    out.push_back(std::move(w));
  }
  if (out.size() != cfg.num_layers)
    throw std::runtime_error("weights: layer count does not match the model config");
  return out;
}

}  // namespace kvshield
