#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "chfkit/cvae.hpp"
#include "chfkit/dataset.hpp"
#include "chfkit/errors.hpp"
#include "chfkit/nn.hpp"

namespace chfkit {

/// Checkpoints are JSON: shapes, activations, weights (row-major), biases,
/// scaler parameters and the training seed. Doubles are written with
/// shortest-round-trip encoding, so a save/load round trip is bit-exact.

inline constexpr const char* kCheckpointFormat = "chfkit-checkpoint";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json layer_to_json(const DenseLayer& l) {
  std::vector<double> w(static_cast<std::size_t>(l.weights.size()));
  for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
      w[static_cast<std::size_t>(r * l.weights.cols() + c)] = l.weights(r, c);
  return {{"fan_in", l.fan_in()},
          {"fan_out", l.fan_out()},
          {"activation", to_string(l.activation)},
          {"weights", w},
          {"biases", std::vector<double>(l.biases.data(), l.biases.data() + l.biases.size())}};
}

inline DenseLayer layer_from_json(const nlohmann::json& j) {
  DenseLayer l;
  const auto fan_in = j.at("fan_in").get<Eigen::Index>();
  const auto fan_out = j.at("fan_out").get<Eigen::Index>();
  l.activation = activation_from_string(j.at("activation").get<std::string>());
  const auto w = j.at("weights").get<std::vector<double>>();
  const auto b = j.at("biases").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(w.size()) != fan_in * fan_out ||
      static_cast<Eigen::Index>(b.size()) != fan_out)
    throw DataError("checkpoint: layer shape does not match stored data");
  l.weights.resize(fan_out, fan_in);
  for (Eigen::Index r = 0; r < fan_out; ++r)
    for (Eigen::Index c = 0; c < fan_in; ++c)
      l.weights(r, c) = w[static_cast<std::size_t>(r * fan_in + c)];
  l.biases = Eigen::Map<const Vector>(b.data(), fan_out);
  return l;
}

inline nlohmann::json network_to_json(const DenseNetwork& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const DenseLayer& l : net.layers) layers.push_back(layer_to_json(l));
  return {{"layers", layers}};
}

inline DenseNetwork network_from_json(const nlohmann::json& j) {
  DenseNetwork net;
  for (const auto& lj : j.at("layers")) net.layers.push_back(layer_from_json(lj));
  validate_network(net);
  return net;
}

inline nlohmann::json scaler_to_json(const ScalerParams& s) {
  return {{"mean", s.mean}, {"stddev", s.stddev}};
}

inline ScalerParams scaler_from_json(const nlohmann::json& j) {
  ScalerParams s;
  s.mean = j.at("mean").get<std::array<double, kNumColumns>>();
  s.stddev = j.at("stddev").get<std::array<double, kNumColumns>>();
  for (double sd : s.stddev)
    if (!(sd > 0.0)) throw DataError("checkpoint: scaler stddev must be > 0");
  return s;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

inline void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw DataError("write failed: " + path.string());
}

inline void check_header(const nlohmann::json& j, const std::string& expected_kind,
                         const std::filesystem::path& path) {
  if (j.value("format", "") != kCheckpointFormat)
    throw DataError("not a chfkit checkpoint: " + path.string());
  if (j.value("version", -1) != kCheckpointVersion)
    throw DataError("unsupported checkpoint version in " + path.string());
  if (j.value("kind", "") != expected_kind)
    throw DataError("expected a '" + expected_kind + "' checkpoint: " + path.string());
}

}  // namespace detail

struct DnnCheckpoint {
  DenseNetwork net;
  ScalerParams scaler;
  std::uint64_t seed = 0;
};

inline void save_dnn_checkpoint(const DnnCheckpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json j = {{"format", kCheckpointFormat},
                      {"version", kCheckpointVersion},
                      {"kind", "dnn"},
                      {"seed", ckpt.seed},
                      {"scaler", detail::scaler_to_json(ckpt.scaler)},
                      {"network", detail::network_to_json(ckpt.net)}};
  detail::write_json_file(j, path);
}

inline DnnCheckpoint load_dnn_checkpoint(const std::filesystem::path& path) {
  nlohmann::json j = detail::read_json_file(path);
  detail::check_header(j, "dnn", path);
  DnnCheckpoint ckpt;
  ckpt.seed = j.at("seed").get<std::uint64_t>();
  ckpt.scaler = detail::scaler_from_json(j.at("scaler"));
  ckpt.net = detail::network_from_json(j.at("network"));
  return ckpt;
}

struct CvaeCheckpoint {
  CvaeModel model;
  std::uint64_t seed = 0;
};

inline void save_cvae_checkpoint(const CvaeCheckpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json j = {{"format", kCheckpointFormat},
                      {"version", kCheckpointVersion},
                      {"kind", "cvae"},
                      {"seed", ckpt.seed},
                      {"latent_dim", ckpt.model.latent_dim},
                      {"scaler", detail::scaler_to_json(ckpt.model.scaler)},
                      {"encoder", detail::network_to_json(ckpt.model.encoder)},
                      {"decoder", detail::network_to_json(ckpt.model.decoder)}};
  detail::write_json_file(j, path);
}

inline CvaeCheckpoint load_cvae_checkpoint(const std::filesystem::path& path) {
  nlohmann::json j = detail::read_json_file(path);
  detail::check_header(j, "cvae", path);
  CvaeCheckpoint ckpt;
  ckpt.seed = j.at("seed").get<std::uint64_t>();
  ckpt.model.latent_dim = j.at("latent_dim").get<int>();
  ckpt.model.scaler = detail::scaler_from_json(j.at("scaler"));
  ckpt.model.encoder = detail::network_from_json(j.at("encoder"));
  ckpt.model.decoder = detail::network_from_json(j.at("decoder"));
  validate_cvae_model(ckpt.model);
  return ckpt;
}

/// Manifest naming an ensemble's member checkpoints and seeds. Member paths
/// are stored relative to the manifest file.
struct EnsembleManifest {
  std::vector<std::string> member_paths;
  std::vector<std::uint64_t> seeds;
};

inline void save_ensemble_manifest(const EnsembleManifest& m,
                                   const std::filesystem::path& path) {
  if (m.member_paths.size() != m.seeds.size())
    throw DataError("ensemble manifest: path/seed count mismatch");
  nlohmann::json members = nlohmann::json::array();
  for (std::size_t i = 0; i < m.member_paths.size(); ++i)
    members.push_back({{"path", m.member_paths[i]}, {"seed", m.seeds[i]}});
  nlohmann::json j = {{"format", "chfkit-ensemble"},
                      {"version", kCheckpointVersion},
                      {"members", members}};
  detail::write_json_file(j, path);
}

inline EnsembleManifest load_ensemble_manifest(const std::filesystem::path& path) {
  nlohmann::json j = detail::read_json_file(path);
  if (j.value("format", "") != "chfkit-ensemble")
    throw DataError("not an ensemble manifest: " + path.string());
  EnsembleManifest m;
  for (const auto& e : j.at("members")) {
    m.member_paths.push_back(e.at("path").get<std::string>());
    m.seeds.push_back(e.at("seed").get<std::uint64_t>());
  }
  if (m.member_paths.empty()) throw DataError("ensemble manifest lists no members");
  return m;
}

}  // namespace chfkit
