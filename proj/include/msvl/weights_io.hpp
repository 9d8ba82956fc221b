#pragma once

#include <cstring>
#include <string>
#include <vector>

#include <json.hpp>

#include "msvl/error.hpp"
#include "msvl/model.hpp"
#include "msvl/topology.hpp"
#include "msvl/util.hpp"

namespace msvl {

// Weights file:
//   "MSVLW001" | u32le header length | JSON header | f64le payload
// The header lists every tensor (name, shape) in payload order together with
// the model config, topology, seed and an FNV-1a checksum of the payload.

inline constexpr char kWeightsMagic[8] = {'M', 'S', 'V', 'L', 'W', '0', '0', '1'};
inline constexpr int kWeightsFormatVersion = 1;

inline std::vector<unsigned char> encode_params(const ModelParams& p) {
  std::vector<unsigned char> payload;
  for (const auto& t : p.tensors) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    payload.insert(payload.end(), bytes, bytes + t.size() * sizeof(double));
  }
  nlohmann::ordered_json header;
  header["format_version"] = kWeightsFormatVersion;
  header["arch"] = to_string(p.config.arch);
  auto shapes = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < p.tensors.size(); ++i)
    shapes.push_back({{"name", p.names[i]}, {"shape", p.tensors[i].shape()}});
  header["shapes"] = std::move(shapes);
  header["config"] = config_to_json(p.config);
  header["topology"] = p.topology ? topology_to_json(*p.topology) : nlohmann::ordered_json(nullptr);
  header["seed"] = p.seed;
  header["payload_checksum"] = to_hex(fnv1a(payload));
  const std::string text = header.dump();

  std::vector<unsigned char> out(std::begin(kWeightsMagic), std::end(kWeightsMagic));
  append_u32le(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

inline ModelParams decode_params(std::span<const unsigned char> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kWeightsMagic, 8) != 0)
    throw FormatError("not a weights file: missing MSVLW001 magic");
  const std::uint32_t header_len = load_u32le(bytes.data() + 8);
  if (bytes.size() - 12 < header_len) throw CorruptionError("weights header is truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("weights header is not valid JSON: ") + e.what());
  }

  ModelParams p;
  std::string checksum;
  try {
    if (header.at("format_version").get<int>() != kWeightsFormatVersion)
      throw FormatError("unsupported weights format version " + header.at("format_version").dump());
    ModelConfig cfg;
    cfg.arch = arch_from_string(header.at("arch").get<std::string>());
    cfg = config_from_json(header.at("config"), cfg);
    p = empty_params(cfg);
    p.seed = header.at("seed").get<std::uint64_t>();
    if (!header.at("topology").is_null()) p.topology = topology_from_json(header.at("topology"));
    if (cfg.arch == Arch::gnn_msvl && !p.topology) throw FormatError("gnn_msvl weights carry no topology");
    const auto& shapes = header.at("shapes");
    if (shapes.size() != p.tensors.size()) throw FormatError("weights header lists an unexpected tensor count");
    for (std::size_t i = 0; i < p.tensors.size(); ++i) {
      if (shapes[i].at("name").get<std::string>() != p.names[i] ||
          shapes[i].at("shape").get<nn::Shape>() != p.tensors[i].shape())
        throw FormatError("tensor " + std::to_string(i) + " does not match the declared architecture");
    }
    checksum = header.at("payload_checksum").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("weights header is missing fields: ") + e.what());
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("weights header is invalid: ") + e.what());
  }

  const auto payload = bytes.subspan(12 + header_len);
  std::size_t expected = 0;
  for (const auto& t : p.tensors) expected += t.size() * sizeof(double);
  if (payload.size() != expected)
    throw CorruptionError("weights payload is " + std::to_string(payload.size()) + " bytes, expected " +
                          std::to_string(expected));
  if (to_hex(fnv1a(payload)) != checksum) throw CorruptionError("weights payload checksum mismatch");
  std::size_t off = 0;
  for (auto& t : p.tensors) {
    std::memcpy(t.data(), payload.data() + off, t.size() * sizeof(double));
    off += t.size() * sizeof(double);
    if (!t.all_finite()) throw CorruptionError("weights contain non-finite values");
  }
  return p;
}

inline void save_params(const ModelParams& p, const std::string& path) { write_file_bytes(path, encode_params(p)); }

inline ModelParams load_params(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_params(bytes);
  } catch (const CorruptionError& e) {
    throw CorruptionError(path + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace msvl
