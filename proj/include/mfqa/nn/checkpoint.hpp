#pragma once

// Checkpoint container:
//   8 bytes   magic "MFQACKPT"
//   8 bytes   header length N, little-endian uint64
//   N bytes   UTF-8 JSON header
//             {"format_version":1,"config":{...},
//              "tensors":[{"name","shape","offset"}, ...]}
//   payload   little-endian IEEE-754 binary64 values; each tensor's
//             "offset" is its byte offset from the start of the payload.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfqa/nn/tensor.hpp"

namespace mfqa::nn {

inline constexpr char kCheckpointMagic[8] = {'M', 'F', 'Q', 'A', 'C', 'K', 'P', 'T'};
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json config;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw Error(Errc::not_found, "checkpoint has no tensor " + name);
  }
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string serialize_checkpoint(const nlohmann::json& config, const ParamList& params) {
  nlohmann::json header{{"format_version", kCheckpointVersion}, {"config", config}};
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto* p : params) {
    header["tensors"].push_back({{"name", p->name}, {"shape", p->value.shape()}, {"offset", offset}});
    offset += 8 * p->value.size();
  }
  const std::string head = header.dump();
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_u64(out, head.size());
  out += head;
  out.reserve(out.size() + offset);
  for (const auto* p : params)
    for (double v : p->value.values()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline Checkpoint parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw Error(Errc::parse, "not a checkpoint container");
  const std::uint64_t head_len = detail::get_u64(bytes, 8);
  if (16 + head_len > bytes.size()) throw Error(Errc::parse, "truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, head_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("bad checkpoint header: ") + e.what());
  }
  if (header.value("format_version", 0) != kCheckpointVersion)
    throw Error(Errc::parse, "unsupported checkpoint format_version");

  const std::size_t payload = 16 + head_len;
  Checkpoint ck;
  ck.config = header.value("config", nlohmann::json::object());
  for (const auto& entry : header.at("tensors")) {
    auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    const std::uint64_t off = entry.at("offset").get<std::uint64_t>();
    const std::size_t n = Tensor::element_count(shape);
    if (payload + off + 8 * n > bytes.size())
      throw Error(Errc::parse, "truncated checkpoint payload");
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i)
      vals[i] = std::bit_cast<double>(detail::get_u64(bytes, payload + off + 8 * i));
    ck.tensors.emplace_back(entry.at("name").get<std::string>(),
                            Tensor(std::move(shape), std::move(vals)));
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const nlohmann::json& config,
                            const ParamList& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write checkpoint: " + path);
  const std::string bytes = serialize_checkpoint(config, params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::io, "short write on checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open checkpoint: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

/// Copies checkpoint tensors into matching parameters by name.
inline void restore_params(const Checkpoint& ck, const ParamList& params) {
  for (auto* p : params) {
    const Tensor& t = ck.tensor(p->name);
    if (!t.same_shape(p->value))
      throw Error(Errc::shape, "checkpoint shape mismatch for " + p->name);
    p->value = t;
    p->grad = Tensor(t.shape());
  }
}

}  // namespace mfqa::nn
