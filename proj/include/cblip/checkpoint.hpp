/*
 * Copyright 2026 The CBLiP Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Checkpoint file layout:
//   8 bytes   magic "CBLIPCKP"
//   8 bytes   manifest length L, little-endian u64
//   L bytes   JSON manifest (format, dtype, config echo, vocabularies,
//             tensor table with byte offsets, payload size and FNV-1a hash)
//   payload   tensors back to back, little-endian IEEE-754

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cblip/errors.hpp"
#include "cblip/numerics/parameters.hpp"

namespace cblip {

inline constexpr const char* kCheckpointFormat = "cblip-ckpt-1";
inline constexpr char kCheckpointMagic[8] = {'C', 'B', 'L', 'I', 'P', 'C', 'K', 'P'};

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::string dtype;
  std::uint64_t offset = 0;
  std::uint64_t bytes = 0;
};

struct Checkpoint {
  std::string format = kCheckpointFormat;
  std::map<std::string, std::string> config;
  std::vector<std::string> relations;
  std::vector<std::string> entities;
  std::vector<CheckpointEntry> tensors;
  std::vector<std::uint8_t> payload;

  const CheckpointEntry* find(const std::string& name) const {
    for (const auto& e : tensors) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }
};

namespace detail {

inline std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

template <typename T>
void put_value_le(std::vector<std::uint8_t>& out, T v) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const Bits bits = std::bit_cast<Bits>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename T>
T get_value_le(const std::uint8_t* p) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  Bits bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<Bits>(p[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace detail

template <typename T>
Checkpoint make_checkpoint(const ParameterStore<T>& store,
                           const std::map<std::string, std::string>& config,
                           std::vector<std::string> relations,
                           std::vector<std::string> entities = {}) {
  Checkpoint ck;
  ck.config = config;
  ck.relations = std::move(relations);
  ck.entities = std::move(entities);
  for (const auto& p : store) {
    CheckpointEntry e{p.name, p.value.shape(), dtype_name<T>(), ck.payload.size(),
                      p.value.size() * sizeof(T)};
    for (T v : p.value.values()) detail::put_value_le(ck.payload, v);
    ck.tensors.push_back(std::move(e));
  }
  return ck;
}

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  nlohmann::ordered_json m;
  m["format"] = ck.format;
  m["config"] = ck.config;
  m["relations"] = ck.relations;
  m["entities"] = ck.entities;
  auto& tensors = m["tensors"] = nlohmann::ordered_json::array();
  for (const auto& e : ck.tensors) {
    tensors.push_back({{"name", e.name},
                       {"shape", e.shape},
                       {"dtype", e.dtype},
                       {"offset", e.offset},
                       {"bytes", e.bytes}});
  }
  m["payload_bytes"] = ck.payload.size();
  m["payload_fnv1a64"] = detail::hex64(detail::fnv1a64(ck.payload));
  const std::string manifest = m.dump();
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  detail::put_u64_le(out, manifest.size());
  out.insert(out.end(), manifest.begin(), manifest.end());
  out.insert(out.end(), ck.payload.begin(), ck.payload.end());
  return out;
}

inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const std::uint64_t mlen = detail::get_u64_le(bytes.data() + 8);
  if (mlen > bytes.size() - 16) throw CheckpointError("truncated manifest");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(bytes.begin() + 16,
                              bytes.begin() + 16 + static_cast<std::ptrdiff_t>(mlen));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("manifest is not valid JSON: ") + e.what());
  }
  Checkpoint ck;
  try {
    ck.format = m.at("format").get<std::string>();
    if (ck.format != kCheckpointFormat) {
      throw CheckpointError("unsupported checkpoint format '" + ck.format + "', expected " +
                            kCheckpointFormat);
    }
    ck.config = m.at("config").get<std::map<std::string, std::string>>();
    ck.relations = m.at("relations").get<std::vector<std::string>>();
    ck.entities = m.at("entities").get<std::vector<std::string>>();
    for (const auto& t : m.at("tensors")) {
      ck.tensors.push_back(CheckpointEntry{t.at("name").get<std::string>(),
                                           t.at("shape").get<Shape>(),
                                           t.at("dtype").get<std::string>(),
                                           t.at("offset").get<std::uint64_t>(),
                                           t.at("bytes").get<std::uint64_t>()});
    }
    const auto payload_bytes = m.at("payload_bytes").get<std::uint64_t>();
    if (bytes.size() - 16 - mlen != payload_bytes) {
      throw CheckpointError("payload size " + std::to_string(bytes.size() - 16 - mlen) +
                            " does not match manifest " + std::to_string(payload_bytes));
    }
    ck.payload.assign(bytes.begin() + 16 + static_cast<std::ptrdiff_t>(mlen), bytes.end());
    if (detail::hex64(detail::fnv1a64(ck.payload)) !=
        m.at("payload_fnv1a64").get<std::string>()) {
      throw CheckpointError("payload checksum mismatch");
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed manifest: ") + e.what());
  }
  for (const auto& e : ck.tensors) {
    const std::size_t width = e.dtype == "f32" ? 4 : e.dtype == "f64" ? 8 : 0;
    if (width == 0) throw CheckpointError("tensor " + e.name + ": unknown dtype " + e.dtype);
    if (e.bytes != shape_size(e.shape) * width || e.offset + e.bytes > ck.payload.size()) {
      throw CheckpointError("tensor " + e.name + ": inconsistent extent");
    }
  }
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

/// Copies checkpoint tensors into `store`. Names and shapes must match the
/// store exactly, in both directions.
template <typename T>
void load_parameters(const Checkpoint& ck, ParameterStore<T>& store) {
  if (ck.tensors.size() != store.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(ck.tensors.size()) +
                          " tensors, model expects " + std::to_string(store.size()));
  }
  for (auto& p : store) {
    const CheckpointEntry* e = ck.find(p.name);
    if (!e) throw CheckpointError("checkpoint lacks tensor " + p.name);
    if (e->shape != p.value.shape()) {
      throw CheckpointError("tensor " + p.name + ": shape " + shape_string(e->shape) +
                            " vs model " + shape_string(p.value.shape()));
    }
    const std::uint8_t* src = ck.payload.data() + e->offset;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      p.value[i] = e->dtype == "f32"
                       ? static_cast<T>(detail::get_value_le<float>(src + 4 * i))
                       : static_cast<T>(detail::get_value_le<double>(src + 8 * i));
    }
  }
}

}  // namespace cblip
