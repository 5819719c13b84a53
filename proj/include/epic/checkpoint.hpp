// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint archive:
//
//   "EPICCKPT"  8 bytes
//   version     u32 little-endian
//   length      u64 little-endian, byte length of the manifest
//   manifest    JSON {"meta": {...}, "tensors": [{name, shape, role, offset, count}]}
//   payload     raw little-endian f64 values, offsets counted in values

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "epic/tensor.hpp"

namespace epic {

inline constexpr char kCheckpointMagic[8] = {'E', 'P', 'I', 'C', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Tensor value;
  Role role = Role::Trainable;
};

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<CheckpointEntry> tensors;

  [[nodiscard]] const CheckpointEntry* find(const std::string& name) const {
    for (const auto& e : tensors)
      if (e.name == name) return &e;
    return nullptr;
  }
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void write_raw(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_raw(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("checkpoint: truncated " + what);
  return v;
}

}  // namespace detail

inline void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json manifest;
  manifest["meta"] = ck.meta;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& e : ck.tensors) {
    manifest["tensors"].push_back({{"name", e.name},
                                   {"shape", e.value.shape()},
                                   {"role", role_name(e.role)},
                                   {"offset", offset},
                                   {"count", e.value.size()}});
    offset += e.value.size();
  }
  const std::string text = manifest.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write '" + path + "'");
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::write_raw<std::uint32_t>(out, kCheckpointVersion);
  detail::write_raw<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : ck.tensors)
    out.write(reinterpret_cast<const char*>(e.value.data()), static_cast<std::streamsize>(e.value.size() * sizeof(double)));
  if (!out) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read '" + path + "'");
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw std::runtime_error("checkpoint: '" + path + "' is not a checkpoint archive");
  const auto version = detail::read_raw<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const auto length = detail::read_raw<std::uint64_t>(in, "manifest length");
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) throw std::runtime_error("checkpoint: truncated manifest");
  const nlohmann::json manifest = nlohmann::json::parse(text);

  Checkpoint ck;
  ck.meta = manifest.at("meta").get<std::map<std::string, std::string>>();
  std::uint64_t expected = 0;
  for (const auto& t : manifest.at("tensors")) {
    CheckpointEntry e;
    e.name = t.at("name").get<std::string>();
    e.role = t.at("role").get<std::string>() == "trainable" ? Role::Trainable : Role::Frozen;
    e.value = Tensor(t.at("shape").get<Shape>());
    const auto count = t.at("count").get<std::uint64_t>();
    if (t.at("offset").get<std::uint64_t>() != expected || count != e.value.size())
      throw std::runtime_error("checkpoint: inconsistent manifest entry '" + e.name + "'");
    if (!in.read(reinterpret_cast<char*>(e.value.data()), static_cast<std::streamsize>(count * sizeof(double))))
      throw std::runtime_error("checkpoint: truncated payload for '" + e.name + "'");
    expected += count;
    ck.tensors.push_back(std::move(e));
  }
  return ck;
}

}  // namespace epic
