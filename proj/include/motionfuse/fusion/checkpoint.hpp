#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "motionfuse/core/tensor.hpp"
#include "motionfuse/nn/layers.hpp"

namespace mfuse::fusion {

// Container layout (little-endian):
//   "MFCK", uint32 version, uint64 meta length, meta JSON bytes,
//   uint32 entry count, then per entry:
//   uint32 name length, name bytes, uint32 rank, int32 dims[rank], float32 data.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

namespace detail {

template <class V>
void put(std::ostream& o, V v) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  o.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V take(std::istream& in, const std::string& path) {
  V v;
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  check(in.gcount() == static_cast<std::streamsize>(sizeof(V)), ErrorCode::kFormat, "'", path, "' is truncated");
  return v;
}

}  // namespace detail

inline void write_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream o(path, std::ios::binary);
  check(o.good(), ErrorCode::kIo, "cannot open '", path, "' for writing");
  o.write("MFCK", 4);
  detail::put(o, kCheckpointVersion);
  const std::string meta = c.meta.dump();
  detail::put(o, static_cast<std::uint64_t>(meta.size()));
  o.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  detail::put(o, static_cast<std::uint32_t>(c.entries.size()));
  for (const auto& e : c.entries) {
    check(static_cast<std::int64_t>(e.data.size()) == shape_numel(e.shape), ErrorCode::kShapeMismatch,
          "checkpoint entry '", e.name, "' size");
    detail::put(o, static_cast<std::uint32_t>(e.name.size()));
    o.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    detail::put(o, static_cast<std::uint32_t>(e.shape.size()));
    for (int d : e.shape) detail::put(o, static_cast<std::int32_t>(d));
    o.write(reinterpret_cast<const char*>(e.data.data()), static_cast<std::streamsize>(e.data.size() * 4));
  }
  check(o.good(), ErrorCode::kIo, "write to '", path, "' failed");
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), ErrorCode::kIo, "cannot open checkpoint '", path, "'");
  char magic[4] = {};
  in.read(magic, 4);
  check(in.gcount() == 4 && std::memcmp(magic, "MFCK", 4) == 0, ErrorCode::kFormat, "'", path,
        "' is not a checkpoint");
  const auto version = detail::take<std::uint32_t>(in, path);
  check(version == kCheckpointVersion, ErrorCode::kCheckpointMismatch, "'", path, "' has version ", version,
        ", expected ", kCheckpointVersion);
  Checkpoint c;
  const auto meta_len = detail::take<std::uint64_t>(in, path);
  check(meta_len < (1ull << 30), ErrorCode::kFormat, "'", path, "' has an implausible header");
  std::string meta(meta_len, '\0');
  in.read(meta.data(), static_cast<std::streamsize>(meta_len));
  check(in.gcount() == static_cast<std::streamsize>(meta_len), ErrorCode::kFormat, "'", path, "' is truncated");
  try {
    c.meta = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, "'", path, "' header: ", e.what());
  }
  const auto n = detail::take<std::uint32_t>(in, path);
  c.entries.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    CheckpointEntry e;
    const auto len = detail::take<std::uint32_t>(in, path);
    check(len < 4096, ErrorCode::kFormat, "'", path, "' has an implausible entry name");
    e.name.resize(len);
    in.read(e.name.data(), len);
    const auto rank = detail::take<std::uint32_t>(in, path);
    check(rank <= 8, ErrorCode::kFormat, "'", path, "' has an implausible rank");
    for (std::uint32_t r = 0; r < rank; ++r) e.shape.push_back(detail::take<std::int32_t>(in, path));
    e.data.resize(static_cast<std::size_t>(shape_numel(e.shape)));
    in.read(reinterpret_cast<char*>(e.data.data()), static_cast<std::streamsize>(e.data.size() * 4));
    check(in.gcount() == static_cast<std::streamsize>(e.data.size() * 4), ErrorCode::kFormat, "'", path,
          "' is truncated");
    c.entries.push_back(std::move(e));
  }
  return c;
}

template <class T>
CheckpointEntry to_entry(const std::string& name, const std::vector<T>& values, const Shape& shape) {
  CheckpointEntry e{name, shape, std::vector<float>(values.size())};
  for (std::size_t i = 0; i < values.size(); ++i) e.data[i] = static_cast<float>(values[i]);
  return e;
}

template <class T>
void append_params(Checkpoint& c, const nn::ParamList<T>& params) {
  for (const auto& p : params) c.entries.push_back(to_entry(p.name, p.tensor.vec(), p.tensor.shape()));
}

// Copies every parameter whose name starts with `prefix` from the checkpoint.
// Missing names or shape differences are errors; returns the count loaded.
template <class T>
int load_params(const Checkpoint& c, nn::ParamList<T>& params, const std::string& prefix = "") {
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : c.entries) by_name[e.name] = &e;
  int loaded = 0;
  for (auto& p : params) {
    if (p.name.compare(0, prefix.size(), prefix) != 0) continue;
    auto it = by_name.find(p.name);
    check(it != by_name.end(), ErrorCode::kCheckpointMismatch, "checkpoint lacks parameter '", p.name, "'");
    check(it->second->shape == p.tensor.shape(), ErrorCode::kCheckpointMismatch, "parameter '", p.name, "' has shape ",
          shape_str(it->second->shape), " in the checkpoint but ", shape_str(p.tensor.shape()), " in the model");
    auto dst = p.tensor.mutable_values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second->data[i]);
    ++loaded;
  }
  return loaded;
}

// Copies values between parameter lists by name; every destination name must exist in the source.
template <class T>
void copy_params(const nn::ParamList<T>& src, nn::ParamList<T>& dst) {
  std::map<std::string, const Tensor<T>*> by_name;
  for (const auto& p : src) by_name[p.name] = &p.tensor;
  for (auto& p : dst) {
    auto it = by_name.find(p.name);
    check(it != by_name.end() && it->second->shape() == p.tensor.shape(), ErrorCode::kCheckpointMismatch,
          "no compatible source for parameter '", p.name, "'");
    std::copy(it->second->values().begin(), it->second->values().end(), p.tensor.mutable_values().begin());
  }
}

}  // namespace mfuse::fusion
