#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "motionfuse/io/png.hpp"
#include "motionfuse/scene/serialize.hpp"

namespace mfuse::scene {

namespace fs = std::filesystem;

inline constexpr float kFloMagic = 202021.25f;  // "PIEH" read as a float32

namespace detail {

template <class V>
void put_le(std::vector<char>& out, V v) {
  static_assert(std::is_trivially_copyable_v<V>);
  char b[sizeof(V)];
  std::memcpy(b, &v, sizeof(V));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(V));
  out.insert(out.end(), b, b + sizeof(V));
}

template <class V>
V get_le(const std::vector<char>& in, std::size_t& pos, const std::string& path) {
  check(pos + sizeof(V) <= in.size(), ErrorCode::kFormat, "'", path, "' is truncated");
  char b[sizeof(V)];
  std::memcpy(b, in.data() + pos, sizeof(V));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(V));
  pos += sizeof(V);
  V v;
  std::memcpy(&v, b, sizeof(V));
  return v;
}

inline void write_bytes(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), ErrorCode::kIo, "cannot open '", path, "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  check(f.good(), ErrorCode::kIo, "write to '", path, "' failed");
}

inline std::vector<char> read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), ErrorCode::kIo, "cannot open '", path, "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace detail

// Middlebury optical flow: "PIEH", int32 width, int32 height, then (u, v)
// float32 pairs row-major, all little-endian.
inline void write_flo(const std::string& path, int h, int w, const std::vector<float>& flow) {
  check(flow.size() == static_cast<std::size_t>(h) * w * 2, ErrorCode::kShapeMismatch, "write_flo: buffer size");
  std::vector<char> out;
  out.reserve(12 + flow.size() * 4);
  detail::put_le(out, kFloMagic);
  detail::put_le(out, static_cast<std::int32_t>(w));
  detail::put_le(out, static_cast<std::int32_t>(h));
  for (float v : flow) detail::put_le(out, v);
  detail::write_bytes(path, out);
}

inline std::vector<float> read_flo(const std::string& path, int& h, int& w) {
  const auto in = detail::read_bytes(path);
  check(in.size() >= 12 && std::memcmp(in.data(), "PIEH", 4) == 0, ErrorCode::kFormat, "'", path,
        "' lacks the PIEH magic");
  std::size_t pos = 4;
  w = detail::get_le<std::int32_t>(in, pos, path);
  h = detail::get_le<std::int32_t>(in, pos, path);
  check(w > 0 && h > 0, ErrorCode::kFormat, "'", path, "' has invalid size ", w, "x", h);
  const std::size_t n = static_cast<std::size_t>(w) * h * 2;
  check(in.size() == 12 + 4 * n, ErrorCode::kFormat, "'", path, "' has ", in.size(), " bytes, expected ", 12 + 4 * n);
  std::vector<float> flow(n);
  for (auto& v : flow) v = detail::get_le<float>(in, pos, path);
  return flow;
}

// uint32 H, uint32 W, then float32 values (H*W*C, channels interleaved).
inline void write_raw(const std::string& path, int h, int w, const std::vector<float>& data) {
  check(h > 0 && w > 0 && data.size() % (static_cast<std::size_t>(h) * w) == 0, ErrorCode::kShapeMismatch,
        "write_raw: buffer size");
  std::vector<char> out;
  out.reserve(8 + data.size() * 4);
  detail::put_le(out, static_cast<std::uint32_t>(h));
  detail::put_le(out, static_cast<std::uint32_t>(w));
  for (float v : data) detail::put_le(out, v);
  detail::write_bytes(path, out);
}

inline std::vector<float> read_raw(const std::string& path, int& h, int& w, int& channels) {
  const auto in = detail::read_bytes(path);
  std::size_t pos = 0;
  h = static_cast<int>(detail::get_le<std::uint32_t>(in, pos, path));
  w = static_cast<int>(detail::get_le<std::uint32_t>(in, pos, path));
  check(h > 0 && w > 0, ErrorCode::kFormat, "'", path, "' has invalid size");
  const std::size_t body = in.size() - 8, px = static_cast<std::size_t>(h) * w;
  check(body % (4 * px) == 0 && body > 0, ErrorCode::kFormat, "'", path, "' payload is not H*W*C float32");
  channels = static_cast<int>(body / (4 * px));
  std::vector<float> data(body / 4);
  for (auto& v : data) v = detail::get_le<float>(in, pos, path);
  return data;
}

inline std::uint8_t to_u8(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

inline json sample_meta(const SceneSample& s) {
  json labels = json::object(), movable = json::object(), classes = json::object(), tags = json::array();
  for (auto& [id, m] : s.motion_labels) labels[std::to_string(id)] = m;
  for (auto& [id, m] : s.movable) movable[std::to_string(id)] = m;
  for (auto& [id, c] : s.class_names) classes[std::to_string(id)] = c;
  for (Tag t : s.tags) tags.push_back(to_string(t));
  json bodies = json::array();
  for (const auto& b : s.bodies) bodies.push_back(body_to_json(b));
  return {{"height", s.height},
          {"width", s.width},
          {"motion_labels", labels},
          {"movable", movable},
          {"class_names", classes},
          {"tags", tags},
          {"scenario", to_string(s.scenario)},
          {"seed", s.seed},
          {"source", s.source},
          {"camera",
           {{"focal", s.camera.focal},
            {"principal_point", {s.camera.principal.x(), s.camera.principal.y()}},
            {"pose_delta", rigid_to_json(s.camera.pose_delta)}}},
          {"bodies", bodies}};
}

inline void write_sample(const fs::path& dir, const SceneSample& s) {
  fs::create_directories(dir);
  const int h = s.height, w = s.width, n = h * w;
  for (int f = 0; f < 2; ++f) {
    io::Image8 img{h, w, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(n) * 3)};
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = to_u8(s.frames[f][i]);
    io::write_png8((dir / ("frame" + std::to_string(f + 1) + ".png")).string(), img);
  }
  write_flo((dir / "flow.flo").string(), h, w, s.flow);
  write_raw((dir / "depth1.raw").string(), h, w, s.depth[0]);
  write_raw((dir / "depth2.raw").string(), h, w, s.depth[1]);
  write_raw((dir / "scene_flow.raw").string(), h, w, s.scene_flow);
  io::write_png16((dir / "masks.png").string(), {h, w, s.instance_mask});
  io::Image8 valid{h, w, 1, std::vector<std::uint8_t>(n)};
  for (int p = 0; p < n; ++p) valid.data[p] = s.valid[p] ? 255 : 0;
  io::write_png8((dir / "valid.png").string(), valid);
  std::ofstream meta(dir / "meta.json");
  check(meta.good(), ErrorCode::kIo, "cannot write '", (dir / "meta.json").string(), "'");
  meta << sample_meta(s).dump(2) << "\n";
}

inline SceneSample read_sample(const fs::path& dir) {
  check(fs::is_directory(dir), ErrorCode::kIo, "sample directory '", dir.string(), "' does not exist");
  SceneSample s;
  std::ifstream mf(dir / "meta.json");
  check(mf.good(), ErrorCode::kIo, "missing '", (dir / "meta.json").string(), "'");
  json meta;
  try {
    mf >> meta;
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, "'", (dir / "meta.json").string(), "': ", e.what());
  }
  s.height = meta.at("height");
  s.width = meta.at("width");
  const int h = s.height, w = s.width, n = h * w;
  for (int f = 0; f < 2; ++f) {
    auto img = io::read_png8((dir / ("frame" + std::to_string(f + 1) + ".png")).string());
    check(img.height == h && img.width == w && img.channels == 3, ErrorCode::kFormat, "frame size mismatch in '",
          dir.string(), "'");
    s.frames[f].resize(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) s.frames[f][i] = img.data[i] / 255.0f;
  }
  int fh = 0, fw = 0, c = 0;
  s.flow = read_flo((dir / "flow.flo").string(), fh, fw);
  check(fh == h && fw == w, ErrorCode::kFormat, "flow size mismatch in '", dir.string(), "'");
  s.depth[0] = read_raw((dir / "depth1.raw").string(), fh, fw, c);
  check(fh == h && fw == w && c == 1, ErrorCode::kFormat, "depth1 size mismatch");
  s.depth[1] = read_raw((dir / "depth2.raw").string(), fh, fw, c);
  check(fh == h && fw == w && c == 1, ErrorCode::kFormat, "depth2 size mismatch");
  s.scene_flow = read_raw((dir / "scene_flow.raw").string(), fh, fw, c);
  check(fh == h && fw == w && c == 6, ErrorCode::kFormat, "scene_flow size mismatch");
  auto masks = io::read_png16((dir / "masks.png").string());
  check(masks.height == h && masks.width == w, ErrorCode::kFormat, "mask size mismatch");
  s.instance_mask = std::move(masks.data);
  auto valid = io::read_png8((dir / "valid.png").string());
  s.valid.resize(n);
  for (int p = 0; p < n; ++p) s.valid[p] = valid.data[p] ? 1 : 0;

  const json labels = meta.at("motion_labels"), movable = meta.value("movable", json::object()),
             classes = meta.value("class_names", json::object()), bodies = meta.value("bodies", json::array());
  for (auto& [k, v] : labels.items()) s.motion_labels[std::stoi(k)] = v.get<bool>();
  for (auto& [k, v] : movable.items()) s.movable[std::stoi(k)] = v.get<bool>();
  for (auto& [k, v] : classes.items()) s.class_names[std::stoi(k)] = v.get<std::string>();
  for (const auto& t : meta.at("tags")) s.tags.insert(parse_tag(t));
  s.scenario = parse_tag(meta.value("scenario", std::string("none")));
  s.seed = meta.value("seed", std::uint64_t{0});
  s.source = meta.value("source", 0);
  if (meta.contains("camera")) {
    const auto& cj = meta["camera"];
    s.camera = CameraModel::centered(h, w, cj.value("focal", 100.0));
    if (cj.contains("principal_point")) s.camera.principal = Vec2(cj["principal_point"][0], cj["principal_point"][1]);
    if (cj.contains("pose_delta")) s.camera.pose_delta = rigid_from_json(cj["pose_delta"]);
  }
  for (const auto& b : bodies) s.bodies.push_back(body_from_json(b));
  return s;
}

// Sorted sample subdirectories of a dataset root.
inline std::vector<fs::path> list_samples(const fs::path& root) {
  check(fs::is_directory(root), ErrorCode::kIo, "dataset '", root.string(), "' does not exist");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "meta.json")) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace mfuse::scene
