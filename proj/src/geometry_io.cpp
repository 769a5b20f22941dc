#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "binary_io.hpp"
#include "pla/common.hpp"
#include "pla/geometry.hpp"

namespace pla {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kSceneMagic = "PLAS";
constexpr std::uint32_t kSceneVersion = 1;

bool is_text_scene(const std::string& path) {
  const auto ext = fs::path(path).extension().string();
  return ext == ".tsv" || ext == ".txt";
}

SceneFile load_text_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::vector<std::array<double, 6>> rows;
  std::vector<int> labels;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::array<double, 6> r{};
    int label = 0;
    for (auto& v : r) ss >> v;
    ss >> label;
    if (!ss) throw InputError(fmt::format("{}:{}: expected 'x y z r g b label'", path, lineno));
    rows.push_back(r);
    labels.push_back(label);
  }
  SceneFile f;
  f.cloud.scene_id = fs::path(path).stem().string();
  const auto n = static_cast<Eigen::Index>(rows.size());
  f.cloud.positions.resize(n, 3);
  f.cloud.colors.resize(n, 3);
  int max_label = -1;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    f.cloud.positions.row(i) << r[0], r[1], r[2];
    f.cloud.colors.row(i) << r[3], r[4], r[5];
    max_label = std::max(max_label, labels[static_cast<std::size_t>(i)]);
  }
  f.cloud.labels = std::move(labels);
  f.category_count = static_cast<std::uint32_t>(max_label + 1);
  f.cloud.validate(0);
  return f;
}

}  // namespace

SceneFile load_scene(const std::string& path) {
  if (is_text_scene(path)) return load_text_scene(path);
  const std::string bytes = io::read_file(path);
  io::Reader r(bytes, path);
  r.expect_magic(kSceneMagic);
  r.expect_version(kSceneVersion);
  const auto n = r.u32();
  const auto k = r.u32();
  if (r.remaining() != std::size_t{n} * 28)
    r.fail(fmt::format("payload size {} does not match {} points", r.remaining(), n));
  SceneFile f;
  f.category_count = k;
  f.cloud.scene_id = fs::path(path).stem().string();
  f.cloud.positions.resize(n, 3);
  f.cloud.colors.resize(n, 3);
  f.cloud.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) f.cloud.positions(i, c) = r.f32();
    for (int c = 0; c < 3; ++c) f.cloud.colors(i, c) = r.f32();
    f.cloud.labels[i] = r.i32();
  }
  f.cloud.validate(k);
  return f;
}

void save_scene(const std::string& path, const PointCloud& cloud, std::uint32_t category_count) {
  cloud.validate(category_count);
  io::Writer w;
  w.magic(kSceneMagic);
  w.u32(kSceneVersion);
  w.u32(static_cast<std::uint32_t>(cloud.size()));
  w.u32(category_count);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (int c = 0; c < 3; ++c) w.f32(static_cast<float>(cloud.positions(ii, c)));
    for (int c = 0; c < 3; ++c) w.f32(static_cast<float>(cloud.colors(ii, c)));
    w.i32(cloud.labels[i]);
  }
  io::write_file(path, w.bytes());
}

std::string depth_path_for(const std::string& frame_path) {
  return fs::path(frame_path).replace_extension(".depth").string();
}

CameraFrame load_frame(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open frame " + path);
  CameraFrame f;
  f.frame_id = fs::path(path).stem().string();
  auto& k = f.intrinsics;
  in >> k.fx >> k.fy >> k.cx >> k.cy;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) in >> f.world_from_camera(r, c);
  long h = 0, w = 0;
  in >> h >> w;
  if (!in || h < 0 || w < 0) throw InputError("malformed frame header in " + path);

  const std::string dpath = depth_path_for(path);
  if (!fs::exists(dpath)) throw InputError("frame " + f.frame_id + ": missing depth file " + dpath);
  const std::string bytes = io::read_file(dpath);
  io::Reader r(bytes, dpath);
  f.depth.resize(h, w);
  r.f32s({f.depth.data(), static_cast<std::size_t>(h * w)});
  if (!r.done()) r.fail("trailing bytes after depth image");
  f.validate();
  return f;
}

void save_frame(const std::string& path, const CameraFrame& frame) {
  frame.validate();
  std::ostringstream out;
  const auto& k = frame.intrinsics;
  out << fmt::format("{} {} {} {}\n", k.fx, k.fy, k.cx, k.cy);
  for (int r = 0; r < 4; ++r)
    out << fmt::format("{} {} {} {}\n", frame.world_from_camera(r, 0), frame.world_from_camera(r, 1),
                       frame.world_from_camera(r, 2), frame.world_from_camera(r, 3));
  out << frame.height() << ' ' << frame.width() << '\n';
  io::write_file(path, out.str());
  io::write_file(depth_path_for(path),
                 std::string_view(reinterpret_cast<const char*>(frame.depth.data()),
                                  static_cast<std::size_t>(frame.depth.size()) * sizeof(float)));
}

}  // namespace pla
