#include "pla/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <json.hpp>

#include "binary_io.hpp"
#include "pla/common.hpp"

namespace pla {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

Eigen::Vector3d vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw InputError("synth spec: expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

ordered_json to_json(const Eigen::Vector3d& v) { return ordered_json::array({v.x(), v.y(), v.z()}); }

SynthTrajectory parse_trajectory(const json& j, SynthTrajectory t) {
  if (j.contains("center")) t.center = vec3(j["center"]);
  t.radius = j.value("radius", t.radius);
  t.frames = j.value("frames", t.frames);
  t.pitch_deg = j.value("pitch_deg", t.pitch_deg);
  t.start_deg = j.value("start_deg", t.start_deg);
  return t;
}

ordered_json trajectory_json(const SynthTrajectory& t) {
  return {{"center", to_json(t.center)}, {"radius", t.radius}, {"frames", t.frames},
          {"pitch_deg", t.pitch_deg}, {"start_deg", t.start_deg}};
}

Eigen::Matrix4d ring_pose(const SynthTrajectory& t, int k) {
  const double theta = (t.start_deg + 360.0 * k / t.frames) * M_PI / 180.0;
  const double phi = t.pitch_deg * M_PI / 180.0;
  const Eigen::Vector3d forward(std::cos(theta) * std::cos(phi), std::sin(theta) * std::cos(phi),
                                -std::sin(phi));
  const Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ()).normalized();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix4d pose = Eigen::Matrix4d::Identity();
  pose.block<3, 1>(0, 0) = right;
  pose.block<3, 1>(0, 1) = down;
  pose.block<3, 1>(0, 2) = forward;
  pose.block<3, 1>(0, 3) = t.center + t.radius * Eigen::Vector3d(std::cos(theta), std::sin(theta), 0);
  return pose;
}

// Ray/box slab test; returns entry distance > 0 or +inf.
double ray_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const SynthBox& b) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < b.min[a] || o[a] > b.max[a]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double ta = (b.min[a] - o[a]) / d[a];
    double tb = (b.max[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::numeric_limits<double>::infinity();
  }
  return t0 > 1e-9 ? t0 : std::numeric_limits<double>::infinity();
}

bool overlaps(const SynthBox& a, const SynthBox& b, double margin) {
  for (int k = 0; k < 2; ++k)
    if (a.max[k] + margin <= b.min[k] || b.max[k] + margin <= a.min[k]) return false;
  return true;
}

SynthScene procedural_scene(const SyntheticSceneSpec& spec, int index, std::mt19937_64& rng) {
  SynthScene s;
  s.id = fmt::format("scene_{:03d}", index);
  s.room = spec.procedural_room;
  s.trajectory = spec.procedural_trajectory;
  s.trajectory.center.head<2>() = s.room.head<2>() / 2.0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  s.trajectory.start_deg = 360.0 * unit(rng);
  const double x = s.room.x(), y = s.room.y(), z = s.room.z(), th = 0.02;
  s.boxes.push_back({spec.floor_category, {0, 0, 0}, {x, y, th}});
  s.boxes.push_back({spec.wall_category, {0, 0, 0}, {th, y, z}});
  s.boxes.push_back({spec.wall_category, {x - th, 0, 0}, {x, y, z}});
  s.boxes.push_back({spec.wall_category, {0, 0, 0}, {x, th, z}});
  s.boxes.push_back({spec.wall_category, {0, y - th, 0}, {x, y, z}});
  const std::size_t fixed = s.boxes.size();

  for (const auto& c : spec.categories) {
    if (c.name == spec.floor_category || c.name == spec.wall_category) continue;
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double jitter = 0.85 + 0.3 * unit(rng);
      const double len = c.size.x() * jitter, dep = c.size.y() * jitter, hgt = c.size.z() * jitter;
      const int side = static_cast<int>(rng() % 4);
      const double along_extent = (side < 2 ? y : x);
      if (len + 0.2 > along_extent) break;
      const double along = 0.1 + unit(rng) * (along_extent - len - 0.2);
      const double off = th + 0.05;
      SynthBox b{c.name, {}, {}};
      switch (side) {
        case 0: b.min = {off, along, th}; b.max = {off + dep, along + len, th + hgt}; break;
        case 1: b.min = {x - off - dep, along, th}; b.max = {x - off, along + len, th + hgt}; break;
        case 2: b.min = {along, off, th}; b.max = {along + len, off + dep, th + hgt}; break;
        default: b.min = {along, y - off - dep, th}; b.max = {along + len, y - off, th + hgt}; break;
      }
      bool clash = false;
      for (std::size_t k = fixed; k < s.boxes.size() && !clash; ++k) clash = overlaps(b, s.boxes[k], 0.1);
      if (!clash) {
        s.boxes.push_back(b);
        break;
      }
    }
  }
  return s;
}

PointCloud sample_surfaces(const SynthScene& scene, const SyntheticSceneSpec& spec,
                           const std::map<std::string, int>& label_of, std::mt19937_64& rng) {
  std::vector<Eigen::Vector3d> pos, col;
  std::vector<int> labels;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, spec.color_noise);
  const Eigen::Vector3d room = scene.room;
  for (const auto& box : scene.boxes) {
    const int label = label_of.at(box.category);
    const Eigen::Vector3d color = spec.categories[static_cast<std::size_t>(label)].color;
    for (int axis = 0; axis < 3; ++axis) {
      for (int hi = 0; hi < 2; ++hi) {
        if (axis == 2 && hi == 0) continue;  // nothing looks at faces from below
        const double plane = hi ? box.max[axis] : box.min[axis];
        if (plane <= 1e-9 || plane >= room[axis] - 1e-9) continue;  // room boundary
        const int u = (axis + 1) % 3, v = (axis + 2) % 3;
        const double area = (box.max[u] - box.min[u]) * (box.max[v] - box.min[v]);
        const auto n = static_cast<long>(std::lround(area * spec.point_density));
        for (long i = 0; i < n; ++i) {
          Eigen::Vector3d p;
          p[axis] = plane;
          p[u] = box.min[u] + unit(rng) * (box.max[u] - box.min[u]);
          p[v] = box.min[v] + unit(rng) * (box.max[v] - box.min[v]);
          Eigen::Vector3d c;
          for (int k = 0; k < 3; ++k) c[k] = std::clamp(color[k] + noise(rng), 0.0, 1.0);
          pos.push_back(p);
          col.push_back(c);
          labels.push_back(label);
        }
      }
    }
  }
  PointCloud cloud;
  cloud.scene_id = scene.id;
  cloud.positions.resize(static_cast<Eigen::Index>(pos.size()), 3);
  cloud.colors.resize(static_cast<Eigen::Index>(pos.size()), 3);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    cloud.positions.row(static_cast<Eigen::Index>(i)) = pos[i];
    cloud.colors.row(static_cast<Eigen::Index>(i)) = col[i];
  }
  cloud.labels = std::move(labels);
  return cloud;
}

}  // namespace

void SyntheticSceneSpec::validate() const {
  if (categories.empty()) throw InputError("synth spec: no categories");
  if (scenes.empty() && procedural_scenes <= 0) throw InputError("synth spec: no scenes");
  if (!(point_density > 0)) throw InputError("synth spec: point_density must be positive");
  if (width < 1 || height < 1) throw InputError("synth spec: image size must be positive");
  if (!(intrinsics.fx > 0 && intrinsics.fy > 0)) throw InputError("synth spec: bad intrinsics");
  if (embedding_dim < 2) throw InputError("synth spec: embedding_dim must be >= 2");
  std::set<std::string> names;
  bool any_base = false;
  for (const auto& c : categories) {
    if (!names.insert(c.name).second) throw InputError("synth spec: duplicate category " + c.name);
    any_base = any_base || c.base;
  }
  if (!any_base) throw InputError("synth spec: need at least one base category");
  if (procedural_scenes > 0 && (!names.count(floor_category) || !names.count(wall_category)))
    throw InputError("synth spec: procedural scenes need floor and wall categories");
  if (procedural_scenes > 0 && procedural_trajectory.frames < 1)
    throw InputError("synth spec: trajectory needs at least one frame");
  for (const auto& s : scenes) {
    if (s.trajectory.frames < 1) throw InputError("synth spec: scene " + s.id + " has no frames");
    for (const auto& b : s.boxes) {
      if (!names.count(b.category))
        throw InputError("synth spec: unknown category " + b.category + " in scene " + s.id);
      if ((b.min.array() < 0.0).any() || (b.max.array() > s.room.array()).any() ||
          (b.min.array() >= b.max.array()).any())
        throw InputError("synth spec: box outside room extents in scene " + s.id);
    }
  }
}

SyntheticSceneSpec parse_synth_spec(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("synth spec: ") + e.what());
  }
  SyntheticSceneSpec s;
  try {
    s.seed = j.value("seed", s.seed);
    s.point_density = j.value("point_density", s.point_density);
    s.color_noise = j.value("color_noise", s.color_noise);
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    if (j.contains("intrinsics")) {
      const auto& k = j["intrinsics"];
      s.intrinsics = {k.at(0).get<double>(), k.at(1).get<double>(), k.at(2).get<double>(),
                      k.at(3).get<double>()};
    }
    s.min_visible_fraction = j.value("min_visible_fraction", s.min_visible_fraction);
    s.embedding_dim = j.value("embedding_dim", s.embedding_dim);
    s.embedding_seed = j.value("embedding_seed", s.embedding_seed);
    for (const auto& c : j.at("categories")) {
      SynthCategory cat;
      cat.name = c.at("name").get<std::string>();
      cat.base = c.value("split", std::string("base")) == "base";
      if (c.contains("color")) cat.color = vec3(c["color"]);
      if (c.contains("size")) cat.size = vec3(c["size"]);
      s.categories.push_back(cat);
    }
    if (j.contains("procedural")) {
      const auto& p = j["procedural"];
      s.procedural_scenes = p.value("scenes", 0);
      s.floor_category = p.value("floor", s.floor_category);
      s.wall_category = p.value("wall", s.wall_category);
      if (p.contains("room")) s.procedural_room = vec3(p["room"]);
      if (p.contains("trajectory"))
        s.procedural_trajectory = parse_trajectory(p["trajectory"], s.procedural_trajectory);
    }
    if (j.contains("scenes")) {
      for (const auto& js : j["scenes"]) {
        SynthScene sc;
        sc.id = js.at("id").get<std::string>();
        if (js.contains("room")) sc.room = vec3(js["room"]);
        for (const auto& b : js.value("boxes", json::array()))
          sc.boxes.push_back({b.at("category").get<std::string>(), vec3(b.at("min")), vec3(b.at("max"))});
        if (js.contains("trajectory")) sc.trajectory = parse_trajectory(js["trajectory"], sc.trajectory);
        s.scenes.push_back(std::move(sc));
      }
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

SyntheticSceneSpec load_synth_spec(const std::string& path) {
  return parse_synth_spec(io::read_file(path));
}

std::string synth_spec_to_json(const SyntheticSceneSpec& s) {
  ordered_json cats = ordered_json::array();
  for (const auto& c : s.categories)
    cats.push_back({{"name", c.name}, {"split", c.base ? "base" : "novel"},
                    {"color", to_json(c.color)}, {"size", to_json(c.size)}});
  ordered_json j{{"seed", s.seed},
                 {"point_density", s.point_density},
                 {"color_noise", s.color_noise},
                 {"width", s.width},
                 {"height", s.height},
                 {"intrinsics", {s.intrinsics.fx, s.intrinsics.fy, s.intrinsics.cx, s.intrinsics.cy}},
                 {"min_visible_fraction", s.min_visible_fraction},
                 {"embedding_dim", s.embedding_dim},
                 {"embedding_seed", s.embedding_seed},
                 {"categories", cats}};
  if (s.procedural_scenes > 0)
    j["procedural"] = {{"scenes", s.procedural_scenes},
                       {"floor", s.floor_category},
                       {"wall", s.wall_category},
                       {"room", to_json(s.procedural_room)},
                       {"trajectory", trajectory_json(s.procedural_trajectory)}};
  if (!s.scenes.empty()) {
    ordered_json scenes = ordered_json::array();
    for (const auto& sc : s.scenes) {
      ordered_json boxes = ordered_json::array();
      for (const auto& b : sc.boxes)
        boxes.push_back({{"category", b.category}, {"min", to_json(b.min)}, {"max", to_json(b.max)}});
      scenes.push_back({{"id", sc.id}, {"room", to_json(sc.room)}, {"boxes", boxes},
                        {"trajectory", trajectory_json(sc.trajectory)}});
    }
    j["scenes"] = scenes;
  }
  return j.dump(2) + "\n";
}

SyntheticSceneSpec default_synth_spec() {
  SyntheticSceneSpec s;
  s.seed = 7;
  s.categories = {
      {"wall", true, {0.85, 0.85, 0.80}, {0, 0, 0}},
      {"floor", true, {0.55, 0.40, 0.30}, {0, 0, 0}},
      {"cabinet", true, {0.60, 0.45, 0.10}, {0.9, 0.5, 1.0}},
      {"chair", true, {0.20, 0.40, 0.85}, {0.6, 0.6, 0.9}},
      {"sofa", false, {0.90, 0.15, 0.55}, {1.6, 0.8, 0.8}},
      {"bookshelf", false, {0.55, 0.15, 0.90}, {1.0, 0.4, 1.8}},
  };
  s.procedural_scenes = 8;
  return s;
}

std::string template_caption(const std::vector<std::string>& names) {
  if (names.empty()) return "a room";
  std::string out = "a room with a " + names[0];
  for (std::size_t i = 1; i < names.size(); ++i)
    out += (i + 1 == names.size() ? " and a " : ", a ") + names[i];
  return out;
}

void render_depth(const std::vector<SynthBox>& boxes, CameraFrame& frame, std::vector<int>* hit_box) {
  const auto& k = frame.intrinsics;
  const Eigen::Matrix3d r = frame.world_from_camera.topLeftCorner<3, 3>();
  const Eigen::Vector3d o = frame.world_from_camera.topRightCorner<3, 1>();
  if (hit_box) hit_box->assign(static_cast<std::size_t>(frame.depth.size()), -1);
  for (int v = 0; v < frame.height(); ++v) {
    for (int u = 0; u < frame.width(); ++u) {
      const Eigen::Vector3d d = r * Eigen::Vector3d((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      double best = std::numeric_limits<double>::infinity();
      int which = -1;
      for (std::size_t b = 0; b < boxes.size(); ++b) {
        const double t = ray_box(o, d, boxes[b]);
        if (t < best) {
          best = t;
          which = static_cast<int>(b);
        }
      }
      // camera-z of a hit equals the ray parameter because the ray has unit z
      frame.depth(v, u) = which >= 0 ? static_cast<float>(best) : 0.0f;
      if (hit_box) (*hit_box)[static_cast<std::size_t>(v * frame.width() + u)] = which;
    }
  }
}

SynthDataset generate_synthetic(const SyntheticSceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SynthDataset out;
  std::map<std::string, int> label_of;
  for (std::size_t k = 0; k < spec.categories.size(); ++k) {
    out.categories.names.push_back(spec.categories[k].name);
    out.categories.base_mask.push_back(spec.categories[k].base);
    label_of[spec.categories[k].name] = static_cast<int>(k);
  }

  std::vector<SynthScene> scenes = spec.scenes;
  for (int i = 0; i < spec.procedural_scenes; ++i)
    scenes.push_back(procedural_scene(spec, static_cast<int>(spec.scenes.size()) + i, rng));

  EmbeddingTable table(spec.embedding_dim);
  auto add_text = [&](const std::string& t) {
    if (!table.find(t)) table.set(t, fallback_embed(t, spec.embedding_dim, spec.embedding_seed).cast<float>());
  };
  for (const auto& c : spec.categories) add_text(c.name);

  for (const auto& sc : scenes) {
    SynthSceneData data;
    data.cloud = sample_surfaces(sc, spec, label_of, rng);
    if (data.cloud.size() == 0) throw InputError("synth: scene " + sc.id + " has no surface points");
    const auto min_pixels = spec.min_visible_fraction * spec.width * spec.height;
    for (int f = 0; f < sc.trajectory.frames; ++f) {
      CameraFrame frame;
      frame.frame_id = fmt::format("frame_{:03d}", f);
      frame.intrinsics = spec.intrinsics;
      frame.world_from_camera = ring_pose(sc.trajectory, f);
      frame.depth = DepthImage::Zero(spec.height, spec.width);
      std::vector<int> hits;
      render_depth(sc.boxes, frame, &hits);
      std::vector<int> pixels(spec.categories.size(), 0);
      for (const int h : hits)
        if (h >= 0) ++pixels[static_cast<std::size_t>(label_of.at(sc.boxes[static_cast<std::size_t>(h)].category))];
      std::vector<std::string> visible;
      for (std::size_t k = 0; k < pixels.size(); ++k)
        if (pixels[k] > 0 && pixels[k] >= min_pixels) visible.push_back(spec.categories[k].name);
      CaptionRecord cap;
      cap.scene_id = sc.id;
      cap.frame_id = frame.frame_id;
      cap.level = CaptionLevel::View;
      cap.text = template_caption(visible);
      add_text(cap.text);
      data.captions.push_back(cap);
      data.frames.push_back(std::move(frame));
    }
    add_text(scene_caption(data.captions, {}).text);
    out.scenes.push_back(std::move(data));
  }

  // every possible entity caption: sorted concatenations of category subsets
  const std::size_t k = spec.categories.size();
  const std::size_t max_words = k <= 10 ? k : 2;
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << std::min<std::size_t>(k, 20)); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcountll(mask)) > max_words) continue;
    std::vector<std::string> words;
    for (std::size_t b = 0; b < k; ++b)
      if (mask >> b & 1U) words.push_back(spec.categories[b].name);
    add_text(EntitySet(words).concat());
  }

  std::vector<std::string> phrases;
  for (const auto& c : spec.categories) phrases.push_back(c.name);
  out.lexicon = Lexicon(phrases);
  out.embeddings = std::move(table);
  return out;
}

}  // namespace pla
