#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pla/association.hpp"
#include "pla/geometry.hpp"
#include "pla/text.hpp"

namespace pla {

struct SynthCategory {
  std::string name;
  bool base = true;
  Eigen::Vector3d color{0.5, 0.5, 0.5};
  Eigen::Vector3d size{0.5, 0.5, 0.5};  // footprint and height for procedural placement
};

struct SynthBox {
  std::string category;
  Eigen::Vector3d min, max;
};

/// Ring of poses around `center`, looking outward and pitched down.
struct SynthTrajectory {
  Eigen::Vector3d center{2.0, 2.0, 1.4};
  double radius = 0.3;
  int frames = 30;
  double pitch_deg = 20.0;
  double start_deg = 0.0;
};

struct SynthScene {
  std::string id;
  Eigen::Vector3d room{4.0, 4.0, 2.5};
  std::vector<SynthBox> boxes;
  SynthTrajectory trajectory;
};

struct SyntheticSceneSpec {
  std::uint64_t seed = 7;
  std::vector<SynthCategory> categories;
  double point_density = 250.0;   // points per square meter of exposed surface
  double color_noise = 0.05;
  Intrinsics intrinsics{60.0, 60.0, 39.5, 29.5};
  int width = 80, height = 60;
  double min_visible_fraction = 0.02;
  int embedding_dim = 64;
  std::uint64_t embedding_seed = 1;

  std::vector<SynthScene> scenes;
  /// Additional scenes with walls, floor and randomly placed objects.
  int procedural_scenes = 0;
  std::string floor_category = "floor";
  std::string wall_category = "wall";
  Eigen::Vector3d procedural_room{4.0, 4.0, 2.5};
  SynthTrajectory procedural_trajectory;

  void validate() const;
};

SyntheticSceneSpec parse_synth_spec(const std::string& json_text);
SyntheticSceneSpec load_synth_spec(const std::string& path);
std::string synth_spec_to_json(const SyntheticSceneSpec& spec);
SyntheticSceneSpec default_synth_spec();

struct SynthSceneData {
  PointCloud cloud;
  std::vector<CameraFrame> frames;
  std::vector<CaptionRecord> captions;
};

struct SynthDataset {
  CategoryList categories;
  std::vector<SynthSceneData> scenes;
  Lexicon lexicon;
  EmbeddingTable embeddings;
};

/// Deterministic given spec.seed.
SynthDataset generate_synthetic(const SyntheticSceneSpec& spec);

/// "a room", "a room with a X", "a room with a X and a Y",
/// "a room with a X, a Y and a Z".
std::string template_caption(const std::vector<std::string>& names);

/// Nearest box hit per pixel (camera z), and the hit box index or -1.
void render_depth(const std::vector<SynthBox>& boxes, CameraFrame& frame,
                  std::vector<int>* hit_box = nullptr);

}  // namespace pla
