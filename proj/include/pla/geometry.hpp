#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "pla/common.hpp"

namespace pla {

using PointIndex = std::uint32_t;
using Points3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using DepthImage = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Labeled point cloud for one scene. Labels index an ordered category list
/// or hold kIgnored.
struct PointCloud {
  std::string scene_id;
  Points3 positions;  // meters
  Points3 colors;     // [0,1]
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  /// Throws InputError when an invariant fails. Pass 0 to skip the label
  /// range check.
  void validate(std::size_t num_categories) const;
};

struct Intrinsics {
  double fx = 1, fy = 1, cx = 0, cy = 0;
};

struct CameraFrame {
  std::string frame_id;
  Intrinsics intrinsics;
  Eigen::Matrix4d world_from_camera = Eigen::Matrix4d::Identity();
  DepthImage depth;  // meters, 0 = invalid

  int height() const { return static_cast<int>(depth.rows()); }
  int width() const { return static_cast<int>(depth.cols()); }
  void validate() const;
};

/// World point for a (possibly fractional) pixel at depth d.
Eigen::Vector3d pixel_to_world(const CameraFrame& frame, double u, double v, double d);

/// Forward pinhole projection; (u, v, depth). Empty when the point is not in
/// front of the camera.
std::optional<Eigen::Vector3d> world_to_pixel(const CameraFrame& frame,
                                              const Eigen::Vector3d& world);

/// Back-projects every stride-th pixel with positive depth, row-major order.
Points3 back_project(const CameraFrame& frame, int stride = 1);

using CellKey = std::array<std::int64_t, 3>;

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    // large odd multipliers, mixed
    std::uint64_t h = static_cast<std::uint64_t>(k[0]) * 73856093ULL;
    h ^= static_cast<std::uint64_t>(k[1]) * 19349663ULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k[2]) * 83492791ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

CellKey cell_of(const Eigen::Vector3d& p, double voxel_size);

struct VoxelIndex {
  double voxel_size = 0.05;
  std::unordered_map<CellKey, std::vector<PointIndex>, CellKeyHash> cells;

  std::size_t point_count() const;
  /// Cell keys in lexicographic order.
  std::vector<CellKey> sorted_keys() const;
};

VoxelIndex build_voxel_index(const Points3& points, double voxel_size);

/// Sorted, unique indices into one scene's point cloud.
struct PointIndexSet {
  std::string scene_id;
  std::vector<PointIndex> indices;

  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
  bool operator==(const PointIndexSet&) const = default;
};

/// Scene points whose voxel center lies within `radius` of an occupied voxel
/// center of the back-projected set.
PointIndexSet view_overlap(const PointCloud& scene, const Points3& back_projected,
                           double voxel_size, double radius);

// --- files -----------------------------------------------------------------

struct SceneFile {
  PointCloud cloud;
  std::uint32_t category_count = 0;
};

/// Binary "PLAS" scene, or whitespace-separated text when the path ends in
/// .tsv/.txt. The scene id is the file stem.
SceneFile load_scene(const std::string& path);
void save_scene(const std::string& path, const PointCloud& cloud,
                std::uint32_t category_count);

/// Text header plus a sibling ".depth" blob of H*W little-endian f32.
CameraFrame load_frame(const std::string& path);
void save_frame(const std::string& path, const CameraFrame& frame);
std::string depth_path_for(const std::string& frame_path);

}  // namespace pla
