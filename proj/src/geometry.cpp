#include "pla/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <Eigen/Dense>

#include "pla/common.hpp"

namespace pla {

void PointCloud::validate(std::size_t num_categories) const {
  const auto n = labels.size();
  if (n == 0) throw InputError("scene " + scene_id + ": empty point cloud");
  if (static_cast<std::size_t>(positions.rows()) != n ||
      static_cast<std::size_t>(colors.rows()) != n)
    throw InputError("scene " + scene_id + ": positions/colors/labels size mismatch");
  if (!positions.allFinite()) throw InputError("scene " + scene_id + ": non-finite position");
  if (!colors.allFinite() || colors.minCoeff() < 0.0 || colors.maxCoeff() > 1.0)
    throw InputError("scene " + scene_id + ": color outside [0,1]");
  for (std::size_t i = 0; i < n; ++i) {
    const int l = labels[i];
    if (l == kIgnored) continue;
    if (l < 0 || (num_categories > 0 && static_cast<std::size_t>(l) >= num_categories))
      throw InputError("scene " + scene_id + ": label " + std::to_string(l) +
                       " out of range at point " + std::to_string(i));
  }
}

void CameraFrame::validate() const {
  const auto& k = intrinsics;
  if (!(k.fx > 0) || !(k.fy > 0) || !std::isfinite(k.cx) || !std::isfinite(k.cy))
    throw InputError("frame " + frame_id + ": focal lengths must be positive");
  const Eigen::Matrix3d r = world_from_camera.topLeftCorner<3, 3>();
  if (!world_from_camera.allFinite())
    throw InputError("frame " + frame_id + ": non-finite pose");
  if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
      std::abs(r.determinant() - 1.0) > 1e-6)
    throw InputError("frame " + frame_id + ": rotation block is not orthonormal");
  if ((world_from_camera.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9)
    throw InputError("frame " + frame_id + ": pose bottom row must be (0,0,0,1)");
  if (depth.size() > 0 && (!depth.allFinite() || depth.minCoeff() < 0.0f))
    throw InputError("frame " + frame_id + ": depth must be finite and >= 0");
}

Eigen::Vector3d pixel_to_world(const CameraFrame& frame, double u, double v, double d) {
  const auto& k = frame.intrinsics;
  const Eigen::Vector4d cam(d * (u - k.cx) / k.fx, d * (v - k.cy) / k.fy, d, 1.0);
  return (frame.world_from_camera * cam).head<3>();
}

std::optional<Eigen::Vector3d> world_to_pixel(const CameraFrame& frame,
                                              const Eigen::Vector3d& world) {
  const Eigen::Matrix3d r = frame.world_from_camera.topLeftCorner<3, 3>();
  const Eigen::Vector3d t = frame.world_from_camera.topRightCorner<3, 1>();
  const Eigen::Vector3d cam = r.transpose() * (world - t);
  if (cam.z() <= 0.0) return std::nullopt;
  const auto& k = frame.intrinsics;
  return Eigen::Vector3d(k.fx * cam.x() / cam.z() + k.cx, k.fy * cam.y() / cam.z() + k.cy,
                         cam.z());
}

Points3 back_project(const CameraFrame& frame, int stride) {
  if (stride < 1) throw InputError("back_project: stride must be >= 1");
  frame.validate();
  std::vector<Eigen::Vector3d> out;
  for (int v = 0; v < frame.height(); v += stride) {
    for (int u = 0; u < frame.width(); u += stride) {
      const double d = frame.depth(v, u);
      if (d > 0.0) out.push_back(pixel_to_world(frame, u, v, d));
    }
  }
  Points3 pts(static_cast<Eigen::Index>(out.size()), 3);
  for (std::size_t i = 0; i < out.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) = out[i];
  return pts;
}

CellKey cell_of(const Eigen::Vector3d& p, double voxel_size) {
  return {static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
}

std::size_t VoxelIndex::point_count() const {
  std::size_t n = 0;
  for (const auto& [_, idx] : cells) n += idx.size();
  return n;
}

std::vector<CellKey> VoxelIndex::sorted_keys() const {
  std::vector<CellKey> keys;
  keys.reserve(cells.size());
  for (const auto& [k, _] : cells) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  return keys;
}

VoxelIndex build_voxel_index(const Points3& points, double voxel_size) {
  if (!(voxel_size > 0.0)) throw InputError("voxel_size must be positive");
  if (!points.allFinite()) throw InputError("build_voxel_index: non-finite coordinate");
  VoxelIndex index;
  index.voxel_size = voxel_size;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    index.cells[cell_of(points.row(i).transpose(), voxel_size)].push_back(
        static_cast<PointIndex>(i));
  return index;
}

namespace {

// Integer cell offsets whose center distance is within radius.
std::vector<CellKey> neighborhood(double voxel_size, double radius) {
  const double rho = radius / voxel_size;
  const double rho2 = rho * rho * (1.0 + 1e-9);
  const auto reach = static_cast<std::int64_t>(std::ceil(rho));
  std::vector<CellKey> offs;
  for (std::int64_t dx = -reach; dx <= reach; ++dx)
    for (std::int64_t dy = -reach; dy <= reach; ++dy)
      for (std::int64_t dz = -reach; dz <= reach; ++dz)
        if (static_cast<double>(dx * dx + dy * dy + dz * dz) <= rho2) offs.push_back({dx, dy, dz});
  return offs;
}

}  // namespace

PointIndexSet view_overlap(const PointCloud& scene, const Points3& back_projected,
                           double voxel_size, double radius) {
  if (!(voxel_size > 0.0)) throw InputError("voxel_size must be positive");
  if (!(radius > 0.0)) throw InputError("radius must be positive");
  PointIndexSet result{scene.scene_id, {}};
  if (back_projected.rows() == 0) return result;

  const VoxelIndex bp = build_voxel_index(back_projected, voxel_size);
  const VoxelIndex sc = build_voxel_index(scene.positions, voxel_size);
  const auto offsets = neighborhood(voxel_size, radius);
  const double rho2 = (radius / voxel_size) * (radius / voxel_size) * (1.0 + 1e-9);

  auto touches = [&](const CellKey& c) {
    if (offsets.size() <= bp.cells.size()) {
      for (const auto& o : offsets)
        if (bp.cells.count({c[0] + o[0], c[1] + o[1], c[2] + o[2]})) return true;
      return false;
    }
    for (const auto& [b, _] : bp.cells) {
      const double dx = double(b[0] - c[0]), dy = double(b[1] - c[1]), dz = double(b[2] - c[2]);
      if (dx * dx + dy * dy + dz * dz <= rho2) return true;
    }
    return false;
  };

  for (const auto& [cell, idx] : sc.cells)
    if (touches(cell)) result.indices.insert(result.indices.end(), idx.begin(), idx.end());
  std::sort(result.indices.begin(), result.indices.end());
  return result;
}

}  // namespace pla
