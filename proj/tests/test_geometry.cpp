#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <doctest.h>

#include "pla/common.hpp"
#include "pla/geometry.hpp"
#include "test_util.hpp"

using namespace pla;

namespace {

CameraFrame flat_frame(int h, int w, float d) {
  CameraFrame f;
  f.frame_id = "f";
  f.intrinsics = {1, 1, 0, 0};
  f.depth = DepthImage::Constant(h, w, d);
  return f;
}

}  // namespace

TEST_CASE("back_project: identity camera, pixel origin") {
  auto f = flat_frame(1, 1, 1.0f);
  const Points3 p = back_project(f);
  REQUIRE(p.rows() == 1);
  CHECK(p(0, 0) == 0.0);
  CHECK(p(0, 1) == 0.0);
  CHECK(p(0, 2) == 1.0);
}

TEST_CASE("back_project: zero depth emits nothing") {
  CHECK(back_project(flat_frame(3, 5, 0.0f)).rows() == 0);
}

TEST_CASE("back_project: 30 degree rotation against hand-multiplied rays") {
  CameraFrame f;
  f.intrinsics = {2.0, 3.0, 1.5, 1.5};
  f.depth = DepthImage::Constant(4, 4, 2.0f);
  const double c = std::sqrt(3.0) / 2.0, s = 0.5;
  // rotation about y by 30 degrees, translation (1, -2, 0.5)
  const double m[4][4] = {{c, 0, s, 1}, {0, 1, 0, -2}, {-s, 0, c, 0.5}, {0, 0, 0, 1}};
  for (int r = 0; r < 4; ++r)
    for (int k = 0; k < 4; ++k) f.world_from_camera(r, k) = m[r][k];

  const Points3 p = back_project(f);
  REQUIRE(p.rows() == 16);
  int row = 0;
  for (int v = 0; v < 4; ++v) {
    for (int u = 0; u < 4; ++u, ++row) {
      const double cam[4] = {2.0 * (u - 1.5) / 2.0, 2.0 * (v - 1.5) / 3.0, 2.0, 1.0};
      for (int a = 0; a < 3; ++a) {
        double w = 0;
        for (int k = 0; k < 4; ++k) w += m[a][k] * cam[k];
        CHECK(std::abs(p(row, a) - w) < 1e-9);
      }
    }
  }
}

TEST_CASE("back_project: stride subsamples the grid in row-major order") {
  auto f = flat_frame(4, 6, 1.0f);
  f.depth(2, 4) = 0.0f;
  const Points3 p = back_project(f, 2);
  // sampled pixels: rows 0,2 x cols 0,2,4, minus (2,4)
  REQUIRE(p.rows() == 5);
  CHECK(p(2, 0) == 4.0);
  CHECK(p(3, 0) == 0.0);
  CHECK(p(3, 1) == 2.0);
  CHECK(p(4, 0) == 2.0);
}

TEST_CASE("back_project: rejects non-orthonormal rotation") {
  auto f = flat_frame(2, 2, 1.0f);
  f.world_from_camera(0, 0) = 2.0;
  CHECK_THROWS_AS(back_project(f), InputError);
}

TEST_CASE("projection round trip") {
  std::mt19937_64 rng(11);
  const CameraFrame f = test::random_frame(rng, 48, 64);
  std::uniform_real_distribution<double> uu(0.0, 63.0), vv(0.0, 47.0), dd(0.3, 6.0);
  for (int t = 0; t < 1000; ++t) {
    const Eigen::Vector3d w = pixel_to_world(f, uu(rng), vv(rng), dd(rng));
    const auto px = world_to_pixel(f, w);
    REQUIRE(px);
    const Eigen::Vector3d back = pixel_to_world(f, (*px)[0], (*px)[1], (*px)[2]);
    CHECK((back - w).norm() < 1e-6);
  }
}

TEST_CASE("world_to_pixel: behind the camera is empty") {
  const auto f = flat_frame(2, 2, 1.0f);
  CHECK_FALSE(world_to_pixel(f, {0, 0, -1}));
}

TEST_CASE("build_voxel_index: examples") {
  Points3 one(1, 3);
  one << 0.01, 0.01, 0.01;
  const auto a = build_voxel_index(one, 0.05);
  REQUIRE(a.cells.size() == 1);
  CHECK(a.cells.at({0, 0, 0}) == std::vector<PointIndex>{0});

  Points3 two(2, 3);
  two << 0.01, 0.01, 0.01, 0.06, 0.01, 0.01;
  const auto b = build_voxel_index(two, 0.05);
  CHECK(b.cells.size() == 2);
  CHECK(b.cells.count({0, 0, 0}) == 1);
  CHECK(b.cells.count({1, 0, 0}) == 1);

  Points3 neg(1, 3);
  neg << -0.01, 0.0, 0.049;
  CHECK(build_voxel_index(neg, 0.05).cells.count({-1, 0, 0}) == 1);
}

TEST_CASE("build_voxel_index: partitions the point indices") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Points3 pts(1000, 3);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) pts.row(i) << u(rng), u(rng), u(rng);
  const auto idx = build_voxel_index(pts, 0.1);
  std::vector<int> seen(1000, 0);
  for (const auto& [key, members] : idx.cells)
    for (const auto i : members) {
      ++seen[i];
      CHECK(cell_of(pts.row(i).transpose(), 0.1) == key);
    }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  CHECK(idx.point_count() == 1000);
}

TEST_CASE("build_voxel_index: rejects bad input") {
  Points3 pts(1, 3);
  pts << 0, std::nan(""), 0;
  CHECK_THROWS_AS(build_voxel_index(pts, 0.1), InputError);
  pts << 0, 0, 0;
  CHECK_THROWS_AS(build_voxel_index(pts, 0.0), InputError);
}

TEST_CASE("view_overlap: self overlap and disjoint sets") {
  std::mt19937_64 rng(5);
  const PointCloud scene = test::random_cloud(rng, 300, 1.0);
  const auto all = view_overlap(scene, scene.positions, 0.05, 0.05);
  CHECK(all.size() == scene.size());
  const auto tiny = view_overlap(scene, scene.positions, 0.05, 1e-6);
  CHECK(tiny.size() == scene.size());

  Points3 far = scene.positions;
  far.col(0).array() += 10.0;
  CHECK(view_overlap(scene, far, 0.05, 0.1).empty());
  CHECK(view_overlap(scene, Points3(0, 3), 0.05, 0.1).empty());
}

TEST_CASE("view_overlap: matches brute-force voxel-center oracle") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 20; ++t) {
    const PointCloud scene = test::random_cloud(rng, 200, 0.6);
    const Points3 bp = test::random_points(rng, 50, 0.6);
    const double vs = 0.05, r = t % 2 ? 0.05 : 0.12;
    CHECK(view_overlap(scene, bp, vs, r).indices == test::brute_overlap(scene.positions, bp, vs, r));
  }
}

TEST_CASE("view_overlap: permutation invariant and monotone in radius") {
  std::mt19937_64 rng(23);
  const PointCloud scene = test::random_cloud(rng, 400, 1.0);
  const Points3 bp = test::random_points(rng, 80, 0.5);
  const auto base = view_overlap(scene, bp, 0.05, 0.07);

  std::vector<PointIndex> perm(scene.size());
  std::iota(perm.begin(), perm.end(), PointIndex{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  PointCloud shuffled = scene;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled.positions.row(static_cast<Eigen::Index>(i)) = scene.positions.row(perm[i]);
    shuffled.labels[i] = scene.labels[perm[i]];
  }
  std::vector<PointIndex> mapped;
  for (const auto i : view_overlap(shuffled, bp, 0.05, 0.07).indices) mapped.push_back(perm[i]);
  std::sort(mapped.begin(), mapped.end());
  CHECK(mapped == base.indices);

  std::vector<PointIndex> prev;
  for (const double r : {0.01, 0.05, 0.08, 0.15, 0.3}) {
    const auto cur = view_overlap(scene, bp, 0.05, r).indices;
    CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
    prev = cur;
  }
}

TEST_CASE("scene and frame files round trip") {
  test::TempDir dir;
  std::mt19937_64 rng(2);
  PointCloud cloud = test::random_cloud(rng, 25, 1.0);
  cloud.scene_id = "room";
  cloud.labels[3] = kIgnored;
  save_scene(dir.path("room.scene"), cloud, 4);
  const SceneFile sf = load_scene(dir.path("room.scene"));
  CHECK(sf.cloud.scene_id == "room");
  CHECK(sf.category_count == 4);
  CHECK(sf.cloud.labels == cloud.labels);
  CHECK((sf.cloud.positions - cloud.positions).cwiseAbs().maxCoeff() < 1e-6);

  const CameraFrame f = test::random_frame(rng, 6, 7);
  save_frame(dir.path("frame_000.txt"), f);
  const CameraFrame g = load_frame(dir.path("frame_000.txt"));
  CHECK(g.frame_id == "frame_000");
  CHECK(g.depth == f.depth);
  CHECK((g.world_from_camera - f.world_from_camera).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(depth_path_for(dir.path("frame_000.txt")) == dir.path("frame_000.depth"));
}

TEST_CASE("scene text files") {
  test::TempDir dir;
  test::write_text(dir.path("tiny.tsv"), "0 0 0 0.5 0.5 0.5 1\n1 2 3 0 0 1 -1\n");
  const auto sf = load_scene(dir.path("tiny.tsv"));
  CHECK(sf.cloud.size() == 2);
  CHECK(sf.cloud.labels == std::vector<int>{1, kIgnored});
  CHECK(sf.cloud.positions(1, 2) == 3.0);
  test::write_text(dir.path("bad.tsv"), "0 0 0 0.5 0.5\n");
  CHECK_THROWS_AS(load_scene(dir.path("bad.tsv")), InputError);
}
