#include <doctest.h>

#include <cmath>

#include "voxforge/metrics.hpp"
#include "voxforge/rng.hpp"
#include "voxforge/scene.hpp"

using namespace voxforge;
using namespace voxforge::metrics;

namespace {

std::vector<Vec3> random_points(std::size_t n, Rng& rng, double extent = 5.0) {
  std::vector<Vec3> pts(n);
  for (auto& p : pts)
    p = {rng.uniform(-extent, extent), rng.uniform(-extent, extent),
         rng.uniform(-extent, extent)};
  return pts;
}

// independent O(n^2) oracle
double chamfer_brute(const std::vector<Vec3>& x, const std::vector<Vec3>& y) {
  auto side = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    double s = 0.0;
    for (const auto& a : from) {
      double best = 1e300;
      for (const auto& b : to) {
        double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
        double d2 = dx * dx + dy * dy + dz * dz;
        if (d2 < best) best = d2;
      }
      s += std::sqrt(best);
    }
    return s / static_cast<double>(from.size());
  };
  return 0.5 * (side(x, y) + side(y, x));
}

}  // namespace

TEST_CASE("chamfer basics") {
  std::vector<Vec3> x = {{0, 0, 0}};
  std::vector<Vec3> y = {{1, 0, 0}};
  CHECK(chamfer(x, x) == 0.0);
  CHECK(chamfer(x, y) == 1.0);

  std::vector<Vec3> x2 = {{0, 0, 0}, {2, 0, 0}};
  CHECK(chamfer(x2, y) == chamfer_brute(x2, y));
  CHECK(chamfer(x2, y) == 1.0);

  CHECK_THROWS_AS(chamfer({}, y), Error);
  CHECK_THROWS_AS(chamfer(x, {}), Error);
}

TEST_CASE("chamfer equals brute force bit-exactly on random sets") {
  Rng rng(8);
  for (int it = 0; it < 50; ++it) {
    auto x = random_points(1 + static_cast<std::size_t>(rng.uniform_int(0, 199)), rng);
    auto y = random_points(1 + static_cast<std::size_t>(rng.uniform_int(0, 199)), rng);
    double a = chamfer(x, y);
    double b = chamfer_brute(x, y);
    CHECK(a == b);
    CHECK(chamfer(x, y) == chamfer(y, x));
  }
}

TEST_CASE("nn index equals brute force") {
  Rng rng(9);
  auto pts = random_points(500, rng);
  NnIndex idx(pts);
  for (int it = 0; it < 2000; ++it) {
    Vec3 q{rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(-8, 8)};
    auto [d2, i] = idx.nearest(q);
    double best = 1e300;
    std::size_t bi = 0;
    for (std::size_t p = 0; p < pts.size(); ++p) {
      double dx = pts[p].x - q.x, dy = pts[p].y - q.y, dz = pts[p].z - q.z;
      double v = dx * dx + dy * dy + dz * dz;
      if (v < best) {
        best = v;
        bi = p;
      }
    }
    CHECK(d2 == best);
    CHECK(i == bi);
  }
}

TEST_CASE("tmd formula") {
  std::vector<Vec3> a = {{0, 0, 0}};
  std::vector<Vec3> b = {{1, 0, 0}};
  // one partial, k=2, CD = 1 -> TMD = (2/(2*1)) * 1 = 1
  CHECK(tmd({{a, b}}) == 1.0);
  // k identical completions -> 0
  CHECK(tmd({{a, a, a}}) == 0.0);
  // k = 1 -> undefined denominator -> error
  CHECK_THROWS_AS(tmd({{a}}), Error);

  // direct formula check for k=3
  std::vector<Vec3> c = {{0, 2, 0}};
  double expect = (chamfer_brute(a, b) + chamfer_brute(a, c) + chamfer_brute(b, c)) / 3.0;
  CHECK(tmd({{a, b, c}}) == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("street cd filtering") {
  Aabb street;
  street.lo = {-10, -3, -1};
  street.hi = {10, 3, 5};
  std::vector<Vec3> gt = {{0, 0, 1.0}, {1, 0, 0.5}, {0, 0, 0.05}};
  std::vector<Vec3> pred = gt;
  CHECK(street_cd(pred, gt, street) == 0.0);

  // ground-only prediction -> everything filtered -> error
  std::vector<Vec3> ground = {{0, 0, 0.0}, {1, 1, 0.1}};
  CHECK_THROWS_AS(street_cd(ground, gt, street), Error);

  // shifted box matches brute force on the filtered remainders
  Rng rng(12);
  std::vector<Vec3> box_gt, box_pred;
  for (int i = 0; i < 100; ++i) {
    Vec3 p{rng.uniform(-2, 2), rng.uniform(-1, 1), rng.uniform(0.3, 1.5)};
    box_gt.push_back(p);
    box_pred.push_back(p + Vec3{0.05, 0, 0});
  }
  double got = street_cd(box_pred, box_gt, street);
  CHECK(got == chamfer_brute(box_pred, box_gt));
}

TEST_CASE("tsdf fusion of a frontal wall") {
  // wall at x = 5, sensor at origin looking +x
  TriMesh wall = TriMesh::box({5.0, -10, -5}, {5.3, 10, 5});
  Bvh bvh(wall);
  lidar::BeamConfig beams;
  beams.elevations_deg.resize(64);
  for (int i = 0; i < 64; ++i) beams.elevations_deg[i] = -40.0 + 80.0 * i / 63.0;
  beams.azimuth_count = 720;
  beams.min_range = 0.3;
  beams.max_range = 50.0;
  lidar::NoiseModel off;
  off.enabled = false;
  auto result = lidar::scan(bvh, lidar::Pose{}, beams, 0, off);

  VolumeSpec roi({4.0, -1.0, -1.0}, {2.0, 2.0, 2.0}, 0.1);
  auto tsdf = tsdf_fuse({result.image}, roi);

  // voxel 0.1 m in front of the wall along the ray: tsdf ~ +0.1
  auto probe = roi.locate({4.9, 0.05, 0.05});
  REQUIRE(probe.has_value());
  CHECK(tsdf.weight_at(*probe) > 0.f);
  CHECK(tsdf.tsdf_at(*probe) == doctest::Approx(0.1).epsilon(0.25));

  // voxel far behind the wall: occluded, weight 0
  auto behind = roi.locate({5.9, 0.05, 0.05});
  REQUIRE(behind.has_value());
  CHECK(tsdf.weight_at(*behind) == 0.f);

  // two identical views average to the same field
  auto tsdf2 = tsdf_fuse({result.image, result.image}, roi);
  CHECK(tsdf2.tsdf_at(*probe) == doctest::Approx(tsdf.tsdf_at(*probe)).epsilon(1e-6));
}

TEST_CASE("visibility mask thresholds and pooling") {
  auto make = [](double tsdf_val, float weight) {
    TsdfGrid g;
    g.volume = VolumeSpec({0, 0, 0}, {0.4, 0.4, 0.4}, 0.1);
    g.tsdf.assign(g.volume.cell_count(), static_cast<float>(tsdf_val));
    g.weight.assign(g.volume.cell_count(), weight);
    return g;
  };
  auto vis = visibility_mask(make(0.0, 1.f));
  CHECK(vis.size() == 8);  // 4^3 at 10cm -> 2^3 at 20cm, all visible

  CHECK(visibility_mask(make(0.0, 0.f)).empty());         // never observed
  CHECK(visibility_mask(make(-0.31, 1.f)).empty());       // below threshold
  CHECK(visibility_mask(make(0.0, 1.f), 1e9).empty());    // +inf threshold

  // monotone in threshold
  auto g = make(0.0, 1.f);
  Rng rng(3);
  for (auto& t : g.tsdf) t = static_cast<float>(rng.uniform(-0.3, 0.3));
  auto lo = visibility_mask(g, -0.2);
  auto hi = visibility_mask(g, 0.1);
  for (const auto& c : hi) {
    bool in_lo = std::find(lo.begin(), lo.end(), c) != lo.end();
    CHECK(in_lo);
  }
}

TEST_CASE("resim identity and pose selection") {
  auto scene = lidar::gen_scene(11);
  Bvh bvh(scene.mesh);
  Aabb roi;
  roi.lo = {-4.8, -4.8, -0.8};
  roi.hi = {4.8, 4.8, 2.4};
  auto poses = select_resim_poses(scene.trajectory, roi, {});
  REQUIRE(poses.size() == 2);
  CHECK(roi.contains(poses[0].position));
  CHECK(roi.contains(poses[1].position));
  CHECK(poses[0].position.x < poses[1].position.x);

  lidar::BeamConfig beams = lidar::eval_beams();
  beams.azimuth_count = 256;  // keep the test fast
  auto res = lidar_resim_cd(bvh, bvh, poses, roi, beams);
  CHECK(res.mean == 0.0);
  for (double v : res.per_pose) CHECK(v == 0.0);
}

TEST_CASE("report assembles and respects min <= avg") {
  auto scene = lidar::gen_scene(13);
  Bvh bvh(scene.mesh);
  Aabb roi;
  roi.lo = {-4.8, -4.8, -0.8};
  roi.hi = {4.8, 4.8, 2.4};
  VolumeSpec v20(roi.lo, roi.extent(), 0.2);

  auto gt_pts = scene_surface_points(scene, roi, 150.0, 3);
  auto gt_grid = voxelize(gt_pts, v20);

  RunArtifacts run;
  run.gt_scene = &bvh;
  std::vector<Bvh> cbvh;
  cbvh.reserve(3);
  for (int i = 0; i < 3; ++i) cbvh.emplace_back(scene.mesh);
  for (int i = 0; i < 3; ++i) {
    run.completions.push_back(&cbvh[i]);
    run.completion_points.push_back(gt_pts);
    run.completion_grids.push_back(gt_grid);
  }
  run.gt_grid = gt_grid;
  run.visibility = gt_grid.cells();
  run.gt_street_points = gt_pts;
  run.resim_poses = select_resim_poses(scene.trajectory, roi, {});
  run.roi = roi;
  run.street_roi = scene.street_roi;
  run.beams = lidar::eval_beams();
  run.beams.azimuth_count = 128;
  run.seeds = {1, 2, 3};

  auto rep = report(run, 3);
  CHECK(rep.cd_resim_min <= rep.cd_resim_avg);
  CHECK(rep.tmd == 0.0);  // identical completions
  CHECK(rep.iou == 1.0);
  CHECK(rep.street_cd == 0.0);

  auto json = rep.to_json();
  CHECK(json.find("\"cd_resim_min\"") != std::string::npos);
  CHECK(json.find("\"scaled_x10\"") != std::string::npos);
  auto csv = rep.to_csv();
  CHECK(csv.find(",3") != std::string::npos);

  // determinism
  auto rep2 = report(run, 3);
  CHECK(rep2.to_json() == rep.to_json());

  // missing artifact errors name the gap
  RunArtifacts broken = run;
  broken.gt_street_points.clear();
  CHECK_THROWS_WITH_AS(report(broken, 3), "report: missing gt street points", Error);
}
