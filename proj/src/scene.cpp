#include "voxforge/scene.hpp"

#include <algorithm>
#include <cmath>

#include "voxforge/rng.hpp"

namespace voxforge::lidar {

namespace {

void add_box_faces(std::vector<RectFace>& faces, const Vec3& lo, const Vec3& hi) {
  faces.push_back({0, lo.x, lo.y, hi.y, lo.z, hi.z});
  faces.push_back({0, hi.x, lo.y, hi.y, lo.z, hi.z});
  faces.push_back({1, lo.y, lo.x, hi.x, lo.z, hi.z});
  faces.push_back({1, hi.y, lo.x, hi.x, lo.z, hi.z});
  faces.push_back({2, lo.z, lo.x, hi.x, lo.y, hi.y});
  faces.push_back({2, hi.z, lo.x, hi.x, lo.y, hi.y});
}

struct Interval {
  double lo, hi;
};

bool overlaps_any(const std::vector<Interval>& placed, double lo, double hi) {
  for (const auto& iv : placed)
    if (lo < iv.hi && iv.lo < hi) return true;
  return false;
}

}  // namespace

std::string split_of_seed(std::uint64_t seed) {
  if (seed < 100000) return "train";
  if (seed < 200000) return "val";
  return "test";
}

double truncated_poisson_mean(double lambda, int cap) {
  double mean = 0.0, p = std::exp(-lambda), cum = 0.0;
  for (int k = 0; k < cap; ++k) {
    mean += k * p;
    cum += p;
    p *= lambda / (k + 1);
  }
  return mean + cap * (1.0 - cum);
}

Scene gen_scene(std::uint64_t seed, const SceneConfig& cfg) {
  Rng rng(rng::mix(seed, 0x5ce9e));
  Scene scene;
  scene.seed = seed;
  scene.split = split_of_seed(seed);

  // ground
  scene.faces.push_back({2, 0.0, -cfg.ground_half, cfg.ground_half, -cfg.ground_half,
                         cfg.ground_half});

  double half_len = cfg.street_length * 0.5;

  // buildings: one row per street side, random lengths/gaps along x
  for (int side = 0; side < 2; ++side) {
    double sign = side == 0 ? -1.0 : 1.0;
    double x = -half_len + rng.uniform(0.0, cfg.building_gap_max);
    while (x < half_len - cfg.building_len_min) {
      double len = rng.uniform(cfg.building_len_min, cfg.building_len_max);
      len = std::min(len, half_len - x);
      double depth = rng.uniform(cfg.building_depth_min, cfg.building_depth_max);
      double height = rng.uniform(cfg.building_height_min, cfg.building_height_max);
      double y0 = sign * cfg.building_setback;
      double y1 = sign * (cfg.building_setback + depth);
      Vec3 lo{x, std::min(y0, y1), 0.0};
      Vec3 hi{x + len, std::max(y0, y1), height};
      add_box_faces(scene.faces, lo, hi);
      x += len + rng.uniform(cfg.building_gap_min, cfg.building_gap_max);
    }
  }

  // parked cars, count ~ min(Poisson(lambda), car_max) per side
  scene.cars_per_side.resize(2);
  double park_lo = -half_len + cfg.car_len * 0.5;
  double park_hi = half_len - cfg.car_len * 0.5;
  for (int side = 0; side < 2; ++side) {
    double sign = side == 0 ? -1.0 : 1.0;
    int count = std::min(rng.poisson(cfg.car_lambda), cfg.car_max);
    scene.cars_per_side[side] = count;
    std::vector<Interval> placed;
    for (int c = 0; c < count; ++c) {
      double cx = 0.0;
      bool ok = false;
      for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
        cx = rng.uniform(park_lo, park_hi);
        ok = !overlaps_any(placed, cx - cfg.car_len * 0.5 - 0.3,
                           cx + cfg.car_len * 0.5 + 0.3);
      }
      if (!ok) {
        // first-fit fallback keeps the drawn count exact
        std::vector<Interval> sorted = placed;
        std::sort(sorted.begin(), sorted.end(),
                  [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
        double cursor = park_lo;
        for (const auto& iv : sorted) {
          if (iv.lo - cursor >= cfg.car_len + 0.6) break;
          cursor = std::max(cursor, iv.hi);
        }
        cx = cursor + 0.3 + cfg.car_len * 0.5;
      }
      placed.push_back({cx - cfg.car_len * 0.5 - 0.3, cx + cfg.car_len * 0.5 + 0.3});
      double cy = sign * cfg.car_lane_y;
      Vec3 lo{cx - cfg.car_len * 0.5, cy - cfg.car_width * 0.5, 0.0};
      Vec3 hi{cx + cfg.car_len * 0.5, cy + cfg.car_width * 0.5, cfg.car_height};
      add_box_faces(scene.faces, lo, hi);
    }
  }

  // triangulate the faces
  for (const auto& f : scene.faces) {
    auto pt = [&](double u, double v) {
      switch (f.axis) {
        case 0: return Vec3{f.level, u, v};
        case 1: return Vec3{u, f.level, v};
        default: return Vec3{u, v, f.level};
      }
    };
    auto base = static_cast<std::uint32_t>(scene.mesh.vertices.size());
    scene.mesh.vertices.push_back(pt(f.u0, f.v0));
    scene.mesh.vertices.push_back(pt(f.u1, f.v0));
    scene.mesh.vertices.push_back(pt(f.u1, f.v1));
    scene.mesh.vertices.push_back(pt(f.u0, f.v1));
    scene.mesh.triangles.push_back({base, base + 1, base + 2});
    scene.mesh.triangles.push_back({base, base + 2, base + 3});
  }

  scene.street_roi.lo = {-half_len, -cfg.building_setback, 0.0};
  scene.street_roi.hi = {half_len, cfg.building_setback, 4.0};

  // ego trajectory down the street axis
  double t = 0.0;
  for (double x = -half_len; x <= half_len + 1e-9; x += cfg.pose_spacing) {
    TimedPose p;
    p.time = t;
    p.position = {x, 0.0, cfg.sensor_height};
    p.yaw_deg = 0.0;
    scene.trajectory.poses.push_back(p);
    t += cfg.pose_spacing / cfg.ego_speed;
  }
  return scene;
}

std::vector<Vec3> scene_surface_points(const Scene& scene, const Aabb& box,
                                       double density_per_m2, std::uint64_t seed) {
  struct Clipped {
    const RectFace* f;
    double u0, u1, v0, v1, cum;
  };
  std::vector<Clipped> clipped;
  double total = 0.0;
  for (const auto& f : scene.faces) {
    int ua = f.axis == 0 ? 1 : 0;
    int va = f.axis == 2 ? 1 : 2;
    double lvl_lo = f.axis == 0 ? box.lo.x : (f.axis == 1 ? box.lo.y : box.lo.z);
    double lvl_hi = f.axis == 0 ? box.hi.x : (f.axis == 1 ? box.hi.y : box.hi.z);
    if (f.level < lvl_lo || f.level > lvl_hi) continue;
    auto lo_of = [&](int a) { return a == 0 ? box.lo.x : (a == 1 ? box.lo.y : box.lo.z); };
    auto hi_of = [&](int a) { return a == 0 ? box.hi.x : (a == 1 ? box.hi.y : box.hi.z); };
    double u0 = std::max(f.u0, lo_of(ua)), u1 = std::min(f.u1, hi_of(ua));
    double v0 = std::max(f.v0, lo_of(va)), v1 = std::min(f.v1, hi_of(va));
    if (u0 >= u1 || v0 >= v1) continue;
    total += (u1 - u0) * (v1 - v0);
    clipped.push_back({&f, u0, u1, v0, v1, total});
  }
  std::vector<Vec3> out;
  if (clipped.empty() || total <= 0.0) return out;
  auto count = static_cast<std::size_t>(std::ceil(total * density_per_m2));
  out.reserve(count);
  Rng rng(rng::mix(seed, 0x90157));
  for (std::size_t i = 0; i < count; ++i) {
    double u = rng.uniform() * total;
    auto it = std::lower_bound(clipped.begin(), clipped.end(), u,
                               [](const Clipped& c, double val) { return c.cum < val; });
    const Clipped& c = it == clipped.end() ? clipped.back() : *it;
    double pu = rng.uniform(c.u0, c.u1);
    double pv = rng.uniform(c.v0, c.v1);
    switch (c.f->axis) {
      case 0: out.push_back({c.f->level, pu, pv}); break;
      case 1: out.push_back({pu, c.f->level, pv}); break;
      default: out.push_back({pu, pv, c.f->level}); break;
    }
  }
  return out;
}

}  // namespace voxforge::lidar
