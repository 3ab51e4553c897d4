#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxforge/lidar.hpp"
#include "voxforge/mesh.hpp"

namespace voxforge::lidar {

struct SceneConfig {
  double ground_half = 30.0;       // ground plane half extent
  double street_length = 48.0;     // parking zone extent along x
  double car_lane_y = 1.6;         // parked car center offset from street axis
  double building_setback = 3.0;   // building fronts start at |y| >= this
  double building_depth_min = 3.0, building_depth_max = 6.0;
  double building_height_min = 2.0, building_height_max = 6.0;
  double building_len_min = 3.0, building_len_max = 8.0;
  double building_gap_min = 0.5, building_gap_max = 3.0;
  double car_lambda = 2.0;         // Poisson rate for cars per street side
  int car_max = 7;
  double car_len = 4.5, car_width = 1.9, car_height = 1.5;
  double sensor_height = 1.8;
  double ego_speed = 5.0;          // m/s
  double pose_spacing = 0.5;       // m between trajectory samples
};

// Scene geometry is a set of axis-aligned rectangles (normal along `axis` at
// coordinate `level`, spanning [u0,u1] x [v0,v1] in the other two axes, in
// x->y->z order). Boxes decompose into 6 of these; gt surface sampling clips
// them to a query box exactly.
struct RectFace {
  int axis = 2;
  double level = 0.0;
  double u0 = 0, u1 = 0, v0 = 0, v1 = 0;

  double area() const { return (u1 - u0) * (v1 - v0); }
};

struct Scene {
  std::uint64_t seed = 0;
  std::string split;               // train/val/test from disjoint seed ranges
  TriMesh mesh;
  std::vector<RectFace> faces;
  Aabb street_roi;                 // street corridor box (for Street CD)
  Trajectory trajectory;           // ego drive along the street
  std::vector<int> cars_per_side;  // size 2
};

// Deterministic per seed. Car count per side ~ min(Poisson(lambda), car_max);
// positions uniform with collision re-draws (first-fit fallback keeps the
// drawn count exact).
Scene gen_scene(std::uint64_t seed, const SceneConfig& cfg = {});

std::string split_of_seed(std::uint64_t seed);

// Area-weighted surface samples restricted to `box` (exact rectangle clipping,
// no rejection). Density in points per square meter.
std::vector<Vec3> scene_surface_points(const Scene& scene, const Aabb& box,
                                       double density_per_m2, std::uint64_t seed);

// E[min(Poisson(lambda), cap)] -- analytic reference for scene statistics.
double truncated_poisson_mean(double lambda, int cap);

}  // namespace voxforge::lidar
