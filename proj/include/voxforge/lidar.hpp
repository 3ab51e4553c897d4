#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "voxforge/common.hpp"
#include "voxforge/mesh.hpp"

namespace voxforge::lidar {

struct Quat {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  static Quat from_ypr_deg(double yaw, double pitch, double roll);
  Quat operator*(const Quat& o) const;
  Vec3 rotate(const Vec3& v) const;
  Quat normalized() const;
  static Quat slerp(const Quat& a, const Quat& b, double t);
};

struct Pose {
  Vec3 position;
  Quat rotation;

  Vec3 to_world(const Vec3& sensor) const { return position + rotation.rotate(sensor); }
  Vec3 dir_to_world(const Vec3& d) const { return rotation.rotate(d); }
};

struct BeamConfig {
  std::vector<double> elevations_deg;  // strictly increasing
  int azimuth_count = 0;
  double min_range = 0.0;
  double max_range = 0.0;

  void validate() const;
  int rows() const { return static_cast<int>(elevations_deg.size()); }
};

// Presets. The input sensor approximates a 64-beam AV profile (exact beam
// table is configurable); the evaluation sensor covers (-30, 30) degrees with
// 128 beams; the dense GT sensor has 512 channels and 75 m range.
BeamConfig waymo64_beams();
BeamConfig eval_beams();
BeamConfig carla_gt512_beams();
BeamConfig beams_by_name(const std::string& name);

struct TimedPose {
  double time = 0.0;
  Vec3 position;
  double yaw_deg = 0.0, pitch_deg = 0.0, roll_deg = 0.0;
};

struct Trajectory {
  std::vector<TimedPose> poses;  // monotone timestamps

  void validate() const;
  double t_begin() const { return poses.front().time; }
  double t_end() const { return poses.back().time; }
  Pose sample(double t) const;  // linear position, slerp orientation
};

constexpr float kNoHit = -1.0f;

struct RangeImage {
  int rows = 0, cols = 0;
  std::vector<float> range;            // rows * cols, kNoHit when no return
  std::vector<Pose> column_pose;       // emit pose per azimuth column
  std::vector<double> elevations_deg;  // beam table copied from the config
  double min_range = 0.0, max_range = 0.0;

  float at(int r, int c) const { return range[static_cast<std::size_t>(r) * cols + c]; }
};

struct NoiseModel {
  double point_sigma = 0.01;      // meters, per coordinate
  double pitch_sigma_deg = 0.02;  // degrees, on the emit pose
  bool enabled = true;
};

// Sensor-frame ray for (elevation, azimuth): x forward, z up.
Vec3 beam_dir(double elevation_deg, double azimuth_rad);

// Static scan from one pose. Points carry Gaussian coordinate noise when the
// model is enabled; rays are keyed by (seed, row, col) so evaluation order
// cannot change the result.
struct ScanResult {
  RangeImage image;
  std::vector<Vec3> points;  // world frame, hits only
};
ScanResult scan(const Bvh& scene, const Pose& pose, const BeamConfig& beams,
                std::uint64_t seed, const NoiseModel& noise);

// Rolling-shutter scan: azimuth column a fires at t0 + (a / azimuth_count) *
// revolution_period from the trajectory-interpolated pose; pitch noise
// perturbs each emit pose. Trajectory must cover one full revolution.
ScanResult scan_rolling(const Bvh& scene, const Trajectory& traj,
                        const BeamConfig& beams, double revolution_period,
                        std::uint64_t seed, const NoiseModel& noise);

// Post-hoc noise injection: i.i.d. Gaussian on point coordinates, pitch jitter
// on the pose.
void add_noise(std::vector<Vec3>& points, TimedPose& pose, const NoiseModel& model,
               std::uint64_t seed);

}  // namespace voxforge::lidar
