#include "voxforge/lidar.hpp"

#include <cmath>

#include "voxforge/rng.hpp"

namespace voxforge::lidar {

Quat Quat::from_ypr_deg(double yaw, double pitch, double roll) {
  // R = Rz(yaw) * Ry(pitch) * Rx(roll)
  double cy = std::cos(deg2rad(yaw) * 0.5), sy = std::sin(deg2rad(yaw) * 0.5);
  double cp = std::cos(deg2rad(pitch) * 0.5), sp = std::sin(deg2rad(pitch) * 0.5);
  double cr = std::cos(deg2rad(roll) * 0.5), sr = std::sin(deg2rad(roll) * 0.5);
  Quat qz{cy, 0, 0, sy}, qy{cp, 0, sp, 0}, qx{cr, sr, 0, 0};
  return (qz * qy * qx).normalized();
}

Quat Quat::operator*(const Quat& o) const {
  return {w * o.w - x * o.x - y * o.y - z * o.z,
          w * o.x + x * o.w + y * o.z - z * o.y,
          w * o.y - x * o.z + y * o.w + z * o.x,
          w * o.z + x * o.y - y * o.x + z * o.w};
}

Vec3 Quat::rotate(const Vec3& v) const {
  Vec3 u{x, y, z};
  Vec3 t = 2.0 * u.cross(v);
  return v + w * t + u.cross(t);
}

Quat Quat::normalized() const {
  double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (n <= 0.0) return {1, 0, 0, 0};
  return {w / n, x / n, y / n, z / n};
}

Quat Quat::slerp(const Quat& a, const Quat& b_in, double t) {
  Quat b = b_in;
  double dot = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
  if (dot < 0.0) {
    b = {-b.w, -b.x, -b.y, -b.z};
    dot = -dot;
  }
  if (dot > 0.9995) {  // nearly parallel: lerp
    Quat q{a.w + t * (b.w - a.w), a.x + t * (b.x - a.x), a.y + t * (b.y - a.y),
           a.z + t * (b.z - a.z)};
    return q.normalized();
  }
  double theta = std::acos(dot);
  double s = std::sin(theta);
  double wa = std::sin((1.0 - t) * theta) / s, wb = std::sin(t * theta) / s;
  return Quat{wa * a.w + wb * b.w, wa * a.x + wb * b.x, wa * a.y + wb * b.y,
              wa * a.z + wb * b.z}.normalized();
}

void BeamConfig::validate() const {
  if (elevations_deg.empty()) throw Error("BeamConfig: no beams");
  for (std::size_t i = 1; i < elevations_deg.size(); ++i)
    if (elevations_deg[i] <= elevations_deg[i - 1])
      throw Error("BeamConfig: elevations must be strictly increasing");
  if (azimuth_count < 1) throw Error("BeamConfig: azimuth_count must be >= 1");
  if (!(0.0 < min_range && min_range < max_range))
    throw Error("BeamConfig: need 0 < min_range < max_range");
}

namespace {
std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i)
    v[i] = lo + (hi - lo) * (n == 1 ? 0.0 : static_cast<double>(i) / (n - 1));
  return v;
}
}  // namespace

BeamConfig waymo64_beams() {
  // Stand-in 64-beam AV profile; the true beam table is dataset-specific and
  // overridable through the run config.
  BeamConfig b;
  b.elevations_deg = linspace(-17.6, 2.4, 64);
  b.azimuth_count = 2650;
  b.min_range = 0.3;
  b.max_range = 75.0;
  return b;
}

BeamConfig eval_beams() {
  BeamConfig b;
  b.elevations_deg = linspace(-30.0, 30.0, 128);
  b.azimuth_count = 2650;
  b.min_range = 0.3;
  b.max_range = 75.0;
  return b;
}

BeamConfig carla_gt512_beams() {
  BeamConfig b;
  b.elevations_deg = linspace(-30.0, 30.0, 512);
  b.azimuth_count = 2650;
  b.min_range = 0.3;
  b.max_range = 75.0;
  return b;
}

BeamConfig beams_by_name(const std::string& name) {
  if (name == "waymo64") return waymo64_beams();
  if (name == "eval128") return eval_beams();
  if (name == "carla-gt512") return carla_gt512_beams();
  throw Error("unknown beam preset: " + name);
}

void Trajectory::validate() const {
  if (poses.empty()) throw Error("Trajectory: empty");
  for (std::size_t i = 1; i < poses.size(); ++i)
    if (poses[i].time < poses[i - 1].time)
      throw Error("Trajectory: timestamps must be monotone");
}

Pose Trajectory::sample(double t) const {
  if (poses.empty()) throw Error("Trajectory: empty");
  if (t <= poses.front().time || poses.size() == 1) {
    const auto& p = poses.front();
    return {p.position, Quat::from_ypr_deg(p.yaw_deg, p.pitch_deg, p.roll_deg)};
  }
  if (t >= poses.back().time) {
    const auto& p = poses.back();
    return {p.position, Quat::from_ypr_deg(p.yaw_deg, p.pitch_deg, p.roll_deg)};
  }
  std::size_t hi = 1;
  while (poses[hi].time < t) ++hi;
  const auto& a = poses[hi - 1];
  const auto& b = poses[hi];
  double span = b.time - a.time;
  double u = span > 0.0 ? (t - a.time) / span : 0.0;
  Pose out;
  out.position = a.position * (1.0 - u) + b.position * u;
  out.rotation = Quat::slerp(Quat::from_ypr_deg(a.yaw_deg, a.pitch_deg, a.roll_deg),
                             Quat::from_ypr_deg(b.yaw_deg, b.pitch_deg, b.roll_deg), u);
  return out;
}

Vec3 beam_dir(double elevation_deg, double azimuth_rad) {
  double el = deg2rad(elevation_deg);
  return {std::cos(el) * std::cos(azimuth_rad), std::cos(el) * std::sin(azimuth_rad),
          std::sin(el)};
}

namespace {

// One full scan with an arbitrary per-column pose provider.
ScanResult scan_columns(const Bvh& bvh, const BeamConfig& beams,
                        const std::function<Pose(int)>& pose_of_column,
                        std::uint64_t seed, const NoiseModel& noise) {
  beams.validate();
  ScanResult out;
  RangeImage& img = out.image;
  img.rows = beams.rows();
  img.cols = beams.azimuth_count;
  img.min_range = beams.min_range;
  img.max_range = beams.max_range;
  img.elevations_deg = beams.elevations_deg;
  img.range.assign(static_cast<std::size_t>(img.rows) * img.cols, kNoHit);
  img.column_pose.resize(img.cols);

  for (int c = 0; c < img.cols; ++c) img.column_pose[c] = pose_of_column(c);

  parallel_for_chunks(static_cast<std::size_t>(img.cols), 64,
                      [&](std::size_t c0, std::size_t c1) {
    for (std::size_t c = c0; c < c1; ++c) {
      const Pose& pose = img.column_pose[c];
      double az = 2.0 * kPi * (static_cast<double>(c) / img.cols);
      for (int r = 0; r < img.rows; ++r) {
        Vec3 dir = pose.dir_to_world(beam_dir(beams.elevations_deg[r], az));
        auto hit = bvh.raycast(pose.position, dir, beams.max_range);
        if (!hit || hit->t < beams.min_range) continue;
        img.range[static_cast<std::size_t>(r) * img.cols + c] = static_cast<float>(hit->t);
      }
    }
  });

  out.points.reserve(1024);
  for (int r = 0; r < img.rows; ++r)
    for (int c = 0; c < img.cols; ++c) {
      float rg = img.at(r, c);
      if (rg == kNoHit) continue;
      const Pose& pose = img.column_pose[c];
      double az = 2.0 * kPi * (static_cast<double>(c) / img.cols);
      Vec3 p = pose.position + pose.dir_to_world(beam_dir(beams.elevations_deg[r], az)) *
                                   static_cast<double>(rg);
      if (noise.enabled && noise.point_sigma > 0.0) {
        std::uint64_t cell = static_cast<std::uint64_t>(r) * img.cols + c;
        p.x += noise.point_sigma * rng::gaussian(seed, 11, cell, 0);
        p.y += noise.point_sigma * rng::gaussian(seed, 11, cell, 1);
        p.z += noise.point_sigma * rng::gaussian(seed, 11, cell, 2);
      }
      out.points.push_back(p);
    }
  return out;
}

}  // namespace

ScanResult scan(const Bvh& scene, const Pose& pose, const BeamConfig& beams,
                std::uint64_t seed, const NoiseModel& noise) {
  return scan_columns(scene, beams, [&](int) { return pose; }, seed, noise);
}

ScanResult scan_rolling(const Bvh& scene, const Trajectory& traj,
                        const BeamConfig& beams, double revolution_period,
                        std::uint64_t seed, const NoiseModel& noise) {
  traj.validate();
  if (traj.t_end() - traj.t_begin() + 1e-12 < revolution_period)
    throw Error("scan_rolling: trajectory shorter than one revolution");
  double t0 = traj.t_begin();
  return scan_columns(
      scene, beams,
      [&](int c) {
        double t = t0 + revolution_period * (static_cast<double>(c) / beams.azimuth_count);
        Pose p = traj.sample(t);
        if (noise.enabled && noise.pitch_sigma_deg > 0.0) {
          double jitter = noise.pitch_sigma_deg *
                          rng::gaussian(seed, 17, static_cast<std::uint64_t>(c), 0);
          p.rotation = (p.rotation * Quat::from_ypr_deg(0.0, jitter, 0.0)).normalized();
        }
        return p;
      },
      seed, noise);
}

void add_noise(std::vector<Vec3>& points, TimedPose& pose, const NoiseModel& model,
               std::uint64_t seed) {
  if (!model.enabled) return;
  if (model.point_sigma > 0.0) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      points[i].x += model.point_sigma * rng::gaussian(seed, 23, i, 0);
      points[i].y += model.point_sigma * rng::gaussian(seed, 23, i, 1);
      points[i].z += model.point_sigma * rng::gaussian(seed, 23, i, 2);
    }
  }
  if (model.pitch_sigma_deg > 0.0)
    pose.pitch_deg += model.pitch_sigma_deg * rng::gaussian(seed, 29, 0, 0);
}

}  // namespace voxforge::lidar
