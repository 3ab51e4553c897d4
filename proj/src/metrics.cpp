#include "voxforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include <json.hpp>

namespace voxforge::metrics {

namespace {
inline double dist2(const Vec3& a, const Vec3& b) {
  double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

NnIndex::NnIndex(const std::vector<Vec3>& points) : points_(points) {
  if (points_.empty()) throw Error("NnIndex: empty point set");
  Aabb box;
  for (const auto& p : points_) box.expand(p);
  origin_ = box.lo;
  Vec3 ext = box.extent();
  double diag = std::max({ext.x, ext.y, ext.z, 1e-9});
  // query-scale heuristic: a handful of points per cell
  double target = diag / std::cbrt(static_cast<double>(points_.size()) + 1.0);
  cell_ = std::max(target, 1e-9);
  nx_ = std::max(1, static_cast<int>(ext.x / cell_) + 1);
  ny_ = std::max(1, static_cast<int>(ext.y / cell_) + 1);
  nz_ = std::max(1, static_cast<int>(ext.z / cell_) + 1);

  auto cell_of = [&](const Vec3& p) {
    int cx = std::min(nx_ - 1, std::max(0, static_cast<int>((p.x - origin_.x) / cell_)));
    int cy = std::min(ny_ - 1, std::max(0, static_cast<int>((p.y - origin_.y) / cell_)));
    int cz = std::min(nz_ - 1, std::max(0, static_cast<int>((p.z - origin_.z) / cell_)));
    return (static_cast<std::size_t>(cx) * ny_ + cy) * nz_ + cz;
  };

  std::size_t ncells = static_cast<std::size_t>(nx_) * ny_ * nz_;
  std::vector<std::uint32_t> counts(ncells + 1, 0);
  for (const auto& p : points_) counts[cell_of(p) + 1]++;
  for (std::size_t i = 1; i <= ncells; ++i) counts[i] += counts[i - 1];
  cell_start_ = counts;
  order_.resize(points_.size());
  std::vector<std::uint32_t> cursor(counts.begin(), counts.end() - 1);
  for (std::uint32_t i = 0; i < points_.size(); ++i)
    order_[cursor[cell_of(points_[i])]++] = i;
}

std::pair<double, std::size_t> NnIndex::nearest(const Vec3& q) const {
  // query cell clamped into the grid; the stop bound below stays geometric
  int qx = std::clamp(static_cast<int>(std::floor((q.x - origin_.x) / cell_)), 0, nx_ - 1);
  int qy = std::clamp(static_cast<int>(std::floor((q.y - origin_.y) / cell_)), 0, ny_ - 1);
  int qz = std::clamp(static_cast<int>(std::floor((q.z - origin_.z) / cell_)), 0, nz_ - 1);
  double best = 1e300;
  std::size_t best_i = 0;
  for (int r = 0;; ++r) {
    int x0 = std::max(0, qx - r), x1 = std::min(nx_ - 1, qx + r);
    int y0 = std::max(0, qy - r), y1 = std::min(ny_ - 1, qy + r);
    int z0 = std::max(0, qz - r), z1 = std::min(nz_ - 1, qz + r);
    for (int cx = x0; cx <= x1; ++cx)
      for (int cy = y0; cy <= y1; ++cy)
        for (int cz = z0; cz <= z1; ++cz) {
          // only the new shell at Chebyshev radius r
          if (std::max({std::abs(cx - qx), std::abs(cy - qy), std::abs(cz - qz)}) != r)
            continue;
          std::size_t ci = (static_cast<std::size_t>(cx) * ny_ + cy) * nz_ + cz;
          for (std::uint32_t s = cell_start_[ci]; s < cell_start_[ci + 1]; ++s) {
            std::uint32_t pi = order_[s];
            double d2 = dist2(points_[pi], q);
            if (d2 < best || (d2 == best && pi < best_i)) {
              best = d2;
              best_i = pi;
            }
          }
        }
    bool covered = x0 == 0 && y0 == 0 && z0 == 0 && x1 == nx_ - 1 && y1 == ny_ - 1 &&
                   z1 == nz_ - 1;
    if (covered) break;  // every cell scanned; best is final
    // min distance from q to any unscanned cell = distance from q to the
    // boundary of the scanned box
    double bx0 = origin_.x + (qx - r) * cell_, bx1 = origin_.x + (qx + r + 1) * cell_;
    double by0 = origin_.y + (qy - r) * cell_, by1 = origin_.y + (qy + r + 1) * cell_;
    double bz0 = origin_.z + (qz - r) * cell_, bz1 = origin_.z + (qz + r + 1) * cell_;
    double margin = std::min({q.x - bx0, bx1 - q.x, q.y - by0, by1 - q.y,
                              q.z - bz0, bz1 - q.z});
    if (margin > 0.0 && best <= margin * margin) break;
  }
  return {best, best_i};
}

double chamfer(const std::vector<Vec3>& x, const std::vector<Vec3>& y) {
  if (x.empty() || y.empty()) throw Error("chamfer: empty point set");
  NnIndex ix(x), iy(y);
  auto side = [](const std::vector<Vec3>& from, const NnIndex& to) {
    std::vector<double> d(from.size());
    parallel_for(from.size(), [&](std::size_t i) {
      d[i] = std::sqrt(to.nearest(from[i]).first);
    });
    double s = 0.0;
    for (double v : d) s += v;  // fixed summation order
    return s / static_cast<double>(from.size());
  };
  return 0.5 * (side(x, iy) + side(y, ix));
}

double tmd(const std::vector<std::vector<std::vector<Vec3>>>& completion_sets) {
  if (completion_sets.empty()) throw Error("tmd: no partials");
  double total = 0.0;
  for (const auto& completions : completion_sets) {
    std::size_t k = completions.size();
    if (k < 2) throw Error("tmd: needs k >= 2 completions per partial");
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j) s += chamfer(completions[i], completions[j]);
    total += 2.0 / (static_cast<double>(k) * static_cast<double>(k - 1)) * s;
  }
  return total / static_cast<double>(completion_sets.size());
}

namespace {
std::vector<Vec3> crop(const std::vector<Vec3>& pts, const Aabb& box) {
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const auto& p : pts)
    if (box.contains(p)) out.push_back(p);
  return out;
}
}  // namespace

ResimResult lidar_resim_cd(const Bvh& gt_scene, const Bvh& completion,
                           const std::vector<lidar::Pose>& poses, const Aabb& roi,
                           const lidar::BeamConfig& beams) {
  if (poses.empty()) throw Error("lidar_resim_cd: no poses");
  lidar::NoiseModel off;
  off.enabled = false;
  ResimResult res;
  for (std::size_t pi = 0; pi < poses.size(); ++pi) {
    auto gt_scan = lidar::scan(gt_scene, poses[pi], beams, 0, off);
    auto cp_scan = lidar::scan(completion, poses[pi], beams, 0, off);
    auto gt_pts = crop(gt_scan.points, roi);
    auto cp_pts = crop(cp_scan.points, roi);
    if (gt_pts.empty() || cp_pts.empty()) {
      std::cerr << "lidar_resim_cd: pose " << pi << " produced an empty scan, skipping\n";
      res.skipped.push_back(pi);
      continue;
    }
    res.per_pose.push_back(chamfer(gt_pts, cp_pts));
  }
  if (res.per_pose.empty())
    throw Error("lidar_resim_cd: every pose produced an empty scan");
  double s = 0.0;
  for (double v : res.per_pose) s += v;
  res.mean = s / static_cast<double>(res.per_pose.size());
  return res;
}

std::vector<lidar::Pose> select_resim_poses(const lidar::Trajectory& traj,
                                            const Aabb& roi,
                                            const std::vector<Vec3>& input_positions) {
  std::vector<std::size_t> inside;
  for (std::size_t i = 0; i < traj.poses.size(); ++i)
    if (roi.contains(traj.poses[i].position)) inside.push_back(i);
  if (inside.empty()) throw Error("select_resim_poses: trajectory never enters the ROI");
  std::vector<lidar::Pose> out;
  std::vector<std::size_t> pick = {inside.front()};
  if (inside.back() != inside.front()) pick.push_back(inside.back());
  for (std::size_t idx : pick) {
    const auto& tp = traj.poses[idx];
    out.push_back({tp.position,
                   lidar::Quat::from_ypr_deg(tp.yaw_deg, tp.pitch_deg, tp.roll_deg)});
    for (const auto& ip : input_positions)
      if ((ip - tp.position).norm() < 1.0)
        std::cerr << "select_resim_poses: pose overlaps an input scan position\n";
  }
  return out;
}

TsdfGrid tsdf_fuse(const std::vector<lidar::RangeImage>& images,
                   const VolumeSpec& roi_grid10, double tau) {
  if (images.empty()) throw Error("tsdf_fuse: no range images");
  TsdfGrid g;
  g.volume = roi_grid10;
  g.truncation = tau;
  g.tsdf.assign(roi_grid10.cell_count(), 0.f);
  g.weight.assign(roi_grid10.cell_count(), 0.f);

  for (const auto& img : images) {
    if (img.column_pose.empty()) throw Error("tsdf_fuse: image without poses");
    if (img.rows < 1) continue;
    if (static_cast<int>(img.elevations_deg.size()) != img.rows)
      throw Error("tsdf_fuse: image missing its beam table");
    const auto& els = img.elevations_deg;
    parallel_for_chunks(roi_grid10.cell_count(), 4096, [&](std::size_t b, std::size_t e) {
      for (std::size_t idx = b; idx < e; ++idx) {
        VoxelCoord c = roi_grid10.from_linear(idx);
        Vec3 v = roi_grid10.cell_center(c);
        const lidar::Pose& p0 = img.column_pose[0];
        Vec3 fwd = p0.dir_to_world({1, 0, 0});
        double sensor_yaw = std::atan2(fwd.y, fwd.x);
        Vec3 rel0 = v - p0.position;
        double az = std::atan2(rel0.y, rel0.x) - sensor_yaw;
        az = az - 2.0 * kPi * std::floor(az / (2.0 * kPi));
        int col = static_cast<int>(std::llround(az / (2.0 * kPi) * img.cols)) % img.cols;
        const lidar::Pose& pose = img.column_pose[col];
        Vec3 rel = v - pose.position;
        double r_v = rel.norm();
        if (r_v < 1e-9 || r_v > img.max_range) continue;
        double el = rad2deg(std::asin(std::clamp(rel.z / r_v, -1.0, 1.0)));
        // nearest beam by elevation (table is strictly increasing)
        auto it = std::lower_bound(els.begin(), els.end(), el);
        int row;
        if (it == els.begin()) row = 0;
        else if (it == els.end()) row = img.rows - 1;
        else {
          int hi = static_cast<int>(it - els.begin());
          row = (el - els[hi - 1] <= els[hi] - el) ? hi - 1 : hi;
        }
        double gap_lo = row > 0 ? els[row] - els[row - 1] : 1e9;
        double gap_hi = row + 1 < img.rows ? els[row + 1] - els[row] : 1e9;
        double halfgap = 0.5 * std::min(gap_lo, gap_hi);
        if (img.rows > 1 && std::abs(el - els[row]) > halfgap + 1e-9)
          continue;  // outside vertical FOV
        float measured = img.at(row, col);
        if (measured == lidar::kNoHit) continue;
        double sdf = static_cast<double>(measured) - r_v;
        if (sdf < -tau) continue;  // occluded beyond truncation
        double clamped = std::min(sdf, tau);
        float& w = g.weight[idx];
        float& t = g.tsdf[idx];
        t = static_cast<float>((static_cast<double>(t) * w + clamped) / (w + 1.f));
        w += 1.f;
      }
    });
  }
  return g;
}

std::vector<VoxelCoord> visibility_mask(const TsdfGrid& grid, double threshold) {
  const VolumeSpec& v10 = grid.volume;
  VolumeSpec v20 = v10.coarsened2x();
  std::vector<std::uint64_t> bits((v20.cell_count() + 63) / 64, 0);
  for (std::size_t idx = 0; idx < v10.cell_count(); ++idx) {
    if (grid.weight[idx] <= 0.f) continue;
    if (static_cast<double>(grid.tsdf[idx]) <= threshold) continue;
    VoxelCoord p = parent2x(v10.from_linear(idx));
    std::size_t pi = v20.linear(p);
    bits[pi >> 6] |= 1ULL << (pi & 63);
  }
  std::vector<VoxelCoord> out;
  for (std::size_t w = 0; w < bits.size(); ++w) {
    std::uint64_t word = bits[w];
    while (word) {
      int b = __builtin_ctzll(word);
      word &= word - 1;
      out.push_back(v20.from_linear((w << 6) + b));
    }
  }
  return out;
}

double street_cd(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                 const Aabb& street_roi, double z_min) {
  auto filt = [&](const std::vector<Vec3>& pts) {
    std::vector<Vec3> out;
    for (const auto& p : pts)
      if (street_roi.contains(p) && p.z > z_min) out.push_back(p);
    return out;
  };
  auto fp = filt(pred);
  auto fg = filt(gt);
  if (fp.empty()) throw Error("street_cd: prediction empty after street/z filtering");
  if (fg.empty()) throw Error("street_cd: ground truth empty after street/z filtering");
  return chamfer(fp, fg);
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["cd_resim_min"] = cd_resim_min;
  j["cd_resim_avg"] = cd_resim_avg;
  j["tmd"] = tmd;
  j["iou"] = iou;
  j["street_cd"] = street_cd;
  j["scaled_x10"] = {{"cd_resim_min", cd_resim_min * 10.0},
                     {"cd_resim_avg", cd_resim_avg * 10.0},
                     {"tmd", tmd * 10.0},
                     {"street_cd", street_cd * 10.0}};
  j["k"] = k;
  j["seeds"] = seeds;
  auto poses = nlohmann::ordered_json::array();
  for (const auto& p : pose_positions) poses.push_back({p.x, p.y, p.z});
  j["pose_positions"] = poses;
  return j.dump(2) + "\n";
}

std::string EvalReport::csv_header() {
  return "cd_resim_min,cd_resim_avg,tmd,iou,street_cd,k\n";
}

std::string EvalReport::to_csv() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%.9g,%d\n", cd_resim_min,
                cd_resim_avg, tmd, iou, street_cd, k);
  return buf;
}

EvalReport report(const RunArtifacts& run, int k) {
  EvalReport rep;
  rep.k = k;
  rep.seeds = run.seeds;
  if (static_cast<int>(run.completions.size()) != k)
    throw Error("report: missing completion meshes (expected k=" + std::to_string(k) + ")");
  if (static_cast<int>(run.completion_points.size()) != k)
    throw Error("report: missing completion point sets");
  if (static_cast<int>(run.completion_grids.size()) != k)
    throw Error("report: missing completion occupancy grids");
  if (!run.gt_scene) throw Error("report: missing gt scene");
  if (run.resim_poses.empty()) throw Error("report: missing resim poses");
  if (run.gt_street_points.empty()) throw Error("report: missing gt street points");
  if (run.visibility.empty()) throw Error("report: missing visibility mask");

  double cd_min = 1e300, cd_sum = 0.0, iou_sum = 0.0, street_sum = 0.0;
  for (int i = 0; i < k; ++i) {
    auto res = lidar_resim_cd(*run.gt_scene, *run.completions[i], run.resim_poses,
                              run.roi, run.beams);
    cd_min = std::min(cd_min, res.mean);
    cd_sum += res.mean;
    iou_sum += voxforge::iou(run.completion_grids[i], run.gt_grid, run.visibility);
    street_sum += street_cd(run.completion_points[i], run.gt_street_points,
                            run.street_roi);
  }
  rep.cd_resim_min = cd_min;
  rep.cd_resim_avg = cd_sum / k;
  rep.iou = iou_sum / k;
  rep.street_cd = street_sum / k;
  rep.tmd = tmd({run.completion_points});
  for (const auto& p : run.resim_poses) rep.pose_positions.push_back(p.position);
  return rep;
}

}  // namespace voxforge::metrics
