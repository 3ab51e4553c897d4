#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxforge/lidar.hpp"
#include "voxforge/mesh.hpp"
#include "voxforge/voxgrid.hpp"

namespace voxforge::metrics {

// Uniform-grid spatial hash for exact nearest neighbors. Distances are
// computed with the same expression as a brute-force scan, so the returned
// squared distance is always bit-identical to it.
class NnIndex {
 public:
  explicit NnIndex(const std::vector<Vec3>& points);

  // (squared distance, index). Points must be nonempty.
  std::pair<double, std::size_t> nearest(const Vec3& q) const;
  std::size_t size() const { return points_.size(); }

 private:
  std::vector<Vec3> points_;
  Vec3 origin_;
  double cell_ = 1.0;
  int nx_ = 1, ny_ = 1, nz_ = 1;
  std::vector<std::uint32_t> cell_start_;
  std::vector<std::uint32_t> order_;
};

// 0.5 * (mean_x min_y |x-y| + mean_y min_x |x-y|), Euclidean, non-squared.
double chamfer(const std::vector<Vec3>& x, const std::vector<Vec3>& y);

// Mean pairwise Chamfer diversity: per partial, 2/(k(k-1)) * sum_{i<j} CD;
// averaged over partials. Requires k >= 2 everywhere.
double tmd(const std::vector<std::vector<std::vector<Vec3>>>& completion_sets);

struct ResimResult {
  std::vector<double> per_pose;       // skipped poses omitted
  std::vector<std::size_t> skipped;   // pose indices with an empty scan
  double mean = 0.0;
};

// Re-simulated Chamfer: scan both meshes with the high-elevation sensor from
// each pose (noise off), crop to the ROI, Chamfer per pose, mean over poses.
ResimResult lidar_resim_cd(const Bvh& gt_scene, const Bvh& completion,
                           const std::vector<lidar::Pose>& poses, const Aabb& roi,
                           const lidar::BeamConfig& beams);

// ROI entry/exit pose pair along a trajectory; logs overlaps with input scan
// positions (closer than 1 m) to stderr.
std::vector<lidar::Pose> select_resim_poses(const lidar::Trajectory& traj,
                                            const Aabb& roi,
                                            const std::vector<Vec3>& input_positions);

struct TsdfGrid {
  VolumeSpec volume;           // 10 cm over the ROI
  std::vector<float> tsdf;     // meters, clamped to +-truncation
  std::vector<float> weight;   // 0 = never observed
  double truncation = 0.3;

  float tsdf_at(const VoxelCoord& c) const { return tsdf[volume.linear(c)]; }
  float weight_at(const VoxelCoord& c) const { return weight[volume.linear(c)]; }
};

// Projective TSDF fusion: per voxel, signed distance along the ray =
// measured range - voxel range, clamped to +-tau, averaged across views.
// Voxels deeper than tau behind the surface (or outside every scan) keep
// weight 0.
TsdfGrid tsdf_fuse(const std::vector<lidar::RangeImage>& images,
                   const VolumeSpec& roi_grid10, double tau = 0.3);

// Visible 10 cm voxels (weight > 0 and tsdf > threshold), OR-pooled 2x into
// 20 cm cells; sorted output.
std::vector<VoxelCoord> visibility_mask(const TsdfGrid& grid, double threshold = -0.3);

// Chamfer restricted to the street box and z > z_min. Throws when a side
// empties after filtering.
double street_cd(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                 const Aabb& street_roi, double z_min = 0.2);

struct EvalReport {
  double cd_resim_min = 0.0;
  double cd_resim_avg = 0.0;
  double tmd = 0.0;
  double iou = 0.0;
  double street_cd = 0.0;
  int k = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<Vec3> pose_positions;

  // JSON with stable key order (raw values plus the x10 table convention);
  // one-line CSV for tabulation.
  std::string to_json() const;
  std::string to_csv() const;
  static std::string csv_header();
};

struct RunArtifacts {
  const Bvh* gt_scene = nullptr;
  std::vector<const Bvh*> completions;                 // k meshes
  std::vector<std::vector<Vec3>> completion_points;    // k surface point sets
  std::vector<SparseOccupancyGrid> completion_grids;   // k coarse occupancy
  SparseOccupancyGrid gt_grid;                         // coarse gt occupancy
  std::vector<VoxelCoord> visibility;                  // 20 cm mask
  std::vector<Vec3> gt_street_points;
  std::vector<lidar::Pose> resim_poses;
  Aabb roi;
  Aabb street_roi;
  lidar::BeamConfig beams;
  std::vector<std::uint64_t> seeds;
};

// min/avg CD_ReSim over the k completions, TMD across them, mean IoU on the
// visibility mask, mean street CD.
EvalReport report(const RunArtifacts& run, int k = 3);

}  // namespace voxforge::metrics
