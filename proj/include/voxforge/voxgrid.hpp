#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "voxforge/common.hpp"

namespace voxforge {

struct VoxelCoord {
  std::int32_t i = 0, j = 0, k = 0;

  friend bool operator==(const VoxelCoord&, const VoxelCoord&) = default;
  // Lexicographic (i, j, k).
  friend bool operator<(const VoxelCoord& a, const VoxelCoord& b) {
    if (a.i != b.i) return a.i < b.i;
    if (a.j != b.j) return a.j < b.j;
    return a.k < b.k;
  }
};

// Axis-aligned metric volume carved into cubic voxels.
struct VolumeSpec {
  Vec3 origin{0, 0, 0};
  Vec3 extent{1, 1, 1};
  double voxel_size = 1.0;

  VolumeSpec() = default;
  VolumeSpec(Vec3 origin_, Vec3 extent_, double voxel_size_);

  std::int32_t dim_i = 0, dim_j = 0, dim_k = 0;

  bool in_bounds(const VoxelCoord& c) const {
    return c.i >= 0 && c.i < dim_i && c.j >= 0 && c.j < dim_j && c.k >= 0 &&
           c.k < dim_k;
  }
  std::size_t cell_count() const {
    return static_cast<std::size_t>(dim_i) * dim_j * dim_k;
  }
  // Linear index consistent with lexicographic (i, j, k) ordering.
  std::size_t linear(const VoxelCoord& c) const {
    return (static_cast<std::size_t>(c.i) * dim_j + c.j) * dim_k + c.k;
  }
  VoxelCoord from_linear(std::size_t idx) const {
    auto k = static_cast<std::int32_t>(idx % dim_k);
    idx /= dim_k;
    auto j = static_cast<std::int32_t>(idx % dim_j);
    auto i = static_cast<std::int32_t>(idx / dim_j);
    return {i, j, k};
  }
  Vec3 cell_center(const VoxelCoord& c) const {
    return origin + Vec3{(c.i + 0.5) * voxel_size, (c.j + 0.5) * voxel_size,
                         (c.k + 0.5) * voxel_size};
  }
  std::optional<VoxelCoord> locate(const Vec3& p) const {
    VoxelCoord c{static_cast<std::int32_t>(std::floor((p.x - origin.x) / voxel_size)),
                 static_cast<std::int32_t>(std::floor((p.y - origin.y) / voxel_size)),
                 static_cast<std::int32_t>(std::floor((p.z - origin.z) / voxel_size))};
    if (!in_bounds(c)) return std::nullopt;
    return c;
  }
  // Same origin/extent, voxel size halved (dims double) or doubled.
  VolumeSpec refined2x() const { return VolumeSpec(origin, extent, voxel_size * 0.5); }
  VolumeSpec coarsened2x() const { return VolumeSpec(origin, extent, voxel_size * 2.0); }

  friend bool operator==(const VolumeSpec& a, const VolumeSpec& b) {
    return a.origin.x == b.origin.x && a.origin.y == b.origin.y &&
           a.origin.z == b.origin.z && a.extent.x == b.extent.x &&
           a.extent.y == b.extent.y && a.extent.z == b.extent.z &&
           a.voxel_size == b.voxel_size;
  }
};

// Immutable sparse set of occupied cells inside a volume. Cells are kept
// sorted and deduplicated; a bitmap over the volume backs O(1) membership.
class SparseOccupancyGrid {
 public:
  SparseOccupancyGrid() = default;
  explicit SparseOccupancyGrid(VolumeSpec volume) : volume_(volume) {
    bitmap_.assign((volume_.cell_count() + 63) / 64, 0);
  }
  // Builds from arbitrary coords: out-of-volume cells are dropped (counted),
  // duplicates collapse. extra_dropped folds in points the caller already
  // rejected (voxelize).
  SparseOccupancyGrid(VolumeSpec volume, std::vector<VoxelCoord> cells,
                      std::size_t extra_dropped = 0);

  const VolumeSpec& volume() const { return volume_; }
  const std::vector<VoxelCoord>& cells() const { return cells_; }
  std::size_t size() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }
  std::size_t dropped_count() const { return dropped_; }

  bool contains(const VoxelCoord& c) const {
    if (!volume_.in_bounds(c)) return false;
    std::size_t idx = volume_.linear(c);
    return (bitmap_[idx >> 6] >> (idx & 63)) & 1u;
  }

 private:
  VolumeSpec volume_;
  std::vector<VoxelCoord> cells_;
  std::vector<std::uint64_t> bitmap_;
  std::size_t dropped_ = 0;
};

// floor((p - origin) / voxel_size) per point; out-of-volume points dropped.
SparseOccupancyGrid voxelize(const std::vector<Vec3>& points, const VolumeSpec& volume);

// Per-cell resolution-change rule: floor(c / 2) toward -inf, componentwise.
inline VoxelCoord parent2x(const VoxelCoord& c) {
  auto half = [](std::int32_t v) { return v >= 0 ? v / 2 : (v - 1) / 2; };
  return {half(c.i), half(c.j), half(c.k)};
}

// Cell -> floor(c / 2); voxel size doubles.
SparseOccupancyGrid downsample2x(const SparseOccupancyGrid& grid);

// Cell -> its 8 children 2c + {0,1}^3; voxel size halves.
SparseOccupancyGrid upscale2x(const SparseOccupancyGrid& grid);

// Union of l-inf balls of radius r around occupied cells, clipped to the
// volume; sorted output.
std::vector<VoxelCoord> dilate(const SparseOccupancyGrid& grid, int r);

// |A inter B| / |A union B|, optionally restricted to a mask; 1 when both
// restricted sets are empty. Volumes must match.
double iou(const SparseOccupancyGrid& a, const SparseOccupancyGrid& b);
double iou(const SparseOccupancyGrid& a, const SparseOccupancyGrid& b,
           const std::vector<VoxelCoord>& mask);

}  // namespace voxforge
