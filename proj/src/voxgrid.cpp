#include "voxforge/voxgrid.hpp"

#include <algorithm>
#include <cmath>

namespace voxforge {

VolumeSpec::VolumeSpec(Vec3 origin_, Vec3 extent_, double voxel_size_)
    : origin(origin_), extent(extent_), voxel_size(voxel_size_) {
  if (extent.x <= 0 || extent.y <= 0 || extent.z <= 0)
    throw Error("VolumeSpec: extent must be positive");
  if (voxel_size <= 0) throw Error("VolumeSpec: voxel_size must be positive");
  auto dim = [&](double e) {
    double d = e / voxel_size;
    auto r = static_cast<std::int32_t>(std::llround(d));
    if (r < 1 || std::abs(d - r) > 1e-9 * std::max(1.0, d))
      throw Error("VolumeSpec: extent/voxel_size must be a positive integer");
    return r;
  };
  dim_i = dim(extent.x);
  dim_j = dim(extent.y);
  dim_k = dim(extent.z);
}

SparseOccupancyGrid::SparseOccupancyGrid(VolumeSpec volume, std::vector<VoxelCoord> cells,
                                         std::size_t extra_dropped)
    : volume_(volume), dropped_(extra_dropped) {
  bitmap_.assign((volume_.cell_count() + 63) / 64, 0);
  cells_.reserve(cells.size());
  for (const auto& c : cells) {
    if (!volume_.in_bounds(c)) {
      ++dropped_;
      continue;
    }
    std::size_t idx = volume_.linear(c);
    std::uint64_t& word = bitmap_[idx >> 6];
    std::uint64_t bit = 1ULL << (idx & 63);
    if (word & bit) continue;
    word |= bit;
    cells_.push_back(c);
  }
  std::sort(cells_.begin(), cells_.end());
}

SparseOccupancyGrid voxelize(const std::vector<Vec3>& points, const VolumeSpec& volume) {
  std::vector<VoxelCoord> cells;
  cells.reserve(points.size());
  std::size_t dropped = 0;
  for (const auto& p : points) {
    VoxelCoord c{
        static_cast<std::int32_t>(std::floor((p.x - volume.origin.x) / volume.voxel_size)),
        static_cast<std::int32_t>(std::floor((p.y - volume.origin.y) / volume.voxel_size)),
        static_cast<std::int32_t>(std::floor((p.z - volume.origin.z) / volume.voxel_size))};
    if (volume.in_bounds(c))
      cells.push_back(c);
    else
      ++dropped;
  }
  return SparseOccupancyGrid(volume, std::move(cells), dropped);
}

SparseOccupancyGrid downsample2x(const SparseOccupancyGrid& grid) {
  std::vector<VoxelCoord> cells;
  cells.reserve(grid.size());
  for (const auto& c : grid.cells()) cells.push_back(parent2x(c));
  return SparseOccupancyGrid(grid.volume().coarsened2x(), std::move(cells));
}

SparseOccupancyGrid upscale2x(const SparseOccupancyGrid& grid) {
  std::vector<VoxelCoord> cells;
  cells.reserve(grid.size() * 8);
  for (const auto& c : grid.cells())
    for (std::int32_t di = 0; di < 2; ++di)
      for (std::int32_t dj = 0; dj < 2; ++dj)
        for (std::int32_t dk = 0; dk < 2; ++dk)
          cells.push_back({2 * c.i + di, 2 * c.j + dj, 2 * c.k + dk});
  return SparseOccupancyGrid(grid.volume().refined2x(), std::move(cells));
}

std::vector<VoxelCoord> dilate(const SparseOccupancyGrid& grid, int r) {
  if (r < 0) throw Error("dilate: radius must be nonnegative");
  const VolumeSpec& v = grid.volume();
  std::vector<std::uint64_t> bits((v.cell_count() + 63) / 64, 0);
  for (const auto& c : grid.cells()) {
    std::int32_t i0 = std::max(0, c.i - r), i1 = std::min(v.dim_i - 1, c.i + r);
    std::int32_t j0 = std::max(0, c.j - r), j1 = std::min(v.dim_j - 1, c.j + r);
    std::int32_t k0 = std::max(0, c.k - r), k1 = std::min(v.dim_k - 1, c.k + r);
    for (std::int32_t i = i0; i <= i1; ++i)
      for (std::int32_t j = j0; j <= j1; ++j) {
        std::size_t base = (static_cast<std::size_t>(i) * v.dim_j + j) * v.dim_k;
        for (std::int32_t k = k0; k <= k1; ++k) {
          std::size_t idx = base + k;
          bits[idx >> 6] |= 1ULL << (idx & 63);
        }
      }
  }
  std::vector<VoxelCoord> out;
  for (std::size_t w = 0; w < bits.size(); ++w) {
    std::uint64_t word = bits[w];
    while (word) {
      int b = __builtin_ctzll(word);
      word &= word - 1;
      out.push_back(v.from_linear((w << 6) + b));
    }
  }
  // linear index order == lexicographic order, so `out` is already sorted
  return out;
}

double iou(const SparseOccupancyGrid& a, const SparseOccupancyGrid& b) {
  if (!(a.volume() == b.volume())) throw Error("iou: volume mismatch");
  std::size_t inter = 0;
  for (const auto& c : a.cells())
    if (b.contains(c)) ++inter;
  std::size_t uni = a.size() + b.size() - inter;
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double iou(const SparseOccupancyGrid& a, const SparseOccupancyGrid& b,
           const std::vector<VoxelCoord>& mask) {
  if (!(a.volume() == b.volume())) throw Error("iou: volume mismatch");
  std::size_t inter = 0, uni = 0;
  for (const auto& c : mask) {
    bool ia = a.contains(c), ib = b.contains(c);
    if (ia && ib) ++inter;
    if (ia || ib) ++uni;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace voxforge
