#include <doctest.h>

#include <set>

#include "voxforge/rng.hpp"
#include "voxforge/voxgrid.hpp"

using namespace voxforge;

namespace {
VolumeSpec small_volume() {
  return VolumeSpec({0, 0, 0}, {3.2, 3.2, 3.2}, 0.1);  // 32^3
}

SparseOccupancyGrid random_grid(const VolumeSpec& v, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<VoxelCoord> cells;
  for (std::size_t i = 0; i < n; ++i)
    cells.push_back({static_cast<std::int32_t>(rng.uniform_int(0, v.dim_i - 1)),
                     static_cast<std::int32_t>(rng.uniform_int(0, v.dim_j - 1)),
                     static_cast<std::int32_t>(rng.uniform_int(0, v.dim_k - 1))});
  return SparseOccupancyGrid(v, std::move(cells));
}
}  // namespace

TEST_CASE("voxelize floor rule") {
  VolumeSpec v({0, 0, 0}, {1.0, 1.0, 1.0}, 0.1);
  auto g = voxelize({{0.05, 0.05, 0.05}}, v);
  REQUIRE(g.size() == 1);
  CHECK(g.cells()[0] == VoxelCoord{0, 0, 0});

  VolumeSpec v2({0, -1, 0}, {1.0, 2.0, 1.0}, 0.1);
  auto g2 = voxelize({{0.25, -0.05, 0.0}}, v2);
  REQUIRE(g2.size() == 1);
  CHECK(g2.cells()[0] == VoxelCoord{2, 9, 0});

  auto g3 = voxelize({{0.05, 0.05, 0.05}, {0.05, 0.05, 0.05}}, v);
  CHECK(g3.size() == 1);

  CHECK(voxelize({}, v).empty());
}

TEST_CASE("voxelize drops out-of-volume points") {
  VolumeSpec v({0, 0, 0}, {1.0, 1.0, 1.0}, 0.1);
  auto g = voxelize({{0.5, 0.5, 0.5}, {2.0, 0.0, 0.0}, {-0.1, 0.2, 0.2}}, v);
  CHECK(g.size() == 1);
  CHECK(g.dropped_count() == 2);
}

TEST_CASE("voxelize idempotent on its own cell centers") {
  auto v = small_volume();
  auto g = random_grid(v, 200, 7);
  std::vector<Vec3> centers;
  for (const auto& c : g.cells()) centers.push_back(v.cell_center(c));
  auto g2 = voxelize(centers, v);
  CHECK(g2.cells() == g.cells());
}

TEST_CASE("downsample2x floor semantics") {
  VolumeSpec v({0, 0, 0}, {0.8, 0.8, 0.8}, 0.1);
  auto g = SparseOccupancyGrid(v, {{0, 0, 0}, {1, 1, 1}});
  auto d = downsample2x(g);
  REQUIRE(d.size() == 1);
  CHECK(d.cells()[0] == VoxelCoord{0, 0, 0});
  CHECK(d.volume().voxel_size == doctest::Approx(0.2));

  auto g2 = SparseOccupancyGrid(v, {{2, 3, 4}, {3, 3, 5}});
  auto d2 = downsample2x(g2);
  REQUIRE(d2.size() == 1);
  CHECK(d2.cells()[0] == VoxelCoord{1, 1, 2});

  // floor(-1/2) = -1: floor toward -inf, not truncation
  CHECK(parent2x({-1, -1, -1}) == VoxelCoord{-1, -1, -1});
  CHECK(parent2x({-2, 2, -3}) == VoxelCoord{-1, 1, -2});
}

TEST_CASE("upscale2x emits 8 children and round-trips") {
  VolumeSpec v({0, 0, 0}, {0.8, 0.8, 0.8}, 0.2);
  auto g = SparseOccupancyGrid(v, {{0, 0, 0}});
  auto u = upscale2x(g);
  CHECK(u.size() == 8);
  CHECK(u.volume().voxel_size == doctest::Approx(0.1));

  CHECK(upscale2x(SparseOccupancyGrid(v)).empty());

  auto g2 = random_grid(v, 10, 3);
  auto rt = downsample2x(upscale2x(g2));
  CHECK(rt.cells() == g2.cells());

  auto vv = small_volume();
  auto g3 = random_grid(vv, 100, 11);
  auto cover = upscale2x(downsample2x(g3));
  for (const auto& c : g3.cells()) CHECK(cover.contains(c));
}

TEST_CASE("dilate l-inf ball") {
  VolumeSpec v({0, 0, 0}, {3.2, 3.2, 3.2}, 0.1);
  auto g = SparseOccupancyGrid(v, {{5, 5, 5}});
  CHECK(dilate(g, 1).size() == 27);
  CHECK(dilate(g, 0) == g.cells());

  auto g2 = SparseOccupancyGrid(v, {{5, 5, 5}, {6, 5, 5}});
  std::set<VoxelCoord> expect;
  for (const auto& c : g2.cells())
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj)
        for (int dk = -1; dk <= 1; ++dk)
          expect.insert({c.i + di, c.j + dj, c.k + dk});
  auto got = dilate(g2, 1);
  CHECK(got.size() == expect.size());
  CHECK(got.size() == 36);
  CHECK(std::set<VoxelCoord>(got.begin(), got.end()) == expect);
}

TEST_CASE("dilate clips to volume and bounds growth") {
  VolumeSpec v({0, 0, 0}, {0.4, 0.4, 0.4}, 0.1);
  auto g = SparseOccupancyGrid(v, {{0, 0, 0}});
  CHECK(dilate(g, 1).size() == 8);  // corner cell

  for (std::uint64_t s = 0; s < 5; ++s) {
    auto gr = random_grid(small_volume(), 50, s);
    for (int r = 0; r <= 2; ++r) {
      auto d = dilate(gr, r);
      auto ball = static_cast<std::size_t>((2 * r + 1) * (2 * r + 1) * (2 * r + 1));
      CHECK(d.size() <= gr.size() * ball);
      std::set<VoxelCoord> ds(d.begin(), d.end());
      for (const auto& c : gr.cells()) CHECK(ds.count(c));
    }
  }
}

TEST_CASE("iou basics") {
  auto v = small_volume();
  auto a = SparseOccupancyGrid(v, {{1, 1, 1}, {2, 2, 2}});
  auto b = SparseOccupancyGrid(v, {{2, 2, 2}});
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, b) == 0.5);
  auto c = SparseOccupancyGrid(v, {{9, 9, 9}});
  CHECK(iou(a, c) == 0.0);
  CHECK(iou(SparseOccupancyGrid(v), SparseOccupancyGrid(v)) == 1.0);

  VolumeSpec other({0, 0, 0}, {1.0, 1.0, 1.0}, 0.1);
  CHECK_THROWS_AS((void)iou(a, SparseOccupancyGrid(other)), Error);
}

TEST_CASE("iou matches brute-force set computation") {
  auto v = small_volume();
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto a = random_grid(v, 300, 2 * s);
    auto b = random_grid(v, 300, 2 * s + 1);
    std::set<VoxelCoord> sa(a.cells().begin(), a.cells().end());
    std::set<VoxelCoord> sb(b.cells().begin(), b.cells().end());
    std::size_t inter = 0;
    for (const auto& c : sa) inter += sb.count(c);
    double expect = static_cast<double>(inter) / (sa.size() + sb.size() - inter);
    CHECK(iou(a, b) == expect);
    CHECK(iou(a, b) == iou(b, a));

    auto mask = random_grid(v, 400, 100 + s).cells();
    std::size_t mi = 0, mu = 0;
    for (const auto& c : mask) {
      bool ia = sa.count(c) != 0, ib = sb.count(c) != 0;
      mi += ia && ib ? 1 : 0;
      mu += ia || ib ? 1 : 0;
    }
    double expect_m = mu == 0 ? 1.0 : static_cast<double>(mi) / mu;
    CHECK(iou(a, b, mask) == expect_m);
  }
}

TEST_CASE("volume spec validation") {
  CHECK_THROWS_AS(VolumeSpec({0, 0, 0}, {-1, 1, 1}, 0.1), Error);
  CHECK_THROWS_AS(VolumeSpec({0, 0, 0}, {1, 1, 1}, 0.0), Error);
  CHECK_THROWS_AS(VolumeSpec({0, 0, 0}, {1, 1, 1}, 0.3), Error);  // non-integer dims
  VolumeSpec ok({0, 0, 0}, {9.6, 9.6, 3.2}, 0.2);
  CHECK(ok.dim_i == 48);
  CHECK(ok.dim_k == 16);
}
