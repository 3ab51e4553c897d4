#include <doctest.h>

#include <map>
#include <set>

#include "voxforge/mesh.hpp"
#include "voxforge/rng.hpp"

using namespace voxforge;

namespace {

TriMesh random_soup(std::size_t tris, Rng& rng, double extent = 10.0) {
  TriMesh m;
  for (std::size_t i = 0; i < tris; ++i) {
    Vec3 base{rng.uniform(-extent, extent), rng.uniform(-extent, extent),
              rng.uniform(-extent, extent)};
    auto add = [&](Vec3 p) {
      m.vertices.push_back(p);
      return static_cast<std::uint32_t>(m.vertices.size() - 1);
    };
    auto a = add(base);
    auto b = add(base + Vec3{rng.uniform(0.1, 2.0), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    auto c = add(base + Vec3{rng.uniform(-1, 1), rng.uniform(0.1, 2.0), rng.uniform(-1, 1)});
    m.triangles.push_back({a, b, c});
  }
  return m;
}

}  // namespace

TEST_CASE("raycast hits ground plane") {
  TriMesh ground = TriMesh::box({-10, -10, -0.1}, {10, 10, 0.0});
  Bvh bvh(ground);
  auto hit = bvh.raycast({0, 0, 1}, {0, 0, -1});
  REQUIRE(hit.has_value());
  CHECK(hit->t == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(hit->point.z == doctest::Approx(0.0));

  // parallel to the plane: miss
  auto miss = bvh.raycast({0, 0, 1}, {1, 0, 0});
  CHECK(!miss.has_value());
}

TEST_CASE("bvh equals brute force on random soup") {
  Rng rng(99);
  TriMesh m = random_soup(1000, rng);
  Bvh bvh(m);
  int hits = 0;
  for (int i = 0; i < 10000; ++i) {
    Vec3 o{rng.uniform(-12, 12), rng.uniform(-12, 12), rng.uniform(-12, 12)};
    Vec3 d = Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}.normalized();
    if (d.norm() == 0.0) continue;
    auto a = bvh.raycast(o, d);
    auto b = bvh.raycast_brute(o, d);
    REQUIRE(a.has_value() == b.has_value());
    if (a) {
      ++hits;
      CHECK(a->t == b->t);
      CHECK(a->triangle == b->triangle);
    }
  }
  CHECK(hits > 100);  // the scene is dense enough to make the check real
}

TEST_CASE("raycast self-consistency") {
  Rng rng(5);
  TriMesh m = random_soup(200, rng);
  Bvh bvh(m);
  for (int i = 0; i < 500; ++i) {
    Vec3 o{rng.uniform(-12, 12), rng.uniform(-12, 12), rng.uniform(-12, 12)};
    Vec3 d = Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}.normalized();
    auto a = bvh.raycast(o, d);
    if (!a) continue;
    auto again = bvh.raycast(o, d);
    REQUIRE(again.has_value());
    CHECK(std::abs(a->t - again->t) < 1e-9);
  }
}

TEST_CASE("surface sampling is area weighted") {
  TriMesh m;
  // two horizontal quads: area 1 at z=0, area 4 at z=1
  auto quad = [&](double half, double z) {
    auto base = static_cast<std::uint32_t>(m.vertices.size());
    m.vertices.push_back({-half, -half, z});
    m.vertices.push_back({half, -half, z});
    m.vertices.push_back({half, half, z});
    m.vertices.push_back({-half, half, z});
    m.triangles.push_back({base, base + 1, base + 2});
    m.triangles.push_back({base, base + 2, base + 3});
  };
  quad(0.5, 0.0);
  quad(1.0, 1.0);
  CHECK(m.area() == doctest::Approx(5.0));
  Rng rng(17);
  auto pts = sample_surface(m, 20000, rng);
  std::size_t hi = 0;
  for (const auto& p : pts) hi += p.z > 0.5 ? 1 : 0;
  CHECK(static_cast<double>(hi) / pts.size() == doctest::Approx(0.8).epsilon(0.03));
}

TEST_CASE("marching cubes on a sphere field") {
  // field > 0 inside radius 8 (lattice units)
  auto field = [](std::int32_t x, std::int32_t y, std::int32_t z) {
    double dx = x - 16.0, dy = y - 16.0, dz = z - 16.0;
    return 8.0 - std::sqrt(dx * dx + dy * dy + dz * dz);
  };
  std::vector<std::array<std::int32_t, 3>> cells;
  for (std::int32_t x = 0; x < 32; ++x)
    for (std::int32_t y = 0; y < 32; ++y)
      for (std::int32_t z = 0; z < 32; ++z) cells.push_back({x, y, z});
  TriMesh m = marching_cubes_sparse(cells, field);
  REQUIRE(!m.empty());

  for (const auto& v : m.vertices) {
    double r = (v - Vec3{16, 16, 16}).norm();
    CHECK(r > 7.8);
    CHECK(r < 8.2);
  }

  // closed surface: every edge shared by exactly two triangles, Euler = 2
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> edge_count;
  for (const auto& t : m.triangles)
    for (int e = 0; e < 3; ++e) {
      auto a = t[e], b = t[(e + 1) % 3];
      edge_count[{std::min(a, b), std::max(a, b)}] += 1;
    }
  for (const auto& [e, c] : edge_count) CHECK(c == 2);
  auto V = static_cast<long>(m.vertices.size());
  auto E = static_cast<long>(edge_count.size());
  auto F = static_cast<long>(m.triangles.size());
  CHECK(V - E + F == 2);
}

TEST_CASE("marching cubes empty outside the surface") {
  auto field = [](std::int32_t, std::int32_t, std::int32_t) { return -1.0; };
  std::vector<std::array<std::int32_t, 3>> cells = {{0, 0, 0}, {1, 0, 0}};
  CHECK(marching_cubes_sparse(cells, field).empty());
}
