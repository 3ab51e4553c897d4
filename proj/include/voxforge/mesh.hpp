#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "voxforge/common.hpp"
#include "voxforge/rng.hpp"

namespace voxforge {

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  bool empty() const { return triangles.empty(); }
  Aabb bounds() const;
  double area() const;
  void append(const TriMesh& other);
  // Axis-aligned box helper used by the procedural scenes.
  static TriMesh box(const Vec3& lo, const Vec3& hi);
};

struct RayHit {
  Vec3 point;
  double t = 0.0;
  std::uint32_t triangle = 0;
};

// Nearest intersection along origin + t*dir for t in (0, tmax]. The BVH and
// the brute-force path share the same Moller-Trumbore kernel and the same
// tie rule (smaller t, then smaller triangle id), so results are identical.
class Bvh {
 public:
  explicit Bvh(const TriMesh& mesh);

  std::optional<RayHit> raycast(const Vec3& origin, const Vec3& dir,
                                double tmax = 1e30) const;
  std::optional<RayHit> raycast_brute(const Vec3& origin, const Vec3& dir,
                                      double tmax = 1e30) const;

 private:
  struct Node {
    Aabb box;
    std::int32_t left = -1;    // internal: child index; leaf: first triangle
    std::int32_t count = 0;    // leaf triangle count (0 for internal)
    std::int32_t right = -1;
  };
  void build(std::int32_t node, std::vector<std::uint32_t>& order, int begin, int end);

  const TriMesh& mesh_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> tri_order_;
};

// Area-weighted surface point sampling, deterministic per rng state.
std::vector<Vec3> sample_surface(const TriMesh& mesh, std::size_t count, Rng& rng);

// Marching cubes over a sparse lattice. field(n) returns the scalar at node n
// (integer lattice coords); nodes absent from `nodes` are treated as deep
// outside (large negative). Surface at field == 0, positive = inside.
// Vertices come out in lattice units.
TriMesh marching_cubes_sparse(
    const std::vector<std::array<std::int32_t, 3>>& cells,
    const std::function<double(std::int32_t, std::int32_t, std::int32_t)>& field);

}  // namespace voxforge
