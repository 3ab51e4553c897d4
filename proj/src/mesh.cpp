#include "voxforge/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace voxforge {

Aabb TriMesh::bounds() const {
  Aabb b;
  for (const auto& v : vertices) b.expand(v);
  return b;
}

double TriMesh::area() const {
  double a = 0.0;
  for (const auto& t : triangles) {
    const Vec3& p0 = vertices[t[0]];
    Vec3 e1 = vertices[t[1]] - p0, e2 = vertices[t[2]] - p0;
    a += 0.5 * e1.cross(e2).norm();
  }
  return a;
}

void TriMesh::append(const TriMesh& other) {
  auto base = static_cast<std::uint32_t>(vertices.size());
  vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
  triangles.reserve(triangles.size() + other.triangles.size());
  for (const auto& t : other.triangles)
    triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
}

TriMesh TriMesh::box(const Vec3& lo, const Vec3& hi) {
  TriMesh m;
  m.vertices = {{lo.x, lo.y, lo.z}, {hi.x, lo.y, lo.z}, {hi.x, hi.y, lo.z},
                {lo.x, hi.y, lo.z}, {lo.x, lo.y, hi.z}, {hi.x, lo.y, hi.z},
                {hi.x, hi.y, hi.z}, {lo.x, hi.y, hi.z}};
  m.triangles = {{0, 2, 1}, {0, 3, 2},   // bottom (z-)
                 {4, 5, 6}, {4, 6, 7},   // top (z+)
                 {0, 1, 5}, {0, 5, 4},   // y-
                 {2, 3, 7}, {2, 7, 6},   // y+
                 {1, 2, 6}, {1, 6, 5},   // x+
                 {3, 0, 4}, {3, 4, 7}};  // x-
  return m;
}

namespace {

// Moller-Trumbore; shared by BVH and brute-force paths so both report
// bit-identical hits.
inline bool intersect_tri(const Vec3& o, const Vec3& d, const Vec3& v0,
                          const Vec3& v1, const Vec3& v2, double& t_out) {
  Vec3 e1 = v1 - v0, e2 = v2 - v0;
  Vec3 p = d.cross(e2);
  double det = e1.dot(p);
  if (std::abs(det) < 1e-14) return false;
  double inv = 1.0 / det;
  Vec3 s = o - v0;
  double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return false;
  Vec3 q = s.cross(e1);
  double v = d.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return false;
  double t = e2.dot(q) * inv;
  if (t <= 0.0) return false;
  t_out = t;
  return true;
}

inline bool hit_box(const Aabb& b, const Vec3& o, const Vec3& inv_d, double tmax) {
  double t0 = 0.0, t1 = tmax;
  for (int a = 0; a < 3; ++a) {
    double lo = (b.lo[a] - o[a]) * inv_d[a];
    double hi = (b.hi[a] - o[a]) * inv_d[a];
    if (inv_d[a] < 0.0) std::swap(lo, hi);
    t0 = std::max(t0, lo);
    t1 = std::min(t1, hi);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace

Bvh::Bvh(const TriMesh& mesh) : mesh_(mesh) {
  std::size_t n = mesh.triangles.size();
  tri_order_.resize(n);
  for (std::size_t i = 0; i < n; ++i) tri_order_[i] = static_cast<std::uint32_t>(i);
  if (n == 0) return;
  nodes_.reserve(2 * n);
  nodes_.emplace_back();
  build(0, tri_order_, 0, static_cast<int>(n));
}

void Bvh::build(std::int32_t node, std::vector<std::uint32_t>& order, int begin, int end) {
  Aabb box, cbox;
  for (int i = begin; i < end; ++i) {
    const auto& t = mesh_.triangles[order[i]];
    Aabb tb;
    for (int k = 0; k < 3; ++k) tb.expand(mesh_.vertices[t[k]]);
    box.expand(tb);
    cbox.expand((tb.lo + tb.hi) * 0.5);
  }
  // tiny epsilon guard so boundary hits never fall outside the slab test
  Vec3 pad = (box.hi - box.lo) * 1e-9 + Vec3{1e-12, 1e-12, 1e-12};
  box.lo -= pad;
  box.hi += pad;
  nodes_[node].box = box;
  int count = end - begin;
  if (count <= 4) {
    nodes_[node].left = begin;
    nodes_[node].count = count;
    return;
  }
  Vec3 ext = cbox.extent();
  int axis = ext.x >= ext.y && ext.x >= ext.z ? 0 : (ext.y >= ext.z ? 1 : 2);
  int mid = (begin + end) / 2;
  std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     auto centroid = [&](std::uint32_t ti) {
                       const auto& t = mesh_.triangles[ti];
                       return (mesh_.vertices[t[0]][axis] + mesh_.vertices[t[1]][axis] +
                               mesh_.vertices[t[2]][axis]) / 3.0;
                     };
                     double ca = centroid(a), cb = centroid(b);
                     if (ca != cb) return ca < cb;
                     return a < b;
                   });
  auto l = static_cast<std::int32_t>(nodes_.size());
  nodes_.emplace_back();
  nodes_.emplace_back();
  nodes_[node].left = l;
  nodes_[node].right = l + 1;
  nodes_[node].count = 0;
  build(l, order, begin, mid);
  build(l + 1, order, mid, end);
}

std::optional<RayHit> Bvh::raycast(const Vec3& origin, const Vec3& dir, double tmax) const {
  if (nodes_.empty()) return std::nullopt;
  Vec3 inv_d{1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z};
  double best_t = tmax;
  std::int64_t best_tri = -1;
  std::int32_t stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& n = nodes_[stack[--top]];
    if (!hit_box(n.box, origin, inv_d, best_t)) continue;
    if (n.count > 0) {
      for (int i = 0; i < n.count; ++i) {
        std::uint32_t ti = tri_order_[n.left + i];
        const auto& t = mesh_.triangles[ti];
        double th;
        if (intersect_tri(origin, dir, mesh_.vertices[t[0]], mesh_.vertices[t[1]],
                          mesh_.vertices[t[2]], th)) {
          if (th < best_t || (th == best_t && static_cast<std::int64_t>(ti) < best_tri)) {
            best_t = th;
            best_tri = ti;
          }
        }
      }
    } else {
      stack[top++] = n.right;
      stack[top++] = n.left;
    }
  }
  if (best_tri < 0) return std::nullopt;
  return RayHit{origin + dir * best_t, best_t, static_cast<std::uint32_t>(best_tri)};
}

std::optional<RayHit> Bvh::raycast_brute(const Vec3& origin, const Vec3& dir,
                                         double tmax) const {
  double best_t = tmax;
  std::int64_t best_tri = -1;
  for (std::size_t ti = 0; ti < mesh_.triangles.size(); ++ti) {
    const auto& t = mesh_.triangles[ti];
    double th;
    if (intersect_tri(origin, dir, mesh_.vertices[t[0]], mesh_.vertices[t[1]],
                      mesh_.vertices[t[2]], th)) {
      if (th < best_t || (th == best_t && static_cast<std::int64_t>(ti) < best_tri)) {
        best_t = th;
        best_tri = static_cast<std::int64_t>(ti);
      }
    }
  }
  if (best_tri < 0) return std::nullopt;
  return RayHit{origin + dir * best_t, best_t, static_cast<std::uint32_t>(best_tri)};
}

std::vector<Vec3> sample_surface(const TriMesh& mesh, std::size_t count, Rng& rng) {
  if (mesh.triangles.empty()) throw Error("sample_surface: empty mesh");
  std::vector<double> cum(mesh.triangles.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    Vec3 e1 = mesh.vertices[t[1]] - mesh.vertices[t[0]];
    Vec3 e2 = mesh.vertices[t[2]] - mesh.vertices[t[0]];
    acc += 0.5 * e1.cross(e2).norm();
    cum[i] = acc;
  }
  if (acc <= 0.0) throw Error("sample_surface: degenerate mesh");
  std::vector<Vec3> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    double u = rng.uniform() * acc;
    auto it = std::lower_bound(cum.begin(), cum.end(), u);
    std::size_t ti = std::min<std::size_t>(cum.size() - 1, it - cum.begin());
    const auto& t = mesh.triangles[ti];
    double r1 = std::sqrt(rng.uniform()), r2 = rng.uniform();
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3& b = mesh.vertices[t[1]];
    const Vec3& c = mesh.vertices[t[2]];
    out.push_back(a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2));
  }
  return out;
}

}  // namespace voxforge
