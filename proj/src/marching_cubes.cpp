#include <cstdint>
#include <unordered_map>

#include "voxforge/mc_tables.hpp"
#include "voxforge/mesh.hpp"

namespace voxforge {

namespace {

// Edge key: lower lattice node packed to 20 bits per axis plus the axis id.
// Shared edges between neighboring cells resolve to the same key, so vertices
// are welded and the output is watertight.
inline std::uint64_t edge_key(std::int32_t x, std::int32_t y, std::int32_t z, int axis) {
  constexpr std::uint64_t M = (1u << 20) - 1;
  return ((((static_cast<std::uint64_t>(x) & M) << 20 | (static_cast<std::uint64_t>(y) & M))
           << 20 | (static_cast<std::uint64_t>(z) & M))
          << 2) | static_cast<std::uint64_t>(axis);
}

}  // namespace

TriMesh marching_cubes_sparse(
    const std::vector<std::array<std::int32_t, 3>>& cells,
    const std::function<double(std::int32_t, std::int32_t, std::int32_t)>& field) {
  TriMesh mesh;
  std::unordered_map<std::uint64_t, std::uint32_t> edge_verts;
  edge_verts.reserve(cells.size() * 2);

  for (const auto& cell : cells) {
    double val[8];
    std::int32_t px[8], py[8], pz[8];
    int cube_index = 0;
    for (int v = 0; v < 8; ++v) {
      px[v] = cell[0] + mc::kVertexOffset[v][0];
      py[v] = cell[1] + mc::kVertexOffset[v][1];
      pz[v] = cell[2] + mc::kVertexOffset[v][2];
      val[v] = field(px[v], py[v], pz[v]);
      if (val[v] < 0.0) cube_index |= 1 << v;
    }
    int edges = mc::kEdgeTable[cube_index];
    if (edges == 0) continue;

    std::uint32_t edge_vertex_id[12];
    for (int e = 0; e < 12; ++e) {
      if (!(edges & (1 << e))) continue;
      int a = mc::kEdgeVertex[e][0], b = mc::kEdgeVertex[e][1];
      // canonical orientation: lower node first, so neighbors interpolate
      // the same expression bit-exactly
      int lo = a, hi = b;
      if (px[b] < px[a] || py[b] < py[a] || pz[b] < pz[a]) {
        lo = b;
        hi = a;
      }
      int axis = px[hi] != px[lo] ? 0 : (py[hi] != py[lo] ? 1 : 2);
      std::uint64_t key = edge_key(px[lo], py[lo], pz[lo], axis);
      auto it = edge_verts.find(key);
      if (it == edge_verts.end()) {
        double v0 = val[lo], v1 = val[hi];
        double t = v0 / (v0 - v1);  // crossing of the linear interpolant
        Vec3 p{px[lo] + (axis == 0 ? t : 0.0), py[lo] + (axis == 1 ? t : 0.0),
               pz[lo] + (axis == 2 ? t : 0.0)};
        auto id = static_cast<std::uint32_t>(mesh.vertices.size());
        mesh.vertices.push_back(p);
        it = edge_verts.emplace(key, id).first;
      }
      edge_vertex_id[e] = it->second;
    }

    const int* tri = mc::kTriTable[cube_index];
    for (int i = 0; tri[i] != -1; i += 3) {
      std::uint32_t i0 = edge_vertex_id[tri[i]];
      std::uint32_t i1 = edge_vertex_id[tri[i + 1]];
      std::uint32_t i2 = edge_vertex_id[tri[i + 2]];
      if (i0 == i1 || i1 == i2 || i0 == i2) continue;  // degenerate sliver
      mesh.triangles.push_back({i0, i1, i2});
    }
  }
  return mesh;
}

}  // namespace voxforge
