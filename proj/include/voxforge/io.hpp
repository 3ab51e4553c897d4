#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxforge/common.hpp"
#include "voxforge/voxgrid.hpp"

namespace voxforge {

struct TriMeshData;  // fwd (mesh.hpp)

// Binary little-endian PLY with x, y, z float32 per vertex.
void write_ply(const std::string& path, const std::vector<Vec3>& points);
std::vector<Vec3> read_ply(const std::string& path);

// Versioned binary occupancy grid block:
// magic "VXG1", volume spec (9 x f64), cell count (u64), sorted i32 triples.
void write_vxg(const std::string& path, const SparseOccupancyGrid& grid);
SparseOccupancyGrid read_vxg(const std::string& path);

// Stream variants so trajectories can be dumped as consecutive blocks.
void append_vxg(std::ostream& os, const SparseOccupancyGrid& grid);
SparseOccupancyGrid read_vxg_block(std::istream& is);

// ASCII OBJ triangle meshes (v/f records only).
void write_obj(const std::string& path, const std::vector<Vec3>& vertices,
               const std::vector<std::array<std::uint32_t, 3>>& triangles);
void read_obj(const std::string& path, std::vector<Vec3>& vertices,
              std::vector<std::array<std::uint32_t, 3>>& triangles);

// 8-bit RGB PNG via zlib deflate.
void write_png(const std::string& path, const std::vector<std::uint8_t>& rgb,
               int width, int height);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace voxforge
