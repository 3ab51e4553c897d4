#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "voxforge/io.hpp"
#include "voxforge/rng.hpp"

using namespace voxforge;

namespace {
std::filesystem::path tmp(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}
}  // namespace

TEST_CASE("ply round trip") {
  std::vector<Vec3> pts;
  Rng rng(1);
  for (int i = 0; i < 257; ++i)
    pts.push_back({rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)});
  auto p = tmp("vf_io_test.ply");
  write_ply(p.string(), pts);
  auto back = read_ply(p.string());
  REQUIRE(back.size() == pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    // float32 storage
    CHECK(back[i].x == doctest::Approx(pts[i].x).epsilon(1e-6));
    CHECK(back[i].z == doctest::Approx(pts[i].z).epsilon(1e-6));
  }
  std::filesystem::remove(p);
}

TEST_CASE("ply empty cloud") {
  auto p = tmp("vf_io_empty.ply");
  write_ply(p.string(), {});
  CHECK(read_ply(p.string()).empty());
  std::filesystem::remove(p);
}

TEST_CASE("vxg round trip preserves cells and volume") {
  VolumeSpec v({-4.8, -4.8, -0.8}, {9.6, 9.6, 3.2}, 0.2);
  SparseOccupancyGrid g(v, {{0, 0, 0}, {47, 47, 15}, {12, 3, 7}});
  auto p = tmp("vf_io_test.vxg");
  write_vxg(p.string(), g);
  auto back = read_vxg(p.string());
  CHECK(back.volume() == g.volume());
  CHECK(back.cells() == g.cells());
  std::filesystem::remove(p);
}

TEST_CASE("vxg rejects bad magic") {
  auto p = tmp("vf_io_bad.vxg");
  std::ofstream(p) << "NOPE garbage";
  CHECK_THROWS_AS(read_vxg(p.string()), Error);
  std::filesystem::remove(p);
}

TEST_CASE("vxg stream of blocks") {
  VolumeSpec v({0, 0, 0}, {1.0, 1.0, 1.0}, 0.5);
  auto p = tmp("vf_io_seq.vxg");
  {
    std::ofstream os(p, std::ios::binary);
    append_vxg(os, SparseOccupancyGrid(v, {{0, 0, 0}}));
    append_vxg(os, SparseOccupancyGrid(v, {{1, 1, 1}, {0, 1, 0}}));
  }
  std::ifstream is(p, std::ios::binary);
  auto a = read_vxg_block(is);
  auto b = read_vxg_block(is);
  CHECK(a.size() == 1);
  CHECK(b.size() == 2);
  std::filesystem::remove(p);
}

TEST_CASE("obj round trip") {
  std::vector<Vec3> verts = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0.25, 0.125, 3.5}};
  std::vector<std::array<std::uint32_t, 3>> tris = {{0, 1, 2}, {1, 3, 2}};
  auto p = tmp("vf_io_test.obj");
  write_obj(p.string(), verts, tris);
  std::vector<Vec3> rv;
  std::vector<std::array<std::uint32_t, 3>> rt;
  read_obj(p.string(), rv, rt);
  REQUIRE(rv.size() == 4);
  CHECK(rt == tris);
  CHECK(rv[3].z == doctest::Approx(3.5));
  std::filesystem::remove(p);
}

TEST_CASE("obj output is byte-stable") {
  std::vector<Vec3> verts = {{0.1234567891, -2.5, 1e-7}};
  auto p1 = tmp("vf_io_a.obj");
  auto p2 = tmp("vf_io_b.obj");
  write_obj(p1.string(), verts, {});
  write_obj(p2.string(), verts, {});
  CHECK(read_text_file(p1.string()) == read_text_file(p2.string()));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("png writer emits a parsable signature") {
  std::vector<std::uint8_t> rgb(4 * 3 * 3, 128);
  auto p = tmp("vf_io_test.png");
  write_png(p.string(), rgb, 4, 3);
  auto data = read_text_file(p.string());
  REQUIRE(data.size() > 8);
  CHECK(static_cast<unsigned char>(data[0]) == 137);
  CHECK(data.substr(1, 3) == "PNG");
  CHECK(data.find("IHDR") != std::string::npos);
  CHECK(data.find("IEND") != std::string::npos);
  std::filesystem::remove(p);
}
