#include "voxforge/io.hpp"

#include <zlib.h>

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

namespace voxforge {

namespace {

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error("unexpected end of stream");
  return v;
}

std::ofstream open_out(const std::string& path, bool binary) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw Error("cannot open for writing: " + path);
  return os;
}

std::ifstream open_in(const std::string& path, bool binary) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw Error("cannot open for reading: " + path);
  return is;
}

}  // namespace

void write_ply(const std::string& path, const std::vector<Vec3>& points) {
  auto os = open_out(path, true);
  os << "ply\nformat binary_little_endian 1.0\n"
     << "element vertex " << points.size() << "\n"
     << "property float x\nproperty float y\nproperty float z\n"
     << "end_header\n";
  for (const auto& p : points) {
    float xyz[3] = {static_cast<float>(p.x), static_cast<float>(p.y),
                    static_cast<float>(p.z)};
    os.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
  }
  if (!os) throw Error("write failed: " + path);
}

std::vector<Vec3> read_ply(const std::string& path) {
  auto is = open_in(path, true);
  std::string line;
  std::size_t count = 0;
  bool binary_le = false;
  std::vector<std::string> props;
  if (!std::getline(is, line) || line != "ply") throw Error("not a PLY file: " + path);
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "format") {
      std::string fmt;
      ss >> fmt;
      binary_le = (fmt == "binary_little_endian");
    } else if (tok == "element") {
      std::string name;
      ss >> name >> count;
      if (name != "vertex") throw Error("PLY: only vertex elements supported: " + path);
    } else if (tok == "property") {
      std::string type, name;
      ss >> type >> name;
      if (type != "float") throw Error("PLY: only float properties supported");
      props.push_back(name);
    } else if (tok == "end_header") {
      break;
    }
  }
  if (!binary_le) throw Error("PLY: expected binary_little_endian: " + path);
  int xi = -1, yi = -1, zi = -1;
  for (int i = 0; i < static_cast<int>(props.size()); ++i) {
    if (props[i] == "x") xi = i;
    if (props[i] == "y") yi = i;
    if (props[i] == "z") zi = i;
  }
  if (xi < 0 || yi < 0 || zi < 0) throw Error("PLY: missing x/y/z properties");
  std::vector<Vec3> out;
  out.reserve(count);
  std::vector<float> row(props.size());
  for (std::size_t n = 0; n < count; ++n) {
    is.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!is) throw Error("PLY: truncated vertex data: " + path);
    out.push_back({row[xi], row[yi], row[zi]});
  }
  return out;
}

void append_vxg(std::ostream& os, const SparseOccupancyGrid& grid) {
  os.write("VXG1", 4);
  const VolumeSpec& v = grid.volume();
  for (double d : {v.origin.x, v.origin.y, v.origin.z, v.extent.x, v.extent.y,
                   v.extent.z, v.voxel_size})
    put(os, d);
  put(os, static_cast<std::uint64_t>(grid.size()));
  for (const auto& c : grid.cells()) {
    put(os, c.i);
    put(os, c.j);
    put(os, c.k);
  }
}

SparseOccupancyGrid read_vxg_block(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "VXG1", 4) != 0) throw Error("bad VXG1 magic");
  double f[7];
  for (double& d : f) d = get<double>(is);
  VolumeSpec v({f[0], f[1], f[2]}, {f[3], f[4], f[5]}, f[6]);
  auto n = get<std::uint64_t>(is);
  std::vector<VoxelCoord> cells(n);
  for (auto& c : cells) {
    c.i = get<std::int32_t>(is);
    c.j = get<std::int32_t>(is);
    c.k = get<std::int32_t>(is);
  }
  return SparseOccupancyGrid(v, std::move(cells));
}

void write_vxg(const std::string& path, const SparseOccupancyGrid& grid) {
  auto os = open_out(path, true);
  append_vxg(os, grid);
  if (!os) throw Error("write failed: " + path);
}

SparseOccupancyGrid read_vxg(const std::string& path) {
  auto is = open_in(path, true);
  return read_vxg_block(is);
}

void write_obj(const std::string& path, const std::vector<Vec3>& vertices,
               const std::vector<std::array<std::uint32_t, 3>>& triangles) {
  auto os = open_out(path, false);
  char buf[128];
  for (const auto& v : vertices) {
    std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", v.x, v.y, v.z);
    os << buf;
  }
  for (const auto& t : triangles) {
    std::snprintf(buf, sizeof(buf), "f %u %u %u\n", t[0] + 1, t[1] + 1, t[2] + 1);
    os << buf;
  }
  if (!os) throw Error("write failed: " + path);
}

void read_obj(const std::string& path, std::vector<Vec3>& vertices,
              std::vector<std::array<std::uint32_t, 3>>& triangles) {
  auto is = open_in(path, false);
  vertices.clear();
  triangles.clear();
  std::string line;
  while (std::getline(is, line)) {
    if (line.size() < 2) continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 v;
      ss >> v.x >> v.y >> v.z;
      vertices.push_back(v);
    } else if (tag == "f") {
      std::array<std::uint32_t, 3> t{};
      for (int i = 0; i < 3; ++i) {
        std::string tok;
        ss >> tok;
        // tolerate v/vt/vn syntax
        t[i] = static_cast<std::uint32_t>(std::stoul(tok.substr(0, tok.find('/')))) - 1;
      }
      triangles.push_back(t);
    }
  }
}

namespace {
std::uint32_t crc32_of(const std::uint8_t* data, std::size_t len, std::uint32_t seed) {
  return static_cast<std::uint32_t>(
      ::crc32(seed, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(len)));
}

void png_chunk(std::ostream& os, const char type[4], const std::vector<std::uint8_t>& data) {
  std::uint8_t len[4] = {static_cast<std::uint8_t>(data.size() >> 24),
                         static_cast<std::uint8_t>(data.size() >> 16),
                         static_cast<std::uint8_t>(data.size() >> 8),
                         static_cast<std::uint8_t>(data.size())};
  os.write(reinterpret_cast<char*>(len), 4);
  os.write(type, 4);
  if (!data.empty()) os.write(reinterpret_cast<const char*>(data.data()),
                              static_cast<std::streamsize>(data.size()));
  std::uint32_t crc = crc32_of(reinterpret_cast<const std::uint8_t*>(type), 4, ::crc32(0, nullptr, 0));
  if (!data.empty()) crc = crc32_of(data.data(), data.size(), crc);
  std::uint8_t cb[4] = {static_cast<std::uint8_t>(crc >> 24), static_cast<std::uint8_t>(crc >> 16),
                        static_cast<std::uint8_t>(crc >> 8), static_cast<std::uint8_t>(crc)};
  os.write(reinterpret_cast<char*>(cb), 4);
}
}  // namespace

void write_png(const std::string& path, const std::vector<std::uint8_t>& rgb,
               int width, int height) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3)
    throw Error("write_png: buffer size mismatch");
  auto os = open_out(path, true);
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  os.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<std::uint8_t> ihdr = {
      static_cast<std::uint8_t>(width >> 24),  static_cast<std::uint8_t>(width >> 16),
      static_cast<std::uint8_t>(width >> 8),   static_cast<std::uint8_t>(width),
      static_cast<std::uint8_t>(height >> 24), static_cast<std::uint8_t>(height >> 16),
      static_cast<std::uint8_t>(height >> 8),  static_cast<std::uint8_t>(height),
      8, 2, 0, 0, 0};  // 8-bit, RGB
  png_chunk(os, "IHDR", ihdr);

  // filter byte 0 per scanline
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + 3 * width));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), rgb.begin() + static_cast<std::size_t>(y) * width * 3,
               rgb.begin() + static_cast<std::size_t>(y + 1) * width * 3);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(bound);
  if (compress2(z.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw Error("write_png: deflate failed");
  z.resize(bound);
  png_chunk(os, "IDAT", z);
  png_chunk(os, "IEND", {});
  if (!os) throw Error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  auto is = open_in(path, true);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  auto os = open_out(path, true);
  os << content;
  if (!os) throw Error("write failed: " + path);
}

}  // namespace voxforge
