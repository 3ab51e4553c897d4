#include "voxforge/posenc.hpp"

#include <cmath>

namespace voxforge::nd {

void posenc3d_into(const VoxelCoord& c, int dims, const VolumeSpec& grid, double* out) {
  if (dims <= 0 || dims % 6 != 0) throw Error("posenc3d: dims must be divisible by 6");
  int freqs = dims / 6;
  const double u[3] = {(c.i + 0.5) / grid.dim_i, (c.j + 0.5) / grid.dim_j,
                       (c.k + 0.5) / grid.dim_k};
  int o = 0;
  for (int axis = 0; axis < 3; ++axis) {
    double base = kPi * u[axis];
    double arg = base;  // 2^0 * pi * u
    for (int f = 0; f < freqs; ++f) {
      out[o++] = std::sin(arg);
      out[o++] = std::cos(arg);
      arg *= 2.0;
    }
  }
}

std::vector<double> posenc3d(const VoxelCoord& c, int dims, const VolumeSpec& grid) {
  std::vector<double> out(dims);
  posenc3d_into(c, dims, grid, out.data());
  return out;
}

void posenc2d_into(int i, int j, int dims, int dim_i, int dim_j, double* out) {
  if (dims <= 0 || dims % 4 != 0) throw Error("posenc2d: dims must be divisible by 4");
  int freqs = dims / 4;
  const double u[2] = {(i + 0.5) / dim_i, (j + 0.5) / dim_j};
  int o = 0;
  for (int axis = 0; axis < 2; ++axis) {
    double arg = kPi * u[axis];
    for (int f = 0; f < freqs; ++f) {
      out[o++] = std::sin(arg);
      out[o++] = std::cos(arg);
      arg *= 2.0;
    }
  }
}

std::vector<double> posenc2d(int i, int j, int dims, int dim_i, int dim_j) {
  std::vector<double> out(dims);
  posenc2d_into(i, j, dims, dim_i, dim_j, out.data());
  return out;
}

}  // namespace voxforge::nd
