#pragma once

#include <vector>

#include "voxforge/common.hpp"
#include "voxforge/voxgrid.hpp"

namespace voxforge::nd {

// Sinusoidal 3D positional encoding: per axis, dims/6 (sin, cos) pairs of the
// normalized coordinate (c + 0.5) / dim at frequencies 2^f * pi. dims must be
// divisible by 6.
std::vector<double> posenc3d(const VoxelCoord& c, int dims, const VolumeSpec& grid);

// Two-axis variant for BEV pillars; dims must be divisible by 4.
std::vector<double> posenc2d(int i, int j, int dims, int dim_i, int dim_j);

// In-place writers used by batched feature assembly.
void posenc3d_into(const VoxelCoord& c, int dims, const VolumeSpec& grid, double* out);
void posenc2d_into(int i, int j, int dims, int dim_i, int dim_j, double* out);

}  // namespace voxforge::nd
