#pragma once

#include <array>
#include <string>
#include <vector>

#include "voxforge/tape.hpp"
#include "voxforge/voxgrid.hpp"

namespace voxforge::planner {

struct PlannerConfig {
  int point_dim = 32;    // local point-net width
  int unet_c0 = 16, unet_c1 = 24, unet_c2 = 32;
  int bev_dim = 128;     // UNet output channels
  int head_hidden = 8;
  int spade_layers = 4;  // (gamma, beta) pairs
  int spade_dim = 32;    // matches the kernel hidden width
  int zr = 4;            // rough occupancy height bins
  int pool_xy = 3;       // h_max -> h_r = h_max / pool_xy

  void validate(int h, int w, int zdim) const;
};

// Per-pillar lists of normalized occupied-cell coordinates (c + 0.5) / dims.
struct PillarGrid {
  int h = 0, w = 0;
  std::vector<std::vector<std::array<double, 3>>> points;  // h * w pillars
  std::size_t total = 0;

  std::size_t pillar_index(int i, int j) const {
    return static_cast<std::size_t>(i) * w + j;
  }
};

PillarGrid pillarize(const SparseOccupancyGrid& state);

void init_planner_params(nd::ParamStore& store, const PlannerConfig& cfg,
                         std::uint64_t seed);

// Differentiable forward pass. gamma/beta are [spade_dim, h, w] per layer;
// rough is [zr, h_r, w_r] logits.
struct PlannerGraph {
  nd::Tape::Id bev = -1;
  std::vector<nd::Tape::Id> gamma, beta;
  nd::Tape::Id rough = -1;
};
PlannerGraph planner_forward(nd::Tape& tape, const nd::ParamStore& store,
                             const PlannerConfig& cfg, const PillarGrid& pillars);

// Inference context: the same forward evaluated once from the initial state;
// plain tensors, constant over all transition steps.
struct PlannerContext {
  std::vector<nd::Tensor> gamma, beta;  // [spade_dim, h, w]
  nd::Tensor bev;                       // [bev_dim, h, w]
};
PlannerContext planner_context(const nd::ParamStore& store, const PlannerConfig& cfg,
                               const SparseOccupancyGrid& initial_state);

// OR-pooled coarse gt occupancy over (pool_xy, pool_xy, zdim/zr) blocks,
// flattened as [zr, h_r, w_r] targets.
nd::Tensor pool_rough_gt(const SparseOccupancyGrid& gt, const PlannerConfig& cfg);

// beta_w * mean BCE(rough logits, pooled gt); scalar node.
nd::Tape::Id planner_loss(nd::Tape& tape, nd::Tape::Id rough,
                          const nd::Tensor& pooled_gt, double beta_w);

// gamma * standardize(hidden) + beta, eps = 1e-5. Standalone (non-tape) form.
std::vector<double> spade_modulate(const std::vector<double>& hidden,
                                   const std::vector<double>& gamma,
                                   const std::vector<double>& beta);

// PCA projection of the BEV feature onto its first 3 principal axes, min-max
// scaled per channel to 8-bit RGB. Sign convention: the largest-magnitude
// loading of each axis is made positive. Degenerate covariance falls back to
// grayscale with a warning.
void bev_pca_dump(const nd::Tensor& bev, const std::string& png_path);

}  // namespace voxforge::planner
