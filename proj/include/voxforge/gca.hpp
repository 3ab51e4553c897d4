#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "voxforge/planner.hpp"
#include "voxforge/tape.hpp"
#include "voxforge/voxgrid.hpp"

namespace voxforge::gca {

// alpha^t = min(1, base + slope * t)
struct InfusionSchedule {
  double base = 0.15;
  double slope = 0.005;

  double rate(int t) const {
    if (t < 0) throw Error("infusion_rate: t must be nonnegative");
    double a = base + slope * static_cast<double>(t);
    return a < 1.0 ? a : 1.0;
  }
};

struct KernelConfig {
  int window_radius = 2;  // occupancy window half-extent (cells)
  int hidden = 32;        // hidden width; equals the planner SPADE dim
  int layers = 4;         // hidden layers, one SPADE site each
  int posenc_dims = 126;  // nearest multiple of 6 to the 128-dim target
  bool use_planner = true;

  int window_size() const {
    int w = 2 * window_radius + 1;
    return w * w * w;
  }
  int feature_dim() const { return window_size() + posenc_dims; }
};

struct GcaConfig {
  int steps = 30;
  int radius = 1;
  std::uint64_t seed = 0;
  bool mle_last = true;

  void validate() const {
    if (steps < 1 || radius < 0) throw Error("GcaConfig: need steps >= 1, radius >= 0");
  }
};

void init_kernel_params(nd::ParamStore& store, const KernelConfig& cfg,
                        std::uint64_t seed);

// Candidate features: [binary occupancy window around c | posenc3d(c)].
nd::Tensor candidate_features(const SparseOccupancyGrid& state,
                              const std::vector<VoxelCoord>& candidates,
                              const KernelConfig& cfg);

// Windowed-MLP transition kernel on a tape. SPADE pairs (when conditioning is
// on) modulate each hidden layer with the candidate's pillar parameters.
// Returns the [N, 1] logits node.
nd::Tape::Id kernel_logits_graph(nd::Tape& tape, const nd::ParamStore& store,
                                 const KernelConfig& cfg,
                                 const SparseOccupancyGrid& state,
                                 const std::vector<VoxelCoord>& candidates,
                                 const std::vector<std::pair<nd::Tape::Id, nd::Tape::Id>>*
                                     spade_pairs);

// Inference path: logits for dilate(state, r) candidates, chunked to bound
// memory; bit-identical to the tape path for the same inputs.
std::vector<double> kernel_logits(const nd::ParamStore& store, const KernelConfig& cfg,
                                  const SparseOccupancyGrid& state,
                                  const std::vector<VoxelCoord>& candidates,
                                  const planner::PlannerContext* context);

// Bernoulli(sigmoid(logit)) per candidate; the RNG stream is keyed by
// (seed, step, sorted candidate rank).
SparseOccupancyGrid transition_sample(const VolumeSpec& volume,
                                      const std::vector<VoxelCoord>& candidates,
                                      const std::vector<double>& logits,
                                      std::uint64_t seed, int step);

// Deterministic final step: occupy exactly logit > 0.
SparseOccupancyGrid mle_select(const VolumeSpec& volume,
                               const std::vector<VoxelCoord>& candidates,
                               const std::vector<double>& logits);

// Occupy with probability (1 - alpha) * sigmoid(logit) + alpha * [c in gt].
SparseOccupancyGrid infused_sample(const VolumeSpec& volume,
                                   const std::vector<VoxelCoord>& candidates,
                                   const std::vector<double>& logits,
                                   const SparseOccupancyGrid& gt, double alpha,
                                   std::uint64_t seed, int step);

struct Rollout {
  SparseOccupancyGrid final_state;
  std::vector<SparseOccupancyGrid> trajectory;  // steps + 1 entries, s0 first
};

// T-1 stochastic transitions plus an MLE final step (when configured). The
// planner context comes from the initial state only and persists across
// steps. Empty states stay empty.
Rollout rollout(const SparseOccupancyGrid& initial, const nd::ParamStore& store,
                const KernelConfig& kcfg, const planner::PlannerContext* context,
                const GcaConfig& gcfg);

struct CoarseSetup {
  KernelConfig kernel;
  planner::PlannerConfig planner;
  double beta_w = 0.1;
  InfusionSchedule schedule;
  nd::AdamConfig adam;
};

struct TrainStepOut {
  double loss = 0.0;         // kernel BCE + beta_w * planner BCE
  double kernel_loss = 0.0;
  double planner_aux = 0.0;  // unweighted planner BCE
  SparseOccupancyGrid next_state;
};

// One joint optimizer step on one transition of the infusion chain. The
// planner (when enabled) re-reads the sequence initial state under the
// current parameters. Throws when the candidate set is empty (the training
// sequence must restart from its seed state).
TrainStepOut train_step(nd::ParamStore& params, const CoarseSetup& setup,
                        const SparseOccupancyGrid& state, const SparseOccupancyGrid& gt,
                        const SparseOccupancyGrid& initial_state, int t,
                        std::uint64_t seq_seed);

}  // namespace voxforge::gca
