#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "voxforge/rng.hpp"
#include "voxforge/tensor.hpp"

namespace voxforge::nd {

using GradMap = std::map<std::string, Tensor>;

// Named parameter bundle with Adam moment buffers. Single writer during
// updates; safe to share read-only between threads otherwise.
struct ParamStore {
  std::map<std::string, Tensor> params;
  std::map<std::string, Tensor> adam_m;
  std::map<std::string, Tensor> adam_v;
  std::uint64_t step_count = 0;

  bool has(const std::string& name) const { return params.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  // Creates if absent; existing entries are returned untouched.
  Tensor& create(const std::string& name, std::vector<std::size_t> shape);
  Tensor& create_uniform(const std::string& name, std::vector<std::size_t> shape,
                         double lo, double hi, std::uint64_t seed);
  // He-style fan-in scaled init for affine/conv weights.
  Tensor& create_fanin(const std::string& name, std::vector<std::size_t> shape,
                       std::size_t fan_in, std::uint64_t seed);

  std::size_t total_size() const;
};

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.5;
};

// Global-norm clip (over every entry of `grads`) followed by the Adam update
// with bias correction; increments step_count. NaN gradients raise before any
// parameter is touched.
void adam_step(ParamStore& store, const GradMap& grads, const AdamConfig& cfg = {});

// Post-clip global gradient norm of the previous call (diagnostics).
double global_grad_norm(const GradMap& grads);

// Checkpoint: magic "NDF1", version, name-sorted params (name, shape, f64
// payload), Adam moments, step_count. Bit-exact round trip.
void save_checkpoint(const std::string& path, const ParamStore& store);
ParamStore load_checkpoint(const std::string& path);

}  // namespace voxforge::nd
