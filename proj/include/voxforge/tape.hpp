#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "voxforge/optim.hpp"
#include "voxforge/tensor.hpp"

namespace voxforge::nd {

// Reverse-mode tape. Each op records its output value plus a backward
// closure; backward() runs the closures in reverse creation order.
// Deterministic: all kernels iterate in fixed order, parallel loops write
// disjoint slots only.
class Tape {
 public:
  using Id = int;

  // Leaves
  Id input(Tensor t);                 // differentiable leaf
  Id constant(Tensor t);              // non-differentiable leaf
  Id param(const ParamStore& store, const std::string& name);

  // Elementwise / shape
  Id relu(Id x);
  Id softplus(Id x);
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id scale(Id a, double s);
  Id concat_cols(Id a, Id b);
  Id slice_cols(Id x, std::size_t c0, std::size_t c1);

  // Linear algebra
  // x[n,f] * w[f,h] + b[h]
  Id affine(Id x, Id w, Id b);
  Id matmul(Id a, Id b);

  // Reductions / normalization
  Id mean_all(Id x);
  // Per-row standardization (mean 0, var 1, +eps inside the sqrt).
  Id normalize_rows(Id x, double eps = 1e-5);
  // gamma * normalize(h) + beta, rows independent.
  Id spade_modulate(Id h, Id gamma, Id beta);
  // Max over row segments [begin,end) -> one output row per segment; empty
  // segments produce zeros. Ties route gradient to the lowest row index.
  Id segment_max(Id x, std::vector<std::pair<std::size_t, std::size_t>> segments);

  // Losses (scalar outputs)
  Id bce_with_logits(Id logits, Tensor targets);
  Id l1(Id pred, Tensor target);
  Id l1_rows(Id pred, Tensor target, std::vector<std::uint8_t> row_mask);

  // 2D (CHW) ops
  // x[ci,h,w], w[co,ci,kh,kw], b[co]; stride 1, reflect-101 padding.
  Id conv2d(Id x, Id w, Id b);
  Id maxpool2d_2x(Id x);
  Id upsample2d_2x(Id x);
  Id avgpool2d(Id x, std::size_t sy, std::size_t sx);
  Id concat_chw(Id a, Id b);  // channel concat

  // Layout bridges between row-major [H*W, C] point features and [C,H,W].
  Id rows_to_chw(Id x, std::size_t h, std::size_t w);
  Id chw_to_rows(Id x);
  // out[n,c] = x[c, idx/w, idx%w] for linear pillar indices; scatter-add back.
  Id gather_pillars(Id x, std::vector<std::size_t> indices);

  const Tensor& val(Id id) const { return nodes_[id].val; }
  const Tensor& grad(Id id) const { return nodes_[id].grad; }

  // Seeds d(out)=1 (out must be scalar) and accumulates into every node grad.
  void backward(Id out);

  // Sum of param-leaf gradients by name (after backward).
  GradMap param_grads() const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    bool needs_grad = false;
    std::string param_name;
    std::function<void(Tape&)> back;
  };

  Id push(Tensor val, bool needs_grad, std::function<void(Tape&)> back,
          std::string param_name = {});
  void ensure_grad(Id id);
  const Tensor& v(Id id) const { return nodes_[id].val; }
  Tensor& g(Id id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
};

// Worst |analytic - numeric| / max(1, |analytic|, |numeric|) over every
// coordinate of every input, central differences with step eps.
// build(tape, input_ids) must construct the graph and return a scalar loss id.
double grad_check(
    const std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)>& build,
    const std::vector<Tensor>& inputs, double eps);

}  // namespace voxforge::nd
