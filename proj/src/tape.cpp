#include "voxforge/tape.hpp"

#include <cmath>
#include <memory>

namespace voxforge::nd {

namespace {
void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) throw Error(std::string(op) + ": shape mismatch");
}
// reflect-101 boundary index
inline std::size_t reflect(long p, long n) {
  if (p < 0) p = -p;
  if (p >= n) p = 2 * n - 2 - p;
  return static_cast<std::size_t>(p);
}
}  // namespace

Tape::Id Tape::push(Tensor val, bool needs_grad, std::function<void(Tape&)> back,
                    std::string param_name) {
  Node n;
  n.val = std::move(val);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  n.param_name = std::move(param_name);
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

void Tape::ensure_grad(Id id) {
  Node& n = nodes_[id];
  if (n.grad.numel() != n.val.numel()) n.grad = Tensor(n.val.shape);
}

Tape::Id Tape::input(Tensor t) { return push(std::move(t), true, nullptr); }
Tape::Id Tape::constant(Tensor t) { return push(std::move(t), false, nullptr); }

Tape::Id Tape::param(const ParamStore& store, const std::string& name) {
  return push(store.at(name), true, nullptr, name);
}

Tape::Id Tape::relu(Id x) {
  Tensor out = v(x);
  for (double& a : out.v) a = a > 0.0 ? a : 0.0;
  Id id = push(std::move(out), nodes_[x].needs_grad, nullptr);
  nodes_[id].back = [x, id](Tape& t) {
    if (!t.nodes_[x].needs_grad) return;
    t.ensure_grad(x);
    const Tensor& go = t.nodes_[id].grad;
    const Tensor& xv = t.nodes_[x].val;
    Tensor& dx = t.nodes_[x].grad;
    for (std::size_t i = 0; i < xv.numel(); ++i)
      if (xv.v[i] > 0.0) dx.v[i] += go.v[i];
  };
  return id;
}

Tape::Id Tape::softplus(Id x) {
  Tensor out = v(x);
  for (double& a : out.v) {
    // stable log(1+exp(a))
    a = a > 30.0 ? a : std::log1p(std::exp(a));
  }
  Id id = push(std::move(out), nodes_[x].needs_grad, nullptr);
  nodes_[id].back = [x, id](Tape& t) {
    if (!t.nodes_[x].needs_grad) return;
    t.ensure_grad(x);
    const Tensor& gx = t.nodes_[id].grad;
    const Tensor& xv = t.nodes_[x].val;
    Tensor& dx = t.nodes_[x].grad;
    for (std::size_t i = 0; i < xv.numel(); ++i) {
      double s = 1.0 / (1.0 + std::exp(-xv.v[i]));
      dx.v[i] += gx.v[i] * s;
    }
  };
  return id;
}

Tape::Id Tape::add(Id a, Id b) {
  check_same_shape(v(a), v(b), "add");
  Tensor out = v(a);
  const Tensor& bb = v(b);
  for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] += bb.v[i];
  Id id = push(std::move(out), nodes_[a].needs_grad || nodes_[b].needs_grad, nullptr);
  nodes_[id].back = [a, b, id](Tape& t) {
    const Tensor& go = t.nodes_[id].grad;
    for (Id src : {a, b}) {
      if (!t.nodes_[src].needs_grad) continue;
      t.ensure_grad(src);
      Tensor& d = t.nodes_[src].grad;
      for (std::size_t i = 0; i < go.numel(); ++i) d.v[i] += go.v[i];
    }
  };
  return id;
}

Tape::Id Tape::sub(Id a, Id b) {
  check_same_shape(v(a), v(b), "sub");
  Tensor out = v(a);
  const Tensor& bb = v(b);
  for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] -= bb.v[i];
  Id id = push(std::move(out), nodes_[a].needs_grad || nodes_[b].needs_grad, nullptr);
  nodes_[id].back = [a, b, id](Tape& t) {
    const Tensor& go = t.nodes_[id].grad;
    if (t.nodes_[a].needs_grad) {
      t.ensure_grad(a);
      Tensor& d = t.nodes_[a].grad;
      for (std::size_t i = 0; i < go.numel(); ++i) d.v[i] += go.v[i];
    }
    if (t.nodes_[b].needs_grad) {
      t.ensure_grad(b);
      Tensor& d = t.nodes_[b].grad;
      for (std::size_t i = 0; i < go.numel(); ++i) d.v[i] -= go.v[i];
    }
  };
  return id;
}

Tape::Id Tape::mul(Id a, Id b) {
  check_same_shape(v(a), v(b), "mul");
  Tensor out = v(a);
  const Tensor& bb = v(b);
  for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] *= bb.v[i];
  Id id = push(std::move(out), nodes_[a].needs_grad || nodes_[b].needs_grad, nullptr);
  nodes_[id].back = [a, b, id](Tape& t) {
    const Tensor& go = t.nodes_[id].grad;
    if (t.nodes_[a].needs_grad) {
      t.ensure_grad(a);
      Tensor& d = t.nodes_[a].grad;
      const Tensor& bv = t.nodes_[b].val;
      for (std::size_t i = 0; i < go.numel(); ++i) d.v[i] += go.v[i] * bv.v[i];
    }
    if (t.nodes_[b].needs_grad) {
      t.ensure_grad(b);
      Tensor& d = t.nodes_[b].grad;
      const Tensor& av = t.nodes_[a].val;
      for (std::size_t i = 0; i < go.numel(); ++i) d.v[i] += go.v[i] * av.v[i];
    }
  };
  return id;
}

Tape::Id Tape::scale(Id a, double s) {
  Tensor out = v(a);
  for (double& x : out.v) x *= s;
  Id id = push(std::move(out), nodes_[a].needs_grad, nullptr);
  nodes_[id].back = [a, s, id](Tape& t) {
    if (!t.nodes_[a].needs_grad) return;
    t.ensure_grad(a);
    const Tensor& go = t.nodes_[id].grad;
    Tensor& d = t.nodes_[a].grad;
    for (std::size_t i = 0; i < go.numel(); ++i) d.v[i] += go.v[i] * s;
  };
  return id;
}

Tape::Id Tape::concat_cols(Id a, Id b) {
  const Tensor& av = v(a);
  const Tensor& bv = v(b);
  if (av.ndim() != 2 || bv.ndim() != 2 || av.shape[0] != bv.shape[0])
    throw Error("concat_cols: need [n,p],[n,q]");
  std::size_t n = av.shape[0], p = av.shape[1], q = bv.shape[1];
  Tensor out({n, p + q});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(&av.v[i * p], p, &out.v[i * (p + q)]);
    std::copy_n(&bv.v[i * q], q, &out.v[i * (p + q) + p]);
  }
  Id id = push(std::move(out), nodes_[a].needs_grad || nodes_[b].needs_grad, nullptr);
  nodes_[id].back = [a, b, n, p, q, id](Tape& t) {
    const Tensor& go = t.nodes_[id].grad;
    if (t.nodes_[a].needs_grad) {
      t.ensure_grad(a);
      Tensor& d = t.nodes_[a].grad;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) d.v[i * p + j] += go.v[i * (p + q) + j];
    }
    if (t.nodes_[b].needs_grad) {
      t.ensure_grad(b);
      Tensor& d = t.nodes_[b].grad;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < q; ++j) d.v[i * q + j] += go.v[i * (p + q) + p + j];
    }
  };
  return id;
}

Tape::Id Tape::slice_cols(Id x, std::size_t c0, std::size_t c1) {
  const Tensor& xv = v(x);
  if (xv.ndim() != 2 || c1 > xv.shape[1] || c0 >= c1) throw Error("slice_cols: bad range");
  std::size_t n = xv.shape[0], m = xv.shape[1], w = c1 - c0;
  Tensor out({n, w});
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(&xv.v[i * m + c0], w, &out.v[i * w]);
  Id id = push(std::move(out), nodes_[x].needs_grad, nullptr);
  nodes_[id].back = [x, n, m, c0, w, id](Tape& t) {
    if (!t.nodes_[x].needs_grad) return;
    t.ensure_grad(x);
    const Tensor& go = t.nodes_[id].grad;
    Tensor& d = t.nodes_[x].grad;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) d.v[i * m + c0 + j] += go.v[i * w + j];
  };
  return id;
}

Tape::Id Tape::affine(Id x, Id w, Id b) {
  const Tensor& xv = v(x);
  const Tensor& wv = v(w);
  const Tensor& bv = v(b);
  if (xv.ndim() != 2 || wv.ndim() != 2 || xv.shape[1] != wv.shape[0] ||
      bv.numel() != wv.shape[1])
    throw Error("affine: shape mismatch (x[n,f], w[f,h], b[h])");
  std::size_t n = xv.shape[0], f = xv.shape[1], h = wv.shape[1];
  Tensor out({n, h});
  gemm_nn(xv.v.data(), wv.v.data(), out.v.data(), n, f, h);
  parallel_for_chunks(n, 64, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i)
      for (std::size_t j = 0; j < h; ++j) out.v[i * h + j] += bv.v[j];
  });
  Id id = push(std::move(out), true, nullptr);
  nodes_[id].back = [x, w, b, n, f, h, id](Tape& t) {
    const Tensor& go = t.nodes_[id].grad;
    const Tensor& xv2 = t.nodes_[x].val;
    const Tensor& wv2 = t.nodes_[w].val;
    if (t.nodes_[x].needs_grad) {
      t.ensure_grad(x);
      gemm_nt(go.v.data(), wv2.v.data(), t.nodes_[x].grad.v.data(), n, h, f, true);
    }
    if (t.nodes_[w].needs_grad) {
      t.ensure_grad(w);
      gemm_tn(xv2.v.data(), go.v.data(), t.nodes_[w].grad.v.data(), n, f, h, true);
    }
    if (t.nodes_[b].needs_grad) {
      t.ensure_grad(b);
      Tensor& db = t.nodes_[b].grad;
      parallel_for_chunks(h, 64, [&](std::size_t j0, std::size_t j1) {
        for (std::size_t j = j0; j < j1; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < n; ++i) s += go.v[i * h + j];
          db.v[j] += s;
        }
      });
    }
  };
  return id;
}

Tape::Id Tape::matmul(Id a, Id b) {
  const Tensor& av = v(a);
  const Tensor& bv = v(b);
  if (av.ndim() != 2 || bv.ndim() != 2 || av.shape[1] != bv.shape[0])
    throw Error("matmul: shape mismatch");
  std::size_t n = av.shape[0], k = av.shape[1], m = bv.shape[1];
  Tensor out({n, m});
  gemm_nn(av.v.data(), bv.v.data(), out.v.data(), n, k, m);
  Id id = push(std::move(out), true, nullptr);
  nodes_[id].back = [a, b, n, k, m, id](Tape& t) {
    const Tensor& go = t.nodes_[id].grad;
    if (t.nodes_[a].needs_grad) {
      t.ensure_grad(a);
      gemm_nt(go.v.data(), t.nodes_[b].val.v.data(), t.nodes_[a].grad.v.data(), n, m, k, true);
    }
    if (t.nodes_[b].needs_grad) {
      t.ensure_grad(b);
      gemm_tn(t.nodes_[a].val.v.data(), go.v.data(), t.nodes_[b].grad.v.data(), n, k, m, true);
    }
  };
  return id;
}

Tape::Id Tape::mean_all(Id x) {
  const Tensor& xv = v(x);
  if (xv.numel() == 0) throw Error("mean_all: empty tensor");
  double s = 0.0;
  for (double a : xv.v) s += a;
  std::size_t n = xv.numel();
  Id id = push(Tensor::scalar(s / static_cast<double>(n)), nodes_[x].needs_grad, nullptr);
  nodes_[id].back = [x, n, id](Tape& t) {
    if (!t.nodes_[x].needs_grad) return;
    t.ensure_grad(x);
    double go = t.nodes_[id].grad.v[0] / static_cast<double>(n);
    for (double& d : t.nodes_[x].grad.v) d += go;
  };
  return id;
}

Tape::Id Tape::normalize_rows(Id x, double eps) {
  const Tensor& xv = v(x);
  if (xv.ndim() != 2) throw Error("normalize_rows: need 2D");
  std::size_t n = xv.shape[0], c = xv.shape[1];
  Tensor out({n, c});
  Tensor inv_std({n});
  Tensor mean({n});
  parallel_for_chunks(n, 128, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      const double* row = &xv.v[i * c];
      double m = 0.0;
      for (std::size_t j = 0; j < c; ++j) m += row[j];
      m /= static_cast<double>(c);
      double var = 0.0;
      for (std::size_t j = 0; j < c; ++j) var += (row[j] - m) * (row[j] - m);
      var /= static_cast<double>(c);
      double is = 1.0 / std::sqrt(var + eps);
      mean.v[i] = m;
      inv_std.v[i] = is;
      for (std::size_t j = 0; j < c; ++j) out.v[i * c + j] = (row[j] - m) * is;
    }
  });
  Id id = push(std::move(out), nodes_[x].needs_grad, nullptr);
  auto istd = std::make_shared<Tensor>(std::move(inv_std));
  nodes_[id].back = [x, n, c, istd, id](Tape& t) {
    if (!t.nodes_[x].needs_grad) return;
    t.ensure_grad(x);
    const Tensor& go = t.nodes_[id].grad;
    const Tensor& y = t.nodes_[id].val;  // normalized output
    Tensor& dx = t.nodes_[x].grad;
    parallel_for_chunks(n, 128, [&](std::size_t r0, std::size_t r1) {
      for (std::size_t i = r0; i < r1; ++i) {
        const double* gr = &go.v[i * c];
        const double* yr = &y.v[i * c];
        double gsum = 0.0, gysum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          gsum += gr[j];
          gysum += gr[j] * yr[j];
        }
        double is = istd->v[i];
        double inv_c = 1.0 / static_cast<double>(c);
        for (std::size_t j = 0; j < c; ++j)
          dx.v[i * c + j] += is * (gr[j] - gsum * inv_c - yr[j] * gysum * inv_c);
      }
    });
  };
  return id;
}

Tape::Id Tape::spade_modulate(Id h, Id gamma, Id beta) {
  check_same_shape(v(h), v(gamma), "spade_modulate");
  check_same_shape(v(h), v(beta), "spade_modulate");
  Id nrm = normalize_rows(h);
  return add(mul(gamma, nrm), beta);
}

Tape::Id Tape::segment_max(Id x, std::vector<std::pair<std::size_t, std::size_t>> segments) {
  const Tensor& xv = v(x);
  if (xv.ndim() != 2) throw Error("segment_max: need 2D");
  std::size_t c = xv.shape[1], s = segments.size();
  Tensor out({s, c});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(s * c, -1);
  for (std::size_t si = 0; si < s; ++si) {
    auto [b, e] = segments[si];
    if (b >= e) continue;  // empty -> zeros
    if (e > xv.shape[0]) throw Error("segment_max: segment out of range");
    for (std::size_t j = 0; j < c; ++j) {
      double best = xv.v[b * c + j];
      std::size_t bi = b;
      for (std::size_t i = b + 1; i < e; ++i)
        if (xv.v[i * c + j] > best) {
          best = xv.v[i * c + j];
          bi = i;
        }
      out.v[si * c + j] = best;
      (*argmax)[si * c + j] = static_cast<std::int64_t>(bi);
    }
  }
  Id id = push(std::move(out), nodes_[x].needs_grad, nullptr);
  nodes_[id].back = [x, s, c, argmax, id](Tape& t) {
    if (!t.nodes_[x].needs_grad) return;
    t.ensure_grad(x);
    const Tensor& go = t.nodes_[id].grad;
    Tensor& dx = t.nodes_[x].grad;
    for (std::size_t si = 0; si < s; ++si)
      for (std::size_t j = 0; j < c; ++j) {
        auto i = (*argmax)[si * c + j];
        if (i >= 0) dx.v[static_cast<std::size_t>(i) * c + j] += go.v[si * c + j];
      }
  };
  return id;
}

Tape::Id Tape::bce_with_logits(Id logits, Tensor targets) {
  const Tensor& lv = v(logits);
  if (lv.numel() != targets.numel()) throw Error("bce_with_logits: target size mismatch");
  std::size_t n = lv.numel();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double l = lv.v[i], t = targets.v[i];
    s += std::max(l, 0.0) - l * t + std::log1p(std::exp(-std::abs(l)));
  }
  Id id = push(Tensor::scalar(s / static_cast<double>(n)), nodes_[logits].needs_grad, nullptr);
  auto tgt = std::make_shared<Tensor>(std::move(targets));
  nodes_[id].back = [logits, n, tgt, id](Tape& t) {
    if (!t.nodes_[logits].needs_grad) return;
    t.ensure_grad(logits);
    double go = t.nodes_[id].grad.v[0] / static_cast<double>(n);
    const Tensor& lv2 = t.nodes_[logits].val;
    Tensor& dl = t.nodes_[logits].grad;
    for (std::size_t i = 0; i < n; ++i) {
      double sig = 1.0 / (1.0 + std::exp(-lv2.v[i]));
      dl.v[i] += go * (sig - tgt->v[i]);
    }
  };
  return id;
}

Tape::Id Tape::l1(Id pred, Tensor target) {
  const Tensor& pv = v(pred);
  if (pv.numel() != target.numel()) throw Error("l1: target size mismatch");
  std::size_t n = pv.numel();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(pv.v[i] - target.v[i]);
  Id id = push(Tensor::scalar(s / static_cast<double>(n)), nodes_[pred].needs_grad, nullptr);
  auto tgt = std::make_shared<Tensor>(std::move(target));
  nodes_[id].back = [pred, n, tgt, id](Tape& t) {
    if (!t.nodes_[pred].needs_grad) return;
    t.ensure_grad(pred);
    double go = t.nodes_[id].grad.v[0] / static_cast<double>(n);
    const Tensor& pv2 = t.nodes_[pred].val;
    Tensor& dp = t.nodes_[pred].grad;
    for (std::size_t i = 0; i < n; ++i) {
      double d = pv2.v[i] - tgt->v[i];
      dp.v[i] += go * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
    }
  };
  return id;
}

Tape::Id Tape::l1_rows(Id pred, Tensor target, std::vector<std::uint8_t> row_mask) {
  const Tensor& pv = v(pred);
  if (pv.ndim() != 2 || !pv.same_shape(target) || row_mask.size() != pv.shape[0])
    throw Error("l1_rows: shape mismatch");
  std::size_t n = pv.shape[0], c = pv.shape[1];
  std::size_t sel = 0;
  for (auto m : row_mask) sel += m ? 1 : 0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!row_mask[i]) continue;
    for (std::size_t j = 0; j < c; ++j) s += std::abs(pv.v[i * c + j] - target.v[i * c + j]);
  }
  std::size_t denom = std::max<std::size_t>(1, sel * c);
  Id id = push(Tensor::scalar(s / static_cast<double>(denom)),
               nodes_[pred].needs_grad, nullptr);
  auto tgt = std::make_shared<Tensor>(std::move(target));
  auto mask = std::make_shared<std::vector<std::uint8_t>>(std::move(row_mask));
  nodes_[id].back = [pred, n, c, denom, tgt, mask, id](Tape& t) {
    if (!t.nodes_[pred].needs_grad) return;
    t.ensure_grad(pred);
    double go = t.nodes_[id].grad.v[0] / static_cast<double>(denom);
    const Tensor& pv2 = t.nodes_[pred].val;
    Tensor& dp = t.nodes_[pred].grad;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(*mask)[i]) continue;
      for (std::size_t j = 0; j < c; ++j) {
        double d = pv2.v[i * c + j] - tgt->v[i * c + j];
        dp.v[i * c + j] += go * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
      }
    }
  };
  return id;
}

Tape::Id Tape::conv2d(Id x, Id w, Id b) {
  const Tensor& xv = v(x);
  const Tensor& wv = v(w);
  const Tensor& bv = v(b);
  if (xv.ndim() != 3 || wv.ndim() != 4 || wv.shape[1] != xv.shape[0] ||
      bv.numel() != wv.shape[0])
    throw Error("conv2d: shape mismatch (x[ci,h,w], w[co,ci,kh,kw], b[co])");
  std::size_t ci = xv.shape[0], h = xv.shape[1], wd = xv.shape[2];
  std::size_t co = wv.shape[0], kh = wv.shape[2], kw = wv.shape[3];
  long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  if (h < 2 || wd < 2) throw Error("conv2d: image too small for reflect padding");
  Tensor out({co, h, wd});
  parallel_for_chunks(co * h, 8, [&](std::size_t b0, std::size_t b1) {
    for (std::size_t oy = b0; oy < b1; ++oy) {
      std::size_t o = oy / h, y = oy % h;
      double* orow = &out.v[(o * h + y) * wd];
      for (std::size_t xx = 0; xx < wd; ++xx) orow[xx] = bv.v[o];
      for (std::size_t c = 0; c < ci; ++c) {
        const double* plane = &xv.v[c * h * wd];
        const double* ker = &wv.v[((o * ci + c) * kh) * kw];
        for (std::size_t ky = 0; ky < kh; ++ky) {
          std::size_t sy = reflect(static_cast<long>(y + ky) - ph, static_cast<long>(h));
          const double* in_row = &plane[sy * wd];
          for (std::size_t kx = 0; kx < kw; ++kx) {
            double kv = ker[ky * kw + kx];
            if (kv == 0.0) continue;
            long dx = static_cast<long>(kx) - pw;
            for (std::size_t xx = 0; xx < wd; ++xx)
              orow[xx] += kv * in_row[reflect(static_cast<long>(xx) + dx, static_cast<long>(wd))];
          }
        }
      }
    }
  });
  Id id = push(std::move(out), true, nullptr);
  nodes_[id].back = [x, w, b, ci, h, wd, co, kh, kw, ph, pw, id](Tape& t) {
    const Tensor& go = t.nodes_[id].grad;
    const Tensor& xv2 = t.nodes_[x].val;
    const Tensor& wv2 = t.nodes_[w].val;
    if (t.nodes_[b].needs_grad) {
      t.ensure_grad(b);
      Tensor& db = t.nodes_[b].grad;
      for (std::size_t o = 0; o < co; ++o) {
        double s = 0.0;
        const double* g = &go.v[o * h * wd];
        for (std::size_t i = 0; i < h * wd; ++i) s += g[i];
        db.v[o] += s;
      }
    }
    if (t.nodes_[w].needs_grad) {
      t.ensure_grad(w);
      Tensor& dw = t.nodes_[w].grad;
      parallel_for_chunks(co * ci, 4, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t oc = b0; oc < b1; ++oc) {
          std::size_t o = oc / ci, c = oc % ci;
          const double* plane = &xv2.v[c * h * wd];
          const double* g = &go.v[o * h * wd];
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
              double s = 0.0;
              long dy = static_cast<long>(ky) - ph, dx = static_cast<long>(kx) - pw;
              for (std::size_t y = 0; y < h; ++y) {
                std::size_t sy = reflect(static_cast<long>(y) + dy, static_cast<long>(h));
                const double* in_row = &plane[sy * wd];
                const double* grow = &g[y * wd];
                for (std::size_t xx = 0; xx < wd; ++xx)
                  s += grow[xx] * in_row[reflect(static_cast<long>(xx) + dx, static_cast<long>(wd))];
              }
              dw.v[((o * ci + c) * kh + ky) * kw + kx] += s;
            }
        }
      });
    }
    if (t.nodes_[x].needs_grad) {
      t.ensure_grad(x);
      Tensor& dx = t.nodes_[x].grad;
      // scatter with reflect padding folded back in; serial per input plane
      parallel_for_chunks(ci, 1, [&](std::size_t c0, std::size_t c1) {
        for (std::size_t c = c0; c < c1; ++c) {
          double* dplane = &dx.v[c * h * wd];
          for (std::size_t o = 0; o < co; ++o) {
            const double* g = &go.v[o * h * wd];
            const double* ker = &wv2.v[((o * ci + c) * kh) * kw];
            for (std::size_t y = 0; y < h; ++y)
              for (std::size_t ky = 0; ky < kh; ++ky) {
                std::size_t sy = reflect(static_cast<long>(y + ky) - ph, static_cast<long>(h));
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  double kv = ker[ky * kw + kx];
                  if (kv == 0.0) continue;
                  long dxo = static_cast<long>(kx) - pw;
                  for (std::size_t xx = 0; xx < wd; ++xx)
                    dplane[sy * wd + reflect(static_cast<long>(xx) + dxo, static_cast<long>(wd))] +=
                        kv * g[y * wd + xx];
                }
              }
          }
        }
      });
    }
  };
  return id;
}

Tape::Id Tape::maxpool2d_2x(Id x) {
  const Tensor& xv = v(x);
  if (xv.ndim() != 3 || xv.shape[1] % 2 || xv.shape[2] % 2)
    throw Error("maxpool2d_2x: need [c, even, even]");
  std::size_t c = xv.shape[0], h = xv.shape[1], w = xv.shape[2];
  std::size_t oh = h / 2, ow = w / 2;
  Tensor out({c, oh, ow});
  auto arg = std::make_shared<std::vector<std::uint32_t>>(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* plane = &xv.v[ch * h * w];
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        std::size_t best = (2 * y) * w + 2 * xx;
        double bv2 = plane[best];
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dxx = 0; dxx < 2; ++dxx) {
            std::size_t idx = (2 * y + dy) * w + 2 * xx + dxx;
            if (plane[idx] > bv2) {
              bv2 = plane[idx];
              best = idx;
            }
          }
        out.v[(ch * oh + y) * ow + xx] = bv2;
        (*arg)[(ch * oh + y) * ow + xx] = static_cast<std::uint32_t>(best);
      }
  }
  Id id = push(std::move(out), nodes_[x].needs_grad, nullptr);
  nodes_[id].back = [x, c, h, w, oh, ow, arg, id](Tape& t) {
    if (!t.nodes_[x].needs_grad) return;
    t.ensure_grad(x);
    const Tensor& go = t.nodes_[id].grad;
    Tensor& dx = t.nodes_[x].grad;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < oh * ow; ++i)
        dx.v[ch * h * w + (*arg)[ch * oh * ow + i]] += go.v[ch * oh * ow + i];
  };
  return id;
}

Tape::Id Tape::upsample2d_2x(Id x) {
  const Tensor& xv = v(x);
  if (xv.ndim() != 3) throw Error("upsample2d_2x: need CHW");
  std::size_t c = xv.shape[0], h = xv.shape[1], w = xv.shape[2];
  Tensor out({c, 2 * h, 2 * w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t xx = 0; xx < 2 * w; ++xx)
        out.v[(ch * 2 * h + y) * 2 * w + xx] = xv.v[(ch * h + y / 2) * w + xx / 2];
  Id id = push(std::move(out), nodes_[x].needs_grad, nullptr);
  nodes_[id].back = [x, c, h, w, id](Tape& t) {
    if (!t.nodes_[x].needs_grad) return;
    t.ensure_grad(x);
    const Tensor& go = t.nodes_[id].grad;
    Tensor& dx = t.nodes_[x].grad;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < 2 * h; ++y)
        for (std::size_t xx = 0; xx < 2 * w; ++xx)
          dx.v[(ch * h + y / 2) * w + xx / 2] += go.v[(ch * 2 * h + y) * 2 * w + xx];
  };
  return id;
}

Tape::Id Tape::avgpool2d(Id x, std::size_t sy, std::size_t sx) {
  const Tensor& xv = v(x);
  if (xv.ndim() != 3 || xv.shape[1] % sy || xv.shape[2] % sx)
    throw Error("avgpool2d: dims must divide by stride");
  std::size_t c = xv.shape[0], h = xv.shape[1], w = xv.shape[2];
  std::size_t oh = h / sy, ow = w / sx;
  double inv = 1.0 / static_cast<double>(sy * sx);
  Tensor out({c, oh, ow});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        double s = 0.0;
        for (std::size_t dy = 0; dy < sy; ++dy)
          for (std::size_t dxx = 0; dxx < sx; ++dxx)
            s += xv.v[(ch * h + y * sy + dy) * w + xx * sx + dxx];
        out.v[(ch * oh + y) * ow + xx] = s * inv;
      }
  Id id = push(std::move(out), nodes_[x].needs_grad, nullptr);
  nodes_[id].back = [x, c, h, w, oh, ow, sy, sx, inv, id](Tape& t) {
    if (!t.nodes_[x].needs_grad) return;
    t.ensure_grad(x);
    const Tensor& go = t.nodes_[id].grad;
    Tensor& dx = t.nodes_[x].grad;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double g = go.v[(ch * oh + y) * ow + xx] * inv;
          for (std::size_t dy = 0; dy < sy; ++dy)
            for (std::size_t dxx = 0; dxx < sx; ++dxx)
              dx.v[(ch * h + y * sy + dy) * w + xx * sx + dxx] += g;
        }
  };
  return id;
}

Tape::Id Tape::concat_chw(Id a, Id b) {
  const Tensor& av = v(a);
  const Tensor& bv = v(b);
  if (av.ndim() != 3 || bv.ndim() != 3 || av.shape[1] != bv.shape[1] ||
      av.shape[2] != bv.shape[2])
    throw Error("concat_chw: spatial dims mismatch");
  std::size_t ca = av.shape[0], cb = bv.shape[0], h = av.shape[1], w = av.shape[2];
  Tensor out({ca + cb, h, w});
  std::copy(av.v.begin(), av.v.end(), out.v.begin());
  std::copy(bv.v.begin(), bv.v.end(), out.v.begin() + static_cast<long>(ca * h * w));
  Id id = push(std::move(out), nodes_[a].needs_grad || nodes_[b].needs_grad, nullptr);
  nodes_[id].back = [a, b, ca, cb, h, w, id](Tape& t) {
    const Tensor& go = t.nodes_[id].grad;
    if (t.nodes_[a].needs_grad) {
      t.ensure_grad(a);
      Tensor& d = t.nodes_[a].grad;
      for (std::size_t i = 0; i < ca * h * w; ++i) d.v[i] += go.v[i];
    }
    if (t.nodes_[b].needs_grad) {
      t.ensure_grad(b);
      Tensor& d = t.nodes_[b].grad;
      for (std::size_t i = 0; i < cb * h * w; ++i) d.v[i] += go.v[ca * h * w + i];
    }
  };
  return id;
}

Tape::Id Tape::rows_to_chw(Id x, std::size_t h, std::size_t w) {
  const Tensor& xv = v(x);
  if (xv.ndim() != 2 || xv.shape[0] != h * w) throw Error("rows_to_chw: shape mismatch");
  std::size_t c = xv.shape[1];
  Tensor out({c, h, w});
  for (std::size_t p = 0; p < h * w; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) out.v[ch * h * w + p] = xv.v[p * c + ch];
  Id id = push(std::move(out), nodes_[x].needs_grad, nullptr);
  nodes_[id].back = [x, h, w, c, id](Tape& t) {
    if (!t.nodes_[x].needs_grad) return;
    t.ensure_grad(x);
    const Tensor& go = t.nodes_[id].grad;
    Tensor& dx = t.nodes_[x].grad;
    for (std::size_t p = 0; p < h * w; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) dx.v[p * c + ch] += go.v[ch * h * w + p];
  };
  return id;
}

Tape::Id Tape::chw_to_rows(Id x) {
  const Tensor& xv = v(x);
  if (xv.ndim() != 3) throw Error("chw_to_rows: need CHW");
  std::size_t c = xv.shape[0], h = xv.shape[1], w = xv.shape[2];
  Tensor out({h * w, c});
  for (std::size_t p = 0; p < h * w; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) out.v[p * c + ch] = xv.v[ch * h * w + p];
  Id id = push(std::move(out), nodes_[x].needs_grad, nullptr);
  nodes_[id].back = [x, c, h, w, id](Tape& t) {
    if (!t.nodes_[x].needs_grad) return;
    t.ensure_grad(x);
    const Tensor& go = t.nodes_[id].grad;
    Tensor& dx = t.nodes_[x].grad;
    for (std::size_t p = 0; p < h * w; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) dx.v[ch * h * w + p] += go.v[p * c + ch];
  };
  return id;
}

Tape::Id Tape::gather_pillars(Id x, std::vector<std::size_t> indices) {
  const Tensor& xv = v(x);
  if (xv.ndim() != 3) throw Error("gather_pillars: need CHW");
  std::size_t c = xv.shape[0], hw = xv.shape[1] * xv.shape[2];
  std::size_t n = indices.size();
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    if (indices[i] >= hw) throw Error("gather_pillars: index out of range");
    for (std::size_t ch = 0; ch < c; ++ch) out.v[i * c + ch] = xv.v[ch * hw + indices[i]];
  }
  Id id = push(std::move(out), nodes_[x].needs_grad, nullptr);
  auto idxs = std::make_shared<std::vector<std::size_t>>(std::move(indices));
  nodes_[id].back = [x, c, hw, idxs, id](Tape& t) {
    if (!t.nodes_[x].needs_grad) return;
    t.ensure_grad(x);
    const Tensor& go = t.nodes_[id].grad;
    Tensor& dx = t.nodes_[x].grad;
    std::size_t n = idxs->size();
    // parallel over channels; per-channel scatter is serial over rows
    parallel_for_chunks(c, 8, [&](std::size_t c0, std::size_t c1) {
      for (std::size_t ch = c0; ch < c1; ++ch)
        for (std::size_t i = 0; i < n; ++i)
          dx.v[ch * hw + (*idxs)[i]] += go.v[i * c + ch];
    });
  };
  return id;
}

void Tape::backward(Id out) {
  if (v(out).numel() != 1) throw Error("backward: output must be scalar");
  for (auto& n : nodes_)
    if (n.grad.numel()) std::fill(n.grad.v.begin(), n.grad.v.end(), 0.0);
  ensure_grad(out);
  nodes_[out].grad.v[0] = 1.0;
  for (Id id = out; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.back && n.grad.numel()) n.back(*this);
  }
}

GradMap Tape::param_grads() const {
  GradMap g;
  for (const auto& n : nodes_) {
    if (n.param_name.empty()) continue;
    if (n.grad.numel() == 0) {
      auto it = g.find(n.param_name);
      if (it == g.end()) g.emplace(n.param_name, Tensor(n.val.shape));
      continue;
    }
    auto it = g.find(n.param_name);
    if (it == g.end()) {
      g.emplace(n.param_name, n.grad);
    } else {
      for (std::size_t i = 0; i < n.grad.numel(); ++i) it->second.v[i] += n.grad.v[i];
    }
  }
  return g;
}

double grad_check(
    const std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)>& build,
    const std::vector<Tensor>& inputs, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw Error("grad_check: eps out of range");
  auto forward_only = [&](const std::vector<Tensor>& ins) {
    Tape tape;
    std::vector<Tape::Id> ids;
    ids.reserve(ins.size());
    for (const auto& t : ins) ids.push_back(tape.input(t));
    double val = tape.val(build(tape, ids)).v[0];
    if (!std::isfinite(val)) throw Error("grad_check: non-finite loss");
    return val;
  };

  Tape tape;
  std::vector<Tape::Id> ids;
  ids.reserve(inputs.size());
  for (const auto& t : inputs) ids.push_back(tape.input(t));
  Tape::Id loss = build(tape, ids);
  if (!std::isfinite(tape.val(loss).v[0])) throw Error("grad_check: non-finite loss");
  tape.backward(loss);

  double worst = 0.0;
  std::vector<Tensor> work = inputs;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    for (std::size_t i = 0; i < inputs[t].numel(); ++i) {
      double keep = work[t].v[i];
      work[t].v[i] = keep + eps;
      double fp = forward_only(work);
      work[t].v[i] = keep - eps;
      double fm = forward_only(work);
      work[t].v[i] = keep;
      double numeric = (fp - fm) / (2.0 * eps);
      double analytic = tape.grad(ids[t]).numel() ? tape.grad(ids[t]).v[i] : 0.0;
      if (!std::isfinite(numeric) || !std::isfinite(analytic))
        throw Error("grad_check: non-finite gradient");
      double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace voxforge::nd
