#include "voxforge/planner.hpp"

#include <cmath>
#include <iostream>

#include "voxforge/io.hpp"
#include "voxforge/posenc.hpp"

namespace voxforge::planner {

void PlannerConfig::validate(int h, int w, int zdim) const {
  if (h % pool_xy || w % pool_xy)
    throw Error("planner: BEV dims must divide by " + std::to_string(pool_xy));
  if (h % 4 || w % 4) throw Error("planner: BEV dims must divide by 4 for the UNet");
  if (zdim % zr) throw Error("planner: grid height must divide by zr");
  if (point_dim % 4) throw Error("planner: point_dim must divide by 4 (posenc2d)");
}

PillarGrid pillarize(const SparseOccupancyGrid& state) {
  const VolumeSpec& v = state.volume();
  PillarGrid g;
  g.h = v.dim_i;
  g.w = v.dim_j;
  g.points.resize(static_cast<std::size_t>(g.h) * g.w);
  for (const auto& c : state.cells()) {
    g.points[g.pillar_index(c.i, c.j)].push_back(
        {(c.i + 0.5) / v.dim_i, (c.j + 0.5) / v.dim_j, (c.k + 0.5) / v.dim_k});
    ++g.total;
  }
  return g;
}

namespace {

std::string pname(const std::string& base) { return "planner." + base; }

void create_affine(nd::ParamStore& s, const std::string& base, std::size_t in,
                   std::size_t out, std::uint64_t seed) {
  s.create_fanin(pname(base + ".w"), {in, out}, in, seed);
  s.create(pname(base + ".b"), {out});
}

void create_conv(nd::ParamStore& s, const std::string& base, std::size_t ci,
                 std::size_t co, std::size_t k, std::uint64_t seed) {
  s.create_fanin(pname(base + ".w"), {co, ci, k, k}, ci * k * k, seed);
  s.create(pname(base + ".b"), {co});
}

struct Ctx {
  nd::Tape& t;
  const nd::ParamStore& s;

  nd::Tape::Id affine(const std::string& base, nd::Tape::Id x) {
    return t.affine(x, t.param(s, pname(base + ".w")), t.param(s, pname(base + ".b")));
  }
  nd::Tape::Id conv(const std::string& base, nd::Tape::Id x) {
    return t.conv2d(x, t.param(s, pname(base + ".w")), t.param(s, pname(base + ".b")));
  }
  nd::Tape::Id conv_block(const std::string& base, nd::Tape::Id x) {
    return t.relu(conv(base + ".c2", t.relu(conv(base + ".c1", x))));
  }
};

}  // namespace

void init_planner_params(nd::ParamStore& s, const PlannerConfig& cfg, std::uint64_t seed) {
  int pd = cfg.point_dim;
  create_affine(s, "point.in", 3, pd, seed);
  for (int r = 0; r < 3; ++r) {
    create_affine(s, "point.res" + std::to_string(r) + ".fc1", pd, pd, seed);
    create_affine(s, "point.res" + std::to_string(r) + ".fc2", pd, pd, seed);
  }
  create_affine(s, "point.out", pd, pd, seed);

  create_conv(s, "unet.enc0.c1", pd, cfg.unet_c0, 3, seed);
  create_conv(s, "unet.enc0.c2", cfg.unet_c0, cfg.unet_c0, 3, seed);
  create_conv(s, "unet.enc1.c1", cfg.unet_c0, cfg.unet_c1, 3, seed);
  create_conv(s, "unet.enc1.c2", cfg.unet_c1, cfg.unet_c1, 3, seed);
  create_conv(s, "unet.bott.c1", cfg.unet_c1, cfg.unet_c2, 3, seed);
  create_conv(s, "unet.bott.c2", cfg.unet_c2, cfg.unet_c2, 3, seed);
  create_conv(s, "unet.dec1.c1", cfg.unet_c2 + cfg.unet_c1, cfg.unet_c1, 3, seed);
  create_conv(s, "unet.dec1.c2", cfg.unet_c1, cfg.unet_c1, 3, seed);
  create_conv(s, "unet.dec0.c1", cfg.unet_c1 + cfg.unet_c0, cfg.unet_c0, 3, seed);
  create_conv(s, "unet.dec0.c2", cfg.unet_c0, cfg.unet_c0, 3, seed);
  create_conv(s, "unet.out", cfg.unet_c0, cfg.bev_dim, 1, seed);

  for (int l = 0; l < cfg.spade_layers; ++l) {
    std::string base = "head.spade" + std::to_string(l);
    create_conv(s, base + ".c1", cfg.bev_dim, cfg.head_hidden, 3, seed);
    create_conv(s, base + ".c2", cfg.head_hidden, 2 * cfg.spade_dim, 3, seed);
  }
  create_conv(s, "head.occ.c1", cfg.bev_dim, cfg.head_hidden, 3, seed);
  create_conv(s, "head.occ.c2", cfg.head_hidden, cfg.zr, 3, seed);
}

PlannerGraph planner_forward(nd::Tape& tape, const nd::ParamStore& store,
                             const PlannerConfig& cfg, const PillarGrid& pillars) {
  Ctx c{tape, store};
  int h = pillars.h, w = pillars.w;
  std::size_t npillars = static_cast<std::size_t>(h) * w;

  // local point net over every occupied cell, pillar-segmented
  nd::Tensor pts({std::max<std::size_t>(pillars.total, 1), 3});
  std::vector<std::pair<std::size_t, std::size_t>> segments(npillars);
  std::size_t row = 0;
  for (std::size_t p = 0; p < npillars; ++p) {
    segments[p].first = row;
    for (const auto& q : pillars.points[p]) {
      pts.v[row * 3 + 0] = q[0];
      pts.v[row * 3 + 1] = q[1];
      pts.v[row * 3 + 2] = q[2];
      ++row;
    }
    segments[p].second = row;
  }

  auto x = tape.constant(std::move(pts));
  x = tape.relu(c.affine("point.in", x));
  for (int r = 0; r < 3; ++r) {
    std::string base = "point.res" + std::to_string(r);
    auto f = c.affine(base + ".fc2", tape.relu(c.affine(base + ".fc1", x)));
    x = tape.add(x, f);
  }
  x = c.affine("point.out", x);
  auto pooled = tape.segment_max(x, segments);  // [npillars, point_dim]

  // add 2D positional encoding
  nd::Tensor pe({npillars, static_cast<std::size_t>(cfg.point_dim)});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      nd::posenc2d_into(i, j, cfg.point_dim, h, w,
                        &pe.v[(static_cast<std::size_t>(i) * w + j) * cfg.point_dim]);
  auto feat = tape.add(pooled, tape.constant(std::move(pe)));
  auto chw = tape.rows_to_chw(feat, h, w);

  // UNet: 2 down / 2 up with skips
  auto enc0 = c.conv_block("unet.enc0", chw);
  auto enc1 = c.conv_block("unet.enc1", tape.maxpool2d_2x(enc0));
  auto bott = c.conv_block("unet.bott", tape.maxpool2d_2x(enc1));
  auto dec1 = c.conv_block("unet.dec1", tape.concat_chw(tape.upsample2d_2x(bott), enc1));
  auto dec0 = c.conv_block("unet.dec0", tape.concat_chw(tape.upsample2d_2x(dec1), enc0));

  PlannerGraph g;
  g.bev = c.conv("unet.out", dec0);  // [bev_dim, h, w]

  for (int l = 0; l < cfg.spade_layers; ++l) {
    std::string base = "head.spade" + std::to_string(l);
    auto head = c.conv(base + ".c2", tape.relu(c.conv(base + ".c1", g.bev)));
    auto rows = tape.chw_to_rows(head);  // [h*w, 2*spade_dim]
    auto gamma = tape.rows_to_chw(tape.slice_cols(rows, 0, cfg.spade_dim), h, w);
    auto beta = tape.rows_to_chw(
        tape.slice_cols(rows, cfg.spade_dim, 2 * cfg.spade_dim), h, w);
    g.gamma.push_back(gamma);
    g.beta.push_back(beta);
  }
  auto occ = c.conv("head.occ.c2", tape.relu(c.conv("head.occ.c1", g.bev)));
  g.rough = tape.avgpool2d(occ, cfg.pool_xy, cfg.pool_xy);  // [zr, h_r, w_r]
  return g;
}

PlannerContext planner_context(const nd::ParamStore& store, const PlannerConfig& cfg,
                               const SparseOccupancyGrid& initial_state) {
  const VolumeSpec& v = initial_state.volume();
  cfg.validate(v.dim_i, v.dim_j, v.dim_k);
  nd::Tape tape;
  auto g = planner_forward(tape, store, cfg, pillarize(initial_state));
  PlannerContext ctx;
  ctx.bev = tape.val(g.bev);
  for (int l = 0; l < cfg.spade_layers; ++l) {
    ctx.gamma.push_back(tape.val(g.gamma[l]));
    ctx.beta.push_back(tape.val(g.beta[l]));
  }
  return ctx;
}

nd::Tensor pool_rough_gt(const SparseOccupancyGrid& gt, const PlannerConfig& cfg) {
  const VolumeSpec& v = gt.volume();
  cfg.validate(v.dim_i, v.dim_j, v.dim_k);
  int hr = v.dim_i / cfg.pool_xy, wr = v.dim_j / cfg.pool_xy;
  int zblock = v.dim_k / cfg.zr;
  nd::Tensor out({static_cast<std::size_t>(cfg.zr), static_cast<std::size_t>(hr),
                  static_cast<std::size_t>(wr)});
  for (const auto& c : gt.cells()) {
    int bi = c.i / cfg.pool_xy, bj = c.j / cfg.pool_xy, bk = c.k / zblock;
    out.v[(static_cast<std::size_t>(bk) * hr + bi) * wr + bj] = 1.0;
  }
  return out;
}

nd::Tape::Id planner_loss(nd::Tape& tape, nd::Tape::Id rough,
                          const nd::Tensor& pooled_gt, double beta_w) {
  return tape.scale(tape.bce_with_logits(rough, pooled_gt), beta_w);
}

std::vector<double> spade_modulate(const std::vector<double>& hidden,
                                   const std::vector<double>& gamma,
                                   const std::vector<double>& beta) {
  if (hidden.size() != gamma.size() || hidden.size() != beta.size())
    throw Error("spade_modulate: length mismatch");
  std::size_t n = hidden.size();
  double mean = 0.0;
  for (double x : hidden) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : hidden) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n);
  double inv = 1.0 / std::sqrt(var + 1e-5);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = gamma[i] * ((hidden[i] - mean) * inv) + beta[i];
  return out;
}

void bev_pca_dump(const nd::Tensor& bev, const std::string& png_path) {
  if (bev.ndim() != 3) throw Error("bev_pca_dump: need CHW");
  std::size_t c = bev.shape[0], h = bev.shape[1], w = bev.shape[2];
  std::size_t n = h * w;

  std::vector<double> mean(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < n; ++p) mean[ch] += bev.v[ch * n + p];
  for (double& m : mean) m /= static_cast<double>(n);

  std::vector<double> cov(c * c, 0.0);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t a = 0; a < c; ++a) {
      double va = bev.v[a * n + p] - mean[a];
      for (std::size_t b = a; b < c; ++b)
        cov[a * c + b] += va * (bev.v[b * n + p] - mean[b]);
    }
  for (std::size_t a = 0; a < c; ++a)
    for (std::size_t b = 0; b < a; ++b) cov[a * c + b] = cov[b * c + a];

  double trace = 0.0;
  for (std::size_t a = 0; a < c; ++a) trace += cov[a * c + a];
  bool degenerate = !(trace > 1e-18);
  if (degenerate)
    std::cerr << "bev_pca_dump: degenerate covariance, grayscale fallback\n";

  // top-3 principal axes via power iteration with deflation
  std::vector<std::vector<double>> axes;
  std::vector<double> work = cov;
  for (int comp = 0; comp < 3 && !degenerate; ++comp) {
    std::vector<double> v(c, 0.0);
    v[comp % c] = 1.0;
    for (int it = 0; it < 200; ++it) {
      std::vector<double> nv(c, 0.0);
      for (std::size_t a = 0; a < c; ++a)
        for (std::size_t b = 0; b < c; ++b) nv[a] += work[a * c + b] * v[b];
      double norm = 0.0;
      for (double x : nv) norm += x * x;
      norm = std::sqrt(norm);
      if (norm < 1e-30) break;
      for (std::size_t a = 0; a < c; ++a) v[a] = nv[a] / norm;
    }
    // sign rule: largest-|loading| coordinate positive
    std::size_t arg = 0;
    for (std::size_t a = 1; a < c; ++a)
      if (std::abs(v[a]) > std::abs(v[arg])) arg = a;
    if (v[arg] < 0.0)
      for (double& x : v) x = -x;
    axes.push_back(v);
    double lambda = 0.0;
    for (std::size_t a = 0; a < c; ++a)
      for (std::size_t b = 0; b < c; ++b) lambda += v[a] * work[a * c + b] * v[b];
    for (std::size_t a = 0; a < c; ++a)
      for (std::size_t b = 0; b < c; ++b) work[a * c + b] -= lambda * v[a] * v[b];
  }

  std::vector<std::uint8_t> rgb(n * 3, 0);
  for (int comp = 0; comp < 3; ++comp) {
    std::vector<double> proj(n, 0.0);
    if (degenerate) {
      for (std::size_t p = 0; p < n; ++p) proj[p] = bev.v[p];  // first channel
    } else {
      const auto& v = axes[comp];
      for (std::size_t p = 0; p < n; ++p) {
        double s = 0.0;
        for (std::size_t a = 0; a < c; ++a) s += (bev.v[a * n + p] - mean[a]) * v[a];
        proj[p] = s;
      }
    }
    double lo = proj[0], hi = proj[0];
    for (double x : proj) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    double span = hi - lo;
    for (std::size_t p = 0; p < n; ++p) {
      double u = span > 0.0 ? (proj[p] - lo) / span : 0.0;
      rgb[p * 3 + comp] = static_cast<std::uint8_t>(std::lround(u * 255.0));
    }
  }
  write_png(png_path, rgb, static_cast<int>(w), static_cast<int>(h));
}

}  // namespace voxforge::planner
