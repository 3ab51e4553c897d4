#include "voxforge/optim.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "voxforge/common.hpp"

namespace voxforge::nd {

Tensor& ParamStore::at(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw Error("ParamStore: unknown parameter " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw Error("ParamStore: unknown parameter " + name);
  return it->second;
}

Tensor& ParamStore::create(const std::string& name, std::vector<std::size_t> shape) {
  auto it = params.find(name);
  if (it != params.end()) return it->second;
  Tensor t(shape);
  adam_m.emplace(name, Tensor(shape));
  adam_v.emplace(name, Tensor(shape));
  return params.emplace(name, std::move(t)).first->second;
}

Tensor& ParamStore::create_uniform(const std::string& name,
                                   std::vector<std::size_t> shape, double lo,
                                   double hi, std::uint64_t seed) {
  bool fresh = params.find(name) == params.end();
  Tensor& t = create(name, std::move(shape));
  if (fresh) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char ch : name) h = (h ^ static_cast<std::uint64_t>(ch)) * 1099511628211ULL;
    for (std::size_t i = 0; i < t.numel(); ++i)
      t.v[i] = lo + (hi - lo) * rng::uniform(seed, h, i);
  }
  return t;
}

Tensor& ParamStore::create_fanin(const std::string& name,
                                 std::vector<std::size_t> shape,
                                 std::size_t fan_in, std::uint64_t seed) {
  double bound = std::sqrt(2.0 / std::max<std::size_t>(1, fan_in));
  return create_uniform(name, std::move(shape), -bound, bound, seed);
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [k, t] : params) n += t.numel();
  return n;
}

double global_grad_norm(const GradMap& grads) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double x : g.v) sq += x * x;
  return std::sqrt(sq);
}

void adam_step(ParamStore& store, const GradMap& grads, const AdamConfig& cfg) {
  for (const auto& [name, g] : grads) {
    if (!store.has(name)) throw Error("adam_step: gradient for unknown parameter " + name);
    if (!g.same_shape(store.at(name)))
      throw Error("adam_step: gradient shape mismatch for " + name);
    for (double x : g.v)
      if (!std::isfinite(x)) throw Error("adam_step: non-finite gradient in " + name);
  }
  double norm = global_grad_norm(grads);
  double scale = (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) ? cfg.clip_norm / norm : 1.0;

  store.step_count += 1;
  const double t = static_cast<double>(store.step_count);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);

  for (const auto& [name, g] : grads) {
    Tensor& p = store.params.at(name);
    Tensor& m = store.adam_m.at(name);
    Tensor& v = store.adam_v.at(name);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      double gi = g.v[i] * scale;
      m.v[i] = cfg.beta1 * m.v[i] + (1.0 - cfg.beta1) * gi;
      v.v[i] = cfg.beta2 * v.v[i] + (1.0 - cfg.beta2) * gi * gi;
      double mhat = m.v[i] / bc1;
      double vhat = v.v[i] / bc2;
      p.v[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

namespace {

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error("checkpoint: unexpected end of file");
  return v;
}

void put_tensor_block(std::ostream& os, const std::map<std::string, Tensor>& m) {
  put(os, static_cast<std::uint64_t>(m.size()));
  for (const auto& [name, t] : m) {  // std::map iterates name-sorted
    put(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(os, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.v.data()),
             static_cast<std::streamsize>(t.v.size() * sizeof(double)));
  }
}

std::map<std::string, Tensor> get_tensor_block(std::istream& is) {
  std::map<std::string, Tensor> m;
  auto n = get<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n; ++i) {
    auto len = get<std::uint32_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    auto nd = get<std::uint32_t>(is);
    std::vector<std::size_t> shape(nd);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(is));
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    if (!is) throw Error("checkpoint: truncated tensor payload");
    m.emplace(std::move(name), std::move(t));
  }
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open for writing: " + path);
  os.write("NDF1", 4);
  put(os, static_cast<std::uint32_t>(1));
  put_tensor_block(os, store.params);
  put_tensor_block(os, store.adam_m);
  put_tensor_block(os, store.adam_v);
  put(os, store.step_count);
  if (!os) throw Error("write failed: " + path);
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open for reading: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "NDF1", 4) != 0) throw Error("bad NDF1 magic: " + path);
  auto version = get<std::uint32_t>(is);
  if (version != 1) throw Error("unsupported checkpoint version");
  ParamStore s;
  s.params = get_tensor_block(is);
  s.adam_m = get_tensor_block(is);
  s.adam_v = get_tensor_block(is);
  s.step_count = get<std::uint64_t>(is);
  return s;
}

}  // namespace voxforge::nd
