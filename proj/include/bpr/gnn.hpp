#pragma once

// Graph convolutional network over the conflict graph that predicts per-link
// scheduling duty cycles.
//
//   X^0 = 1 (|E| x 1)
//   X^l = sigma_l(X^{l-1} Theta0^l + L X^{l-1} Theta1^l),  l = 1..L
//
// with L the normalized Laplacian, leaky ReLU on hidden layers and a row-wise
// softmax on the output layer. The duty cycle of link e is X^L(e, 0).
//
// Everything here is hand-written reverse mode: forward() keeps the per-layer
// inputs, aggregated inputs and pre-activations; backward() walks them back.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpr/common.hpp"
#include "bpr/topology.hpp"

namespace bpr {

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct GnnArchitecture {
  std::vector<int> widths{1, 32, 32, 32, 32, 2};  // g_0 .. g_L
  double leaky_slope = 0.01;

  int num_layers() const { return static_cast<int>(widths.size()) - 1; }

  void validate() const {
    if (widths.size() < 2) throw std::invalid_argument("gnn: need at least one layer");
    if (widths.front() != 1) throw std::invalid_argument("gnn: input width g_0 must be 1");
    if (widths.back() != 2) throw std::invalid_argument("gnn: output width g_L must be 2");
    for (int w : widths)
      if (w < 1) throw std::invalid_argument("gnn: layer widths must be positive");
  }

  friend bool operator==(const GnnArchitecture&, const GnnArchitecture&) = default;
};

struct GnnParams {
  GnnArchitecture arch;
  std::vector<Matrix> theta0;  // per layer, g_{l-1} x g_l
  std::vector<Matrix> theta1;

  // All parameter matrices in a fixed order: theta0[0], theta1[0], theta0[1], ...
  std::vector<Matrix*> tensors() {
    std::vector<Matrix*> out;
    for (std::size_t l = 0; l < theta0.size(); ++l) {
      out.push_back(&theta0[l]);
      out.push_back(&theta1[l]);
    }
    return out;
  }
  std::vector<const Matrix*> tensors() const {
    std::vector<const Matrix*> out;
    for (std::size_t l = 0; l < theta0.size(); ++l) {
      out.push_back(&theta0[l]);
      out.push_back(&theta1[l]);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* m : tensors()) n += m->data.size();
    return n;
  }

  friend bool operator==(const GnnParams&, const GnnParams&) = default;

  static GnnParams zeros(const GnnArchitecture& arch) {
    arch.validate();
    GnnParams p;
    p.arch = arch;
    for (int l = 1; l <= arch.num_layers(); ++l) {
      p.theta0.emplace_back(arch.widths[l - 1], arch.widths[l]);
      p.theta1.emplace_back(arch.widths[l - 1], arch.widths[l]);
    }
    return p;
  }

  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)) per entry.
  static GnnParams init(const GnnArchitecture& arch, std::uint64_t seed) {
    GnnParams p = zeros(arch);
    Rng rng(seed);
    for (auto* m : p.tensors()) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(m->rows));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& v : m->data) v = u(rng);
    }
    return p;
  }
};

namespace gnn_detail {

// L X restricted to row e. Diagonal term first, then neighbours in
// ascending id order; isolated rows give zero.
inline void aggregate_row(const NormalizedLaplacian& lap, const Matrix& x, LinkId e, std::span<double> out) {
  const double d = lap.diagonal(e);
  const auto xe = x.row(e);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = d * xe[k];
  for (const auto& en : lap.off_diagonal(e)) {
    const auto xu = x.row(en.col);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += en.value * xu[k];
  }
}

// z = x Theta0 + a Theta1 for a single row.
inline void linear_row(std::span<const double> x, std::span<const double> a, const Matrix& t0,
                       const Matrix& t1, std::span<double> z) {
  for (std::size_t k = 0; k < z.size(); ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += x[j] * t0(j, k);
    for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * t1(j, k);
    z[k] = s;
  }
}

inline void leaky_relu_row(std::span<const double> z, double slope, std::span<double> out) {
  for (std::size_t k = 0; k < z.size(); ++k) out[k] = z[k] > 0 ? z[k] : slope * z[k];
}

inline void softmax_row(std::span<const double> z, std::span<double> out) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    out[k] = std::exp(z[k] - m);
    s += out[k];
  }
  for (auto& v : out) v /= s;
}

inline void activate_row(const GnnArchitecture& arch, int layer, std::span<const double> z,
                         std::span<double> out) {
  if (layer == arch.num_layers())
    softmax_row(z, out);
  else
    leaky_relu_row(z, arch.leaky_slope, out);
}

inline Matrix apply_laplacian(const NormalizedLaplacian& lap, const Matrix& x) {
  Matrix out(x.rows, x.cols);
  for (std::size_t e = 0; e < x.rows; ++e) aggregate_row(lap, x, static_cast<LinkId>(e), out.row(e));
  return out;
}

}  // namespace gnn_detail

struct ForwardCache {
  std::vector<Matrix> inputs;      // X^{l-1}
  std::vector<Matrix> aggregated;  // L X^{l-1}
  std::vector<Matrix> pre;         // pre-activation Z^l
};

struct ForwardResult {
  Matrix output;              // X^L, |E| x 2, rows sum to 1
  std::vector<double> duty;   // column 0 of X^L
  ForwardCache cache;
};

inline void check_params(const GnnParams& p) {
  p.arch.validate();
  const int L = p.arch.num_layers();
  if (static_cast<int>(p.theta0.size()) != L || static_cast<int>(p.theta1.size()) != L)
    throw std::invalid_argument("gnn: parameter count does not match architecture");
  for (int l = 0; l < L; ++l) {
    const auto r = static_cast<std::size_t>(p.arch.widths[l]);
    const auto c = static_cast<std::size_t>(p.arch.widths[l + 1]);
    for (const Matrix* m : {&p.theta0[l], &p.theta1[l]})
      if (m->rows != r || m->cols != c || m->data.size() != r * c)
        throw std::invalid_argument("gnn: parameter shape mismatch at layer " + std::to_string(l + 1));
  }
}

inline ForwardResult forward(const GnnParams& params, const NormalizedLaplacian& lap, std::size_t num_links) {
  check_params(params);
  if (lap.size() != num_links) throw std::invalid_argument("gnn: Laplacian size does not match link count");
  ForwardResult res;
  Matrix x(num_links, 1, 1.0);
  const int L = params.arch.num_layers();
  for (int l = 1; l <= L; ++l) {
    const Matrix& t0 = params.theta0[l - 1];
    const Matrix& t1 = params.theta1[l - 1];
    Matrix agg = gnn_detail::apply_laplacian(lap, x);
    Matrix z(num_links, t0.cols);
    Matrix y(num_links, t0.cols);
    for (std::size_t e = 0; e < num_links; ++e) {
      gnn_detail::linear_row(x.row(e), agg.row(e), t0, t1, z.row(e));
      gnn_detail::activate_row(params.arch, l, z.row(e), y.row(e));
    }
    res.cache.inputs.push_back(std::move(x));
    res.cache.aggregated.push_back(std::move(agg));
    res.cache.pre.push_back(std::move(z));
    x = std::move(y);
  }
  res.duty.resize(num_links);
  for (std::size_t e = 0; e < num_links; ++e) res.duty[e] = x(e, 0);
  res.output = std::move(x);
  return res;
}

inline ForwardResult forward(const GnnParams& params, const ConflictGraph& cg) {
  return forward(params, cg.laplacian(), static_cast<std::size_t>(cg.num_vertices()));
}

struct NeighborFeature {
  std::span<const double> features;  // X_u^{l-1}
  std::size_t degree;                // d(u)
};

// One layer evaluated at a single link from its own features, its degree
// and its neighbours' features (in ascending neighbour id order):
//   X_e^l = sigma(X_e Theta0 + [X_e - sum_u X_u / sqrt(d(e) d(u))] Theta1)
// An isolated link (degree 0) contributes no Theta1 term.
inline std::vector<double> forward_local(const GnnParams& params, int layer, std::span<const double> self,
                                         std::size_t degree, std::span<const NeighborFeature> neighbors) {
  if (layer < 1 || layer > params.arch.num_layers()) throw std::invalid_argument("gnn: bad layer index");
  const Matrix& t0 = params.theta0[layer - 1];
  const Matrix& t1 = params.theta1[layer - 1];
  if (self.size() != t0.rows) throw std::invalid_argument("gnn: feature width mismatch");
  std::vector<double> agg(self.size(), 0.0);
  if (degree > 0) {
    for (std::size_t k = 0; k < agg.size(); ++k) agg[k] = 1.0 * self[k];
    for (const auto& nb : neighbors) {
      if (nb.features.size() != self.size()) throw std::invalid_argument("gnn: neighbour width mismatch");
      const double w = laplacian_coupling(degree, nb.degree);
      for (std::size_t k = 0; k < agg.size(); ++k) agg[k] += -w * nb.features[k];
    }
  }
  std::vector<double> z(t0.cols), out(t0.cols);
  gnn_detail::linear_row(self, agg, t0, t1, z);
  gnn_detail::activate_row(params.arch, layer, z, out);
  return out;
}

// Training target [freq, 1 - freq] per link.
inline Matrix duty_target(std::span<const double> frequency) {
  Matrix t(frequency.size(), 2);
  for (std::size_t e = 0; e < frequency.size(); ++e) {
    t(e, 0) = frequency[e];
    t(e, 1) = 1.0 - frequency[e];
  }
  return t;
}

// |E|^{-1} ||X^L - [freq, 1 - freq]||_F^2
inline double loss(const Matrix& output, std::span<const double> frequency) {
  if (output.rows != frequency.size() || output.cols != 2)
    throw std::invalid_argument("gnn loss: shape mismatch");
  if (output.rows == 0) return 0.0;
  const Matrix target = duty_target(frequency);
  double s = 0.0;
  for (std::size_t i = 0; i < output.data.size(); ++i) {
    const double r = output.data[i] - target.data[i];
    s += r * r;
  }
  return s / static_cast<double>(output.rows);
}

// d loss / d X^L
inline Matrix loss_gradient(const Matrix& output, std::span<const double> frequency) {
  const Matrix target = duty_target(frequency);
  Matrix g(output.rows, output.cols);
  const double scale = output.rows == 0 ? 0.0 : 2.0 / static_cast<double>(output.rows);
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = scale * (output.data[i] - target.data[i]);
  return g;
}

// Gradients w.r.t. every Theta given d loss / d X^L. Returned with the same
// shapes as the parameters.
inline GnnParams backward(const GnnParams& params, const NormalizedLaplacian& lap, const ForwardResult& fwd,
                          const Matrix& grad_output) {
  const int L = params.arch.num_layers();
  GnnParams grads = GnnParams::zeros(params.arch);
  const std::size_t n = fwd.output.rows;

  // Softmax: dZ = Y * (dY - <dY, Y>) row-wise.
  Matrix dz(n, fwd.output.cols);
  for (std::size_t e = 0; e < n; ++e) {
    double dot = 0.0;
    for (std::size_t k = 0; k < dz.cols; ++k) dot += grad_output(e, k) * fwd.output(e, k);
    for (std::size_t k = 0; k < dz.cols; ++k) dz(e, k) = fwd.output(e, k) * (grad_output(e, k) - dot);
  }

  for (int l = L; l >= 1; --l) {
    const Matrix& x = fwd.cache.inputs[l - 1];
    const Matrix& a = fwd.cache.aggregated[l - 1];
    Matrix& g0 = grads.theta0[l - 1];
    Matrix& g1 = grads.theta1[l - 1];
    for (std::size_t e = 0; e < n; ++e)
      for (std::size_t j = 0; j < x.cols; ++j)
        for (std::size_t k = 0; k < dz.cols; ++k) {
          g0(j, k) += x(e, j) * dz(e, k);
          g1(j, k) += a(e, j) * dz(e, k);
        }
    if (l == 1) break;

    // dX = dZ Theta0^T + L (dZ Theta1^T); L is symmetric.
    const Matrix& t0 = params.theta0[l - 1];
    const Matrix& t1 = params.theta1[l - 1];
    Matrix dx(n, x.cols), dagg(n, x.cols);
    for (std::size_t e = 0; e < n; ++e)
      for (std::size_t j = 0; j < x.cols; ++j) {
        double s0 = 0.0, s1 = 0.0;
        for (std::size_t k = 0; k < dz.cols; ++k) {
          s0 += dz(e, k) * t0(j, k);
          s1 += dz(e, k) * t1(j, k);
        }
        dx(e, j) = s0;
        dagg(e, j) = s1;
      }
    const Matrix back = gnn_detail::apply_laplacian(lap, dagg);
    const Matrix& zprev = fwd.cache.pre[l - 2];
    Matrix next(n, x.cols);
    for (std::size_t i = 0; i < next.data.size(); ++i) {
      const double g = dx.data[i] + back.data[i];
      next.data[i] = zprev.data[i] > 0 ? g : params.arch.leaky_slope * g;
    }
    dz = std::move(next);
  }
  return grads;
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamOptimizer {
 public:
  AdamOptimizer(const GnnParams& shape, AdamConfig cfg = {})
      : cfg_(cfg), m_(GnnParams::zeros(shape.arch)), v_(GnnParams::zeros(shape.arch)) {}

  void step(GnnParams& params, const GnnParams& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto p = params.tensors();
    auto g = grads.tensors();
    auto m = m_.tensors();
    auto v = v_.tensors();
    if (p.size() != g.size()) throw std::invalid_argument("adam: gradient structure mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i]->data.size() != g[i]->data.size()) throw std::invalid_argument("adam: gradient shape mismatch");
      for (std::size_t k = 0; k < p[i]->data.size(); ++k) {
        const double gk = g[i]->data[k];
        double& mk = m[i]->data[k];
        double& vk = v[i]->data[k];
        mk = cfg_.beta1 * mk + (1.0 - cfg_.beta1) * gk;
        vk = cfg_.beta2 * vk + (1.0 - cfg_.beta2) * gk * gk;
        const double mhat = mk / c1;
        const double vhat = vk / c2;
        p[i]->data[k] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      }
    }
  }

  long long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  GnnParams m_;
  GnnParams v_;
  long long t_ = 0;
};

struct ReplayTuple {
  NormalizedLaplacian laplacian;
  std::vector<double> frequency;  // E_t[s] per link
};

// Bounded experience memory; the oldest tuple is evicted when full.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be > 0");
  }

  void push(ReplayTuple t) {
    if (t.laplacian.size() != t.frequency.size())
      throw std::invalid_argument("replay tuple: Laplacian and target sizes differ");
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[next_] = std::move(t);
      next_ = (next_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const ReplayTuple& operator[](std::size_t i) const { return items_.at(i); }

  // Indices of min(batch, size) distinct tuples.
  std::vector<std::size_t> sample(std::size_t batch, Rng& rng) const {
    std::vector<std::size_t> idx(items_.size());
    std::iota(idx.begin(), idx.end(), 0);
    const std::size_t k = std::min(batch, idx.size());
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<ReplayTuple> items_;
};

struct BatchResult {
  double loss = 0.0;
  GnnParams grads;
};

// Mean loss and gradient over a set of replay tuples.
inline BatchResult batch_loss_and_gradient(const GnnParams& params, const ReplayBuffer& buffer,
                                           std::span<const std::size_t> indices) {
  BatchResult res{0.0, GnnParams::zeros(params.arch)};
  if (indices.empty()) return res;
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (std::size_t i : indices) {
    const auto& tup = buffer[i];
    const auto fwd = forward(params, tup.laplacian, tup.frequency.size());
    res.loss += inv * loss(fwd.output, tup.frequency);
    const auto g = backward(params, tup.laplacian, fwd, loss_gradient(fwd.output, tup.frequency));
    auto dst = res.grads.tensors();
    auto src = g.tensors();
    for (std::size_t t = 0; t < dst.size(); ++t)
      for (std::size_t k = 0; k < dst[t]->data.size(); ++k) dst[t]->data[k] += inv * src[t]->data[k];
  }
  return res;
}

// Checkpoint layout (little-endian):
//   char[8]  magic "BPRGNN\0\1"
//   u32      format version (1)
//   u32      L
//   u32[L+1] widths g_0..g_L
//   f64      leaky slope
//   f64[]    for l = 1..L: Theta0^l then Theta1^l, row-major
inline constexpr char kCheckpointMagic[8] = {'B', 'P', 'R', 'G', 'N', 'N', '\0', '\1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace gnn_detail {
static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("checkpoint: truncated file");
  return v;
}
}  // namespace gnn_detail

inline void save_checkpoint(std::ostream& os, const GnnParams& p) {
  check_params(p);
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  gnn_detail::put<std::uint32_t>(os, kCheckpointVersion);
  gnn_detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.arch.num_layers()));
  for (int w : p.arch.widths) gnn_detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(w));
  gnn_detail::put<double>(os, p.arch.leaky_slope);
  for (const auto* m : p.tensors()) os.write(reinterpret_cast<const char*>(m->data.data()),
                                            static_cast<std::streamsize>(m->data.size() * sizeof(double)));
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

inline GnnParams load_checkpoint(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  if (gnn_detail::get<std::uint32_t>(is) != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version");
  const auto L = gnn_detail::get<std::uint32_t>(is);
  if (L == 0 || L > 1024) throw std::runtime_error("checkpoint: bad layer count");
  GnnArchitecture arch;
  arch.widths.clear();
  for (std::uint32_t i = 0; i <= L; ++i) {
    const auto w = gnn_detail::get<std::uint32_t>(is);
    if (w == 0 || w > 1u << 16) throw std::runtime_error("checkpoint: bad layer width");
    arch.widths.push_back(static_cast<int>(w));
  }
  arch.leaky_slope = gnn_detail::get<double>(is);
  GnnParams p = GnnParams::zeros(arch);
  for (auto* m : p.tensors())
    if (!is.read(reinterpret_cast<char*>(m->data.data()),
                 static_cast<std::streamsize>(m->data.size() * sizeof(double))))
      throw std::runtime_error("checkpoint: truncated parameters");
  return p;
}

}  // namespace bpr
