#include "hywu/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "hywu/kernels.hpp"

namespace hywu {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (shape_numel(shape) != data.size())
    throw DimensionError("tensor data length does not match shape " + shape_str(shape));
}

Tensor Tensor::zeros(Shape s) {
  auto n = shape_numel(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape s, double v) {
  auto n = shape_numel(s);
  return Tensor(std::move(s), std::vector<double>(n, v));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

int Tape::record(std::size_t out_size,
                 std::function<void(Tape&, const std::vector<double>&)> back) {
  nodes_.push_back(Node{out_size, std::move(back)});
  return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Tape::grad_buf(int node) {
  auto& g = grads_[static_cast<std::size_t>(node)];
  if (g.empty()) g.assign(nodes_[static_cast<std::size_t>(node)].size, 0.0);
  return g;
}

Tensor Tape::watch(Tensor t) {
  t.node = record(t.size(), nullptr);
  return t;
}

namespace {
void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape)
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                         " vs " + shape_str(b.shape));
}
}  // namespace

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out(a.shape, a.data);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
  if (recording(a) || recording(b)) {
    const int an = a.node, bn = b.node;
    out.node = record(out.size(), [an, bn](Tape& t, const std::vector<double>& g) {
      if (an >= 0) {
        auto& ga = t.grad_buf(an);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bn >= 0) {
        auto& gb = t.grad_buf(bn);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a.shape, a.data);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
  if (recording(a) || recording(b)) {
    const int an = a.node, bn = b.node;
    out.node = record(out.size(), [an, bn](Tape& t, const std::vector<double>& g) {
      if (an >= 0) {
        auto& ga = t.grad_buf(an);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bn >= 0) {
        auto& gb = t.grad_buf(bn);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a.shape, a.data);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];
  if (recording(a) || recording(b)) {
    const int an = a.node, bn = b.node;
    auto av = a.data, bv = b.data;
    out.node = record(out.size(),
                      [an, bn, av = std::move(av), bv = std::move(bv)](
                          Tape& t, const std::vector<double>& g) {
      if (an >= 0) {
        auto& ga = t.grad_buf(an);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (bn >= 0) {
        auto& gb = t.grad_buf(bn);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }
  return out;
}

Tensor Tape::scale(const Tensor& a, double s) {
  Tensor out(a.shape, a.data);
  for (auto& v : out.data) v *= s;
  if (recording(a)) {
    const int an = a.node;
    out.node = record(out.size(), [an, s](Tape& t, const std::vector<double>& g) {
      auto& ga = t.grad_buf(an);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    });
  }
  return out;
}

Tensor Tape::add_scalar(const Tensor& a, double s) {
  Tensor out(a.shape, a.data);
  for (auto& v : out.data) v += s;
  if (recording(a)) {
    const int an = a.node;
    out.node = record(out.size(), [an](Tape& t, const std::vector<double>& g) {
      auto& ga = t.grad_buf(an);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

Tensor Tape::gelu(const Tensor& a) {
  Tensor out(a.shape, a.data);
  for (auto& v : out.data) v = 0.5 * v * (1.0 + std::erf(v / M_SQRT2));
  if (recording(a)) {
    const int an = a.node;
    auto av = a.data;
    out.node = record(out.size(), [an, av = std::move(av)](Tape& t,
                                                           const std::vector<double>& g) {
      auto& ga = t.grad_buf(an);
      constexpr double inv_sqrt_2pi = 0.3989422804014326779;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = av[i];
        const double phi = 0.5 * (1.0 + std::erf(x / M_SQRT2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
        ga[i] += g[i] * (phi + x * pdf);
      }
    });
  }
  return out;
}

Tensor Tape::tanh(const Tensor& a) {
  Tensor out(a.shape, a.data);
  for (auto& v : out.data) v = std::tanh(v);
  if (recording(a)) {
    const int an = a.node;
    auto yv = out.data;
    out.node = record(out.size(), [an, yv = std::move(yv)](Tape& t,
                                                           const std::vector<double>& g) {
      auto& ga = t.grad_buf(an);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - yv[i] * yv[i]);
    });
  }
  return out;
}

Tensor Tape::softmax_rows(const Tensor& a) {
  if (a.rank() < 1 || a.shape.back() < 1)
    throw DimensionError("softmax_rows: last extent must be >= 1");
  const std::size_t n = a.shape.back();
  const std::size_t rows = a.size() / n;
  Tensor out(a.shape, a.data);
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data.data() + r * n;
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) { row[j] = std::exp(row[j] - mx); z += row[j]; }
    for (std::size_t j = 0; j < n; ++j) row[j] /= z;
  }
  if (recording(a)) {
    const int an = a.node;
    auto yv = out.data;
    out.node = record(out.size(), [an, yv = std::move(yv), n, rows](
                                      Tape& t, const std::vector<double>& g) {
      auto& ga = t.grad_buf(an);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = yv.data() + r * n;
        const double* u = g.data() + r * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += u[j] * y[j];
        for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += y[j] * (u[j] - dot);
      }
    });
  }
  return out;
}

Tensor Tape::reshape(const Tensor& a, Shape new_shape) {
  if (shape_numel(new_shape) != a.size())
    throw DimensionError("reshape: element count mismatch " + shape_str(a.shape) +
                         " -> " + shape_str(new_shape));
  Tensor out(std::move(new_shape), a.data);
  if (recording(a)) {
    const int an = a.node;
    out.node = record(out.size(), [an](Tape& t, const std::vector<double>& g) {
      auto& ga = t.grad_buf(an);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

Tensor Tape::permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  const std::size_t r = a.rank();
  if (axes.size() != r) throw DimensionError("permute: axis count mismatch");
  std::vector<bool> seen(r, false);
  for (auto ax : axes) {
    if (ax >= r || seen[ax]) throw DimensionError("permute: not a permutation");
    seen[ax] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = a.shape[axes[i]];

  std::vector<std::size_t> in_strides(r, 1), out_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * a.shape[i];
  for (std::size_t i = r; i-- > 1;) out_strides[i - 1] = out_strides[i] * out_shape[i];

  const std::size_t n = a.size();
  std::vector<std::size_t> map(n);  // out index -> in index
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t rem = o, in_idx = 0;
    for (std::size_t i = 0; i < r; ++i) {
      const std::size_t coord = rem / out_strides[i];
      rem %= out_strides[i];
      in_idx += coord * in_strides[axes[i]];
    }
    map[o] = in_idx;
  }
  Tensor out = Tensor::zeros(out_shape);
  for (std::size_t o = 0; o < n; ++o) out.data[o] = a.data[map[o]];
  if (recording(a)) {
    const int an = a.node;
    out.node = record(n, [an, map = std::move(map)](Tape& t, const std::vector<double>& g) {
      auto& ga = t.grad_buf(an);
      for (std::size_t o = 0; o < g.size(); ++o) ga[map[o]] += g[o];
    });
  }
  return out;
}

Tensor Tape::gather(const Tensor& a, const std::vector<std::size_t>& idx, Shape out_shape) {
  if (shape_numel(out_shape) != idx.size())
    throw DimensionError("gather: index count does not match output shape");
  Tensor out = Tensor::zeros(std::move(out_shape));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= a.size()) throw DimensionError("gather: index out of range");
    out.data[i] = a.data[idx[i]];
  }
  if (recording(a)) {
    const int an = a.node;
    auto map = idx;
    out.node = record(out.size(), [an, map = std::move(map)](Tape& t,
                                                             const std::vector<double>& g) {
      auto& ga = t.grad_buf(an);
      for (std::size_t i = 0; i < g.size(); ++i) ga[map[i]] += g[i];
    });
  }
  return out;
}

Tensor Tape::rope(const Tensor& a, const std::vector<double>& cos_v,
                  const std::vector<double>& sin_v) {
  if (a.size() % 2 != 0) throw DimensionError("rope: element count must be even");
  const std::size_t pairs = a.size() / 2;
  if (cos_v.size() != pairs || sin_v.size() != pairs)
    throw DimensionError("rope: cos/sin must have one entry per feature pair");
  Tensor out(a.shape, a.data);
  for (std::size_t p = 0; p < pairs; ++p) {
    const double x0 = a.data[2 * p], x1 = a.data[2 * p + 1];
    out.data[2 * p] = cos_v[p] * x0 - sin_v[p] * x1;
    out.data[2 * p + 1] = sin_v[p] * x0 + cos_v[p] * x1;
  }
  if (recording(a)) {
    const int an = a.node;
    auto c = cos_v, s = sin_v;
    out.node = record(out.size(), [an, c = std::move(c), s = std::move(s)](
                                      Tape& t, const std::vector<double>& g) {
      auto& ga = t.grad_buf(an);
      for (std::size_t p = 0; p < g.size() / 2; ++p) {
        const double g0 = g[2 * p], g1 = g[2 * p + 1];
        ga[2 * p] += c[p] * g0 + s[p] * g1;
        ga[2 * p + 1] += -s[p] * g0 + c[p] * g1;
      }
    });
  }
  return out;
}

Tensor Tape::rms_norm(const Tensor& a, const Tensor& gain, double eps) {
  if (a.rank() < 1) throw DimensionError("rms_norm: rank must be >= 1");
  const std::size_t n = a.shape.back();
  if (gain.shape != Shape{n}) throw DimensionError("rms_norm: gain width mismatch");
  const std::size_t rows = a.size() / n;
  Tensor out(a.shape, a.data);
  std::vector<double> inv_rms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.data.data() + r * n;
    double ms = 0.0;
    for (std::size_t j = 0; j < n; ++j) ms += x[j] * x[j];
    inv_rms[r] = 1.0 / std::sqrt(ms / static_cast<double>(n) + eps);
    for (std::size_t j = 0; j < n; ++j)
      out.data[r * n + j] = gain.data[j] * x[j] * inv_rms[r];
  }
  if (recording(a) || recording(gain)) {
    const int an = a.node, gn = gain.node;
    auto xv = a.data;
    auto gv = gain.data;
    out.node = record(out.size(),
                      [an, gn, xv = std::move(xv), gv = std::move(gv),
                       ir = std::move(inv_rms), n, rows](Tape& t,
                                                         const std::vector<double>& g) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* x = xv.data() + r * n;
        const double* u = g.data() + r * n;
        if (an >= 0) {
          auto& ga = t.grad_buf(an);
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += u[j] * gv[j] * x[j];
          const double c = dot * ir[r] * ir[r] * ir[r] / static_cast<double>(n);
          for (std::size_t j = 0; j < n; ++j)
            ga[r * n + j] += u[j] * gv[j] * ir[r] - x[j] * c;
        }
        if (gn >= 0) {
          auto& gg = t.grad_buf(gn);
          for (std::size_t j = 0; j < n; ++j) gg[j] += u[j] * x[j] * ir[r];
        }
      }
    });
  }
  return out;
}

Tensor Tape::sum(const Tensor& a) {
  double acc = 0.0;
  for (auto v : a.data) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (recording(a)) {
    const int an = a.node;
    const std::size_t n = a.size();
    out.node = record(1, [an, n](Tape& t, const std::vector<double>& g) {
      auto& ga = t.grad_buf(an);
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[0];
    });
  }
  return out;
}

Tensor Tape::add_rows(const Tensor& a, const Tensor& bias) {
  if (a.rank() < 1 || bias.shape != Shape{a.shape.back()})
    throw DimensionError("add_rows: bias width must match last axis");
  const std::size_t n = a.shape.back();
  const std::size_t rows = a.size() / n;
  Tensor out(a.shape, a.data);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out.data[r * n + j] += bias.data[j];
  if (recording(a) || recording(bias)) {
    const int an = a.node, bn = bias.node;
    out.node = record(out.size(), [an, bn, n, rows](Tape& t,
                                                    const std::vector<double>& g) {
      if (an >= 0) {
        auto& ga = t.grad_buf(an);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bn >= 0) {
        auto& gb = t.grad_buf(bn);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
      }
    });
  }
  return out;
}

Tensor Tape::concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  std::size_t total = 0;
  bool rec = false;
  for (const auto& p : parts) { total += p.size(); rec = rec || recording(p); }
  Tensor out = Tensor::zeros({total});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data.begin(), p.data.end(), out.data.begin() + off);
    off += p.size();
  }
  if (rec) {
    std::vector<std::pair<int, std::size_t>> srcs;  // node, size
    srcs.reserve(parts.size());
    for (const auto& p : parts) srcs.emplace_back(p.node, p.size());
    out.node = record(total, [srcs = std::move(srcs)](Tape& t,
                                                      const std::vector<double>& g) {
      std::size_t off = 0;
      for (const auto& [node, sz] : srcs) {
        if (node >= 0) {
          auto& gp = t.grad_buf(node);
          for (std::size_t i = 0; i < sz; ++i) gp[i] += g[off + i];
        }
        off += sz;
      }
    });
  }
  return out;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2)
    throw DimensionError("matmul: operands must have rank >= 2");
  const std::size_t m = a.shape[a.rank() - 2];
  const std::size_t k = a.shape[a.rank() - 1];
  const bool shared_b = (b.rank() == 2);
  if (!shared_b && b.rank() != a.rank())
    throw DimensionError("matmul: rank mismatch for batched operands");
  if (b.shape[b.rank() - 2] != k)
    throw DimensionError("matmul: inner extents differ (" + shape_str(a.shape) + " * " +
                         shape_str(b.shape) + ")");
  const std::size_t n = b.shape[b.rank() - 1];
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 2 < a.rank(); ++i) {
    batch *= a.shape[i];
    if (!shared_b && b.shape[i] != a.shape[i])
      throw DimensionError("matmul: batch extents differ");
  }
  Shape out_shape(a.shape.begin(), a.shape.end() - 1);
  out_shape.push_back(n);
  Tensor out = Tensor::zeros(out_shape);
  for (std::size_t t = 0; t < batch; ++t) {
    const double* ap = a.data.data() + t * m * k;
    const double* bp = b.data.data() + (shared_b ? 0 : t * k * n);
    kernels::matmul(ap, bp, out.data.data() + t * m * n, m, k, n);
  }
  if (recording(a) || recording(b)) {
    const int an = a.node, bn = b.node;
    auto av = a.data;
    auto bv = b.data;
    out.node = record(out.size(),
                      [an, bn, av = std::move(av), bv = std::move(bv), m, k, n, batch,
                       shared_b](Tape& t, const std::vector<double>& g) {
      if (an >= 0) {
        auto& ga = t.grad_buf(an);
        for (std::size_t tb = 0; tb < batch; ++tb)
          kernels::matmul_bt_acc(g.data() + tb * m * n,
                                 bv.data() + (shared_b ? 0 : tb * k * n),
                                 ga.data() + tb * m * k, m, k, n);
      }
      if (bn >= 0) {
        auto& gb = t.grad_buf(bn);
        for (std::size_t tb = 0; tb < batch; ++tb)
          kernels::matmul_at_acc(av.data() + tb * m * k, g.data() + tb * m * n,
                                 gb.data() + (shared_b ? 0 : tb * k * n), m, k, n);
      }
    });
  }
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) throw ContractError("backward: loss must be scalar");
  if (loss.node < 0) throw ContractError("backward: loss is not on this tape");
  if (backward_done_) throw ContractError("backward: tape already differentiated");
  backward_done_ = true;
  grads_.assign(nodes_.size(), {});
  grad_buf(loss.node)[0] = 1.0;
  for (int i = loss.node; i >= 0; --i) {
    auto& g = grads_[static_cast<std::size_t>(i)];
    if (g.empty()) continue;
    auto& back = nodes_[static_cast<std::size_t>(i)].back;
    if (back) back(*this, g);
  }
}

std::vector<double> Tape::grad(const Tensor& t) const {
  if (t.node < 0)
    throw ContractError("grad: tensor is not tracked (requires_grad is false)");
  if (!backward_done_) throw ContractError("grad: backward has not run");
  const auto& g = grads_[static_cast<std::size_t>(t.node)];
  if (g.empty()) return std::vector<double>(t.size(), 0.0);
  return g;
}

}  // namespace hywu
