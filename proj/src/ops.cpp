#include "ctpnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "ctpnet/errors.hpp"

namespace ctpnet {

namespace {

using detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// Wraps an op result; records history only when some input needs a gradient.
Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool needs = false;
  if (grad_mode_enabled()) {
    for (const Tensor* t : inputs) needs = needs || t->requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const Tensor* t : inputs) node->parents.push_back(t->node());
    node->backward = std::move(backward);
  }
  return Tensor::from_node(std::move(node));
}

Tensor make_result_n(Shape shape, std::vector<double> data, std::span<const Tensor> inputs,
                     std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool needs = false;
  if (grad_mode_enabled()) {
    for (const Tensor& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const Tensor& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor::from_node(std::move(node));
}

std::size_t norm_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw RankTooLow("axis " + std::to_string(axis) + " invalid for rank " + std::to_string(r));
  return static_cast<std::size_t>(a);
}

// Index into b for every flat index of a, or empty when shapes are equal.
std::vector<std::size_t> broadcast_index(const Shape& a, const Shape& b) {
  if (a == b) return {};
  if (b.size() > a.size()) {
    throw ShapeMismatch("cannot broadcast " + shape_str(b) + " into " + shape_str(a));
  }
  const std::size_t off = a.size() - b.size();
  std::vector<std::size_t> bstride(a.size(), 0);
  std::size_t s = 1;
  for (std::size_t i = b.size(); i-- > 0;) {
    if (b[i] != a[off + i] && b[i] != 1) {
      throw ShapeMismatch("cannot broadcast " + shape_str(b) + " into " + shape_str(a));
    }
    bstride[off + i] = b[i] == 1 ? 0 : s;
    s *= b[i];
  }
  const std::size_t n = shape_numel(a);
  std::vector<std::size_t> out(n);
  std::vector<std::size_t> idx(a.size(), 0);
  std::size_t bi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = bi;
    for (std::size_t d = a.size(); d-- > 0;) {
      ++idx[d];
      bi += bstride[d];
      if (idx[d] < a[d]) break;
      bi -= bstride[d] * idx[d];
      idx[d] = 0;
    }
  }
  return out;
}

enum class BinOp { kAdd, kSub, kMul };

// How b's flat index follows a's: equal shapes, b tiled over a's trailing
// axes (i % nb), b spread over a's trailing unit axes (i / inner), or an
// explicit index table.
struct BroadcastPlan {
  enum class Kind { kSame, kTile, kSpread, kTable } kind = Kind::kSame;
  std::size_t nb = 0;
  std::size_t inner = 1;
  std::vector<std::size_t> table;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan p;
  if (a == b) return p;
  std::size_t lead = 0;
  while (lead < b.size() && b[lead] == 1) ++lead;
  const Shape core(b.begin() + static_cast<std::ptrdiff_t>(lead), b.end());
  if (core.size() <= a.size() && std::equal(core.begin(), core.end(), a.end() - static_cast<std::ptrdiff_t>(core.size()))) {
    p.kind = BroadcastPlan::Kind::kTile;
    p.nb = shape_numel(core);
    return p;
  }
  if (b.size() == a.size()) {
    std::size_t k = b.size();
    while (k > 0 && b[k - 1] == 1) --k;
    if (k < b.size() && std::equal(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(k), a.begin())) {
      p.kind = BroadcastPlan::Kind::kSpread;
      p.nb = shape_numel(b);
      for (std::size_t i = k; i < a.size(); ++i) p.inner *= a[i];
      return p;
    }
  }
  p.kind = BroadcastPlan::Kind::kTable;
  p.table = broadcast_index(a, b);
  return p;
}

// Calls f(i, j) for every flat index i of a with j the matching index of b.
template <typename F>
void for_each_pair(const BroadcastPlan& p, std::size_t n, F f) {
  switch (p.kind) {
    case BroadcastPlan::Kind::kSame:
      for (std::size_t i = 0; i < n; ++i) f(i, i);
      break;
    case BroadcastPlan::Kind::kTile:
      for (std::size_t o = 0; o < n; o += p.nb)
        for (std::size_t j = 0; j < p.nb; ++j) f(o + j, j);
      break;
    case BroadcastPlan::Kind::kSpread:
      for (std::size_t r = 0; r < p.nb; ++r)
        for (std::size_t j = 0; j < p.inner; ++j) f(r * p.inner + j, r);
      break;
    case BroadcastPlan::Kind::kTable:
      for (std::size_t i = 0; i < n; ++i) f(i, p.table[i]);
      break;
  }
}

Tensor binary(const Tensor& a, const Tensor& b, BinOp op) {
  auto plan = plan_broadcast(a.shape(), b.shape());
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  double* o = out.data();
  switch (op) {
    case BinOp::kAdd:
      for_each_pair(plan, n, [&](std::size_t i, std::size_t j) { o[i] = ad[i] + bd[j]; });
      break;
    case BinOp::kSub:
      for_each_pair(plan, n, [&](std::size_t i, std::size_t j) { o[i] = ad[i] - bd[j]; });
      break;
    case BinOp::kMul:
      for_each_pair(plan, n, [&](std::size_t i, std::size_t j) { o[i] = ad[i] * bd[j]; });
      break;
  }
  return make_result(a.shape(), std::move(out), {&a, &b}, [op, plan = std::move(plan)](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* g = self.grad.data();
    const std::size_t n = self.grad.size();
    if (pa.requires_grad) {
      double* ga = pa.ensure_grad().data();
      if (op == BinOp::kMul) {
        const double* bd = pb.data.data();
        for_each_pair(plan, n, [&](std::size_t i, std::size_t j) { ga[i] += g[i] * bd[j]; });
      } else {
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
    }
    if (pb.requires_grad) {
      double* gb = pb.ensure_grad().data();
      const double* ad = pa.data.data();
      switch (op) {
        case BinOp::kAdd:
          for_each_pair(plan, n, [&](std::size_t i, std::size_t j) { gb[j] += g[i]; });
          break;
        case BinOp::kSub:
          for_each_pair(plan, n, [&](std::size_t i, std::size_t j) { gb[j] -= g[i]; });
          break;
        case BinOp::kMul:
          for_each_pair(plan, n, [&](std::size_t i, std::size_t j) { gb[j] += g[i] * ad[i]; });
          break;
      }
    }
  });
}

// out[i] = x[src[i]]; backward scatter-adds.
Tensor gather(const Tensor& x, Shape out_shape, std::vector<std::size_t> src) {
  const auto xd = x.data();
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = xd[src[i]];
  return make_result(std::move(out_shape), std::move(out), {&x}, [src = std::move(src)](Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += self.grad[i];
  });
}

template <typename F, typename DF>
Tensor unary(const Tensor& x, F f, DF df) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  return make_result(x.shape(), std::move(out), {&x}, [df](Node& self) {
    Node& px = *self.parents[0];
    auto& gx = px.ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * df(px.data[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kAdd); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kSub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kMul); }

Tensor add_scalar(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v * s; }, [s](double) { return s; });
}

Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

Tensor abs(const Tensor& x) {
  return unary(
      x, [](double v) { return std::fabs(v); },
      [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v) { return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v); });
}

Tensor sum(const Tensor& x) {
  const auto xd = x.data();
  const double s = std::accumulate(xd.begin(), xd.end(), 0.0);
  return make_result(Shape{}, {s}, {&x}, [](Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    const double g = self.grad[0];
    for (auto& v : gx) v += g;
  });
}

Tensor mean(const Tensor& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) throw RankTooLow("matmul needs rank >= 2 operands");
  const std::size_t m = a.dim(-2), k = a.dim(-1), kb = b.dim(-2), n = b.dim(-1);
  if (k != kb) {
    throw ShapeMismatch("matmul inner dims differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const Shape alead(a.shape().begin(), a.shape().end() - 2);
  const Shape blead(b.shape().begin(), b.shape().end() - 2);

  // Broadcast the leading axes.
  const std::size_t lr = std::max(alead.size(), blead.size());
  Shape lead(lr, 1);
  for (std::size_t i = 0; i < lr; ++i) {
    const std::size_t ea = i + alead.size() >= lr ? alead[i + alead.size() - lr] : 1;
    const std::size_t eb = i + blead.size() >= lr ? blead[i + blead.size() - lr] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeMismatch("matmul batch dims not broadcastable: " + shape_str(a.shape()) + " x " +
                          shape_str(b.shape()));
    }
    lead[i] = std::max(ea, eb);
  }
  const std::size_t batches = shape_numel(lead);
  std::vector<std::size_t> aoff, boff;
  if (!lead.empty()) {
    Shape la = alead, lb = blead;
    la.insert(la.begin(), lr - la.size(), 1);
    lb.insert(lb.begin(), lr - lb.size(), 1);
    auto ai = broadcast_index(lead, la);
    auto bi = broadcast_index(lead, lb);
    aoff.resize(batches);
    boff.resize(batches);
    for (std::size_t i = 0; i < batches; ++i) {
      aoff[i] = (ai.empty() ? i : ai[i]) * m * k;
      boff[i] = (bi.empty() ? i : bi[i]) * k * n;
    }
  } else {
    aoff = {0};
    boff = {0};
  }

  Shape out_shape = lead;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(batches * m * n);
  const double* ad = a.data().data();
  const double* bd = b.data().data();

  // Shared right operand: one large GEMM over all rows of a.
  const bool flat = blead.empty() && alead.size() == lr;
  if (flat) {
    const auto rows = static_cast<Eigen::Index>(batches * m);
    MutMap(out.data(), rows, n).noalias() = ConstMap(ad, rows, k) * ConstMap(bd, k, n);
  } else {
    for (std::size_t i = 0; i < batches; ++i) {
      MutMap(out.data() + i * m * n, m, n).noalias() = ConstMap(ad + aoff[i], m, k) * ConstMap(bd + boff[i], k, n);
    }
  }

  return make_result(std::move(out_shape), std::move(out), {&a, &b},
                     [m, k, n, batches, flat, aoff = std::move(aoff), boff = std::move(boff)](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       const double* g = self.grad.data();
                       if (flat) {
                         const auto rows = static_cast<Eigen::Index>(batches * m);
                         ConstMap gm(g, rows, n);
                         if (pa.requires_grad) {
                           MutMap(pa.ensure_grad().data(), rows, k).noalias() +=
                               gm * ConstMap(pb.data.data(), k, n).transpose();
                         }
                         if (pb.requires_grad) {
                           MutMap(pb.ensure_grad().data(), k, n).noalias() +=
                               ConstMap(pa.data.data(), rows, k).transpose() * gm;
                         }
                         return;
                       }
                       for (std::size_t i = 0; i < batches; ++i) {
                         ConstMap gm(g + i * m * n, m, n);
                         if (pa.requires_grad) {
                           MutMap(pa.ensure_grad().data() + aoff[i], m, k).noalias() +=
                               gm * ConstMap(pb.data.data() + boff[i], k, n).transpose();
                         }
                         if (pb.requires_grad) {
                           MutMap(pb.ensure_grad().data() + boff[i], k, n).noalias() +=
                               ConstMap(pa.data.data() + aoff[i], m, k).transpose() * gm;
                         }
                       }
                     });
}

Tensor transpose_last_two(const Tensor& x) {
  if (x.rank() < 2) throw RankTooLow("transpose_last_two needs rank >= 2, got " + shape_str(x.shape()));
  const std::size_t r = x.dim(-2), c = x.dim(-1);
  const std::size_t batches = x.numel() / (r * c);
  std::vector<std::size_t> src(x.numel());
  std::size_t o = 0;
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t base = b * r * c;
    for (std::size_t j = 0; j < c; ++j)
      for (std::size_t i = 0; i < r; ++i) src[o++] = base + i * c + j;
  }
  Shape s = x.shape();
  std::swap(s[s.size() - 1], s[s.size() - 2]);
  return gather(x, std::move(s), std::move(src));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeMismatch("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  return make_result(std::move(shape), x.to_vector(), {&x}, [](Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
  const std::size_t ax = norm_axis(axis, x.rank());
  const Shape& s = x.shape();
  if (length == 0 || start + length > s[ax]) {
    throw ShapeMismatch("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                        ") out of range for axis extent " + std::to_string(s[ax]));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
  for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
  std::vector<std::size_t> src;
  src.reserve(outer * length * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < length; ++l) {
      const std::size_t base = (o * s[ax] + start + l) * inner;
      for (std::size_t i = 0; i < inner; ++i) src.push_back(base + i);
    }
  Shape out = s;
  out[ax] = length;
  return gather(x, std::move(out), std::move(src));
}

Tensor index_select(const Tensor& x, int axis, std::span<const std::size_t> indices) {
  const std::size_t ax = norm_axis(axis, x.rank());
  const Shape& s = x.shape();
  if (indices.empty()) throw ShapeMismatch("index_select with no indices");
  for (auto i : indices) {
    if (i >= s[ax]) throw ShapeMismatch("index " + std::to_string(i) + " out of range " + std::to_string(s[ax]));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
  for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
  std::vector<std::size_t> src;
  src.reserve(outer * indices.size() * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (auto idx : indices) {
      const std::size_t base = (o * s[ax] + idx) * inner;
      for (std::size_t i = 0; i < inner; ++i) src.push_back(base + i);
    }
  Shape out = s;
  out[ax] = indices.size();
  return gather(x, std::move(out), std::move(src));
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ShapeMismatch("concat of nothing");
  const std::size_t ax = norm_axis(axis, parts[0].rank());
  Shape out = parts[0].shape();
  out[ax] = 0;
  for (const auto& p : parts) {
    Shape ps = p.shape();
    if (ps.size() != out.size()) throw ShapeMismatch("concat rank mismatch");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (i != ax && ps[i] != out[i]) {
        throw ShapeMismatch("concat shapes " + shape_str(parts[0].shape()) + " vs " + shape_str(ps));
      }
    }
    out[ax] += ps[ax];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= out[i];
  for (std::size_t i = ax + 1; i < out.size(); ++i) inner *= out[i];

  std::vector<double> data(shape_numel(out));
  std::vector<std::size_t> widths;
  for (const auto& p : parts) widths.push_back(p.dim(static_cast<int>(ax)) * inner);
  const std::size_t row = out[ax] * inner;
  std::size_t col = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto pd = parts[pi].data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(o * widths[pi]), widths[pi],
                  data.begin() + static_cast<std::ptrdiff_t>(o * row + col));
    }
    col += widths[pi];
  }
  return make_result_n(std::move(out), std::move(data), parts,
                       [outer, row, widths = std::move(widths)](Node& self) {
                         std::size_t col = 0;
                         for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
                           Node& p = *self.parents[pi];
                           if (p.requires_grad) {
                             auto& gp = p.ensure_grad();
                             for (std::size_t o = 0; o < outer; ++o)
                               for (std::size_t i = 0; i < widths[pi]; ++i)
                                 gp[o * widths[pi] + i] += self.grad[o * row + col + i];
                           }
                           col += widths[pi];
                         }
                       });
}

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeMismatch("stack of nothing");
  std::vector<Tensor> lifted;
  lifted.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.shape() != parts[0].shape()) throw ShapeMismatch("stack needs equal shapes");
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    lifted.push_back(reshape(p, std::move(s)));
  }
  return concat(lifted, 0);
}

Tensor softmax_last(const Tensor& x) {
  if (x.rank() < 1) throw RankTooLow("softmax_last needs rank >= 1");
  const std::size_t n = x.dim(-1);
  const std::size_t rows = x.numel() / n;
  const auto xd = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * n;
    double* o = out.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += (o[i] = std::exp(in[i] - mx));
    for (std::size_t i = 0; i < n; ++i) o[i] /= z;
  }
  return make_result(x.shape(), std::move(out), {&x}, [n, rows](Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * n;
      const double* g = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += g[i] * y[i];
      for (std::size_t i = 0; i < n; ++i) gx[r * n + i] += y[i] * (g[i] - dot);
    }
  });
}

Tensor layer_norm_last(const Tensor& x, const Tensor& scale, const Tensor& shift, double eps) {
  if (x.rank() < 1) throw RankTooLow("layer_norm_last needs rank >= 1");
  const std::size_t n = x.dim(-1);
  if (scale.numel() != n || shift.numel() != n) {
    throw ShapeMismatch("layer norm affine width " + std::to_string(scale.numel()) + "/" +
                        std::to_string(shift.numel()) + " vs last axis " + std::to_string(n));
  }
  const std::size_t rows = x.numel() / n;
  const auto xd = x.data();
  const auto gd = scale.data();
  const auto bd = shift.data();
  std::vector<double> xhat(x.numel()), rstd(rows), out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * n;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += in[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (in[i] - mu) * (in[i] - mu);
    var /= static_cast<double>(n);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) {
      xhat[r * n + i] = (in[i] - mu) * rstd[r];
      out[r * n + i] = xhat[r * n + i] * gd[i] + bd[i];
    }
  }
  return make_result(x.shape(), std::move(out), {&x, &scale, &shift},
                     [n, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
                       Node& px = *self.parents[0];
                       Node& pg = *self.parents[1];
                       Node& pb = *self.parents[2];
                       const auto& g = self.grad;
                       if (pg.requires_grad) {
                         auto& gg = pg.ensure_grad();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t i = 0; i < n; ++i) gg[i] += g[r * n + i] * xhat[r * n + i];
                       }
                       if (pb.requires_grad) {
                         auto& gb = pb.ensure_grad();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t i = 0; i < n; ++i) gb[i] += g[r * n + i];
                       }
                       if (px.requires_grad) {
                         auto& gx = px.ensure_grad();
                         const double inv_n = 1.0 / static_cast<double>(n);
                         for (std::size_t r = 0; r < rows; ++r) {
                           double m1 = 0.0, m2 = 0.0;
                           for (std::size_t i = 0; i < n; ++i) {
                             const double dxh = g[r * n + i] * pg.data[i];
                             m1 += dxh;
                             m2 += dxh * xhat[r * n + i];
                           }
                           m1 *= inv_n;
                           m2 *= inv_n;
                           for (std::size_t i = 0; i < n; ++i) {
                             const double dxh = g[r * n + i] * pg.data[i];
                             gx[r * n + i] += rstd[r] * (dxh - m1 - xhat[r * n + i] * m2);
                           }
                         }
                       }
                     });
}

}  // namespace ctpnet
