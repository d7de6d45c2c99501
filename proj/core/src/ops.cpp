#include "dgmn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace dgmn {

namespace {

using i64 = std::int64_t;

int normalize_axis(int axis, int rank, const Shape& shape) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  }
  return a;
}

// Splits a shape around `axis` into (outer, extent, inner).
struct AxisView {
  i64 outer = 1, n = 1, inner = 1;
};

AxisView axis_view(const Shape& s, int axis) {
  AxisView v;
  for (int i = 0; i < axis; ++i) v.outer *= s[static_cast<std::size_t>(i)];
  v.n = s[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

struct BroadcastPlan {
  Shape out;
  std::vector<i64> stride_a, stride_b;
  bool same = false;
};

std::vector<i64> contiguous_strides(const Shape& s) {
  std::vector<i64> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) {
    st[static_cast<std::size_t>(i)] = st[static_cast<std::size_t>(i) + 1] * s[static_cast<std::size_t>(i) + 1];
  }
  return st;
}

BroadcastPlan broadcast_plan(const Shape& a, const Shape& b) {
  BroadcastPlan p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const std::size_t r = std::max(a.size(), b.size());
  p.out.assign(r, 1);
  p.stride_a.assign(r, 0);
  p.stride_b.assign(r, 0);
  const auto sa = contiguous_strides(a);
  const auto sb = contiguous_strides(b);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t oi = r - 1 - i;
    const i64 da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const i64 db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    p.out[oi] = std::max(da, db);
    if (i < a.size() && da != 1) p.stride_a[oi] = sa[a.size() - 1 - i];
    if (i < b.size() && db != 1) p.stride_b[oi] = sb[b.size() - 1 - i];
  }
  return p;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <class F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  const i64 total = numel_of(p.out);
  if (p.same) {
    for (i64 i = 0; i < total; ++i) f(i, i, i);
    return;
  }
  const std::size_t r = p.out.size();
  if (total == 0) return;
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  std::vector<i64> idx(r, 0);
  const i64 last = p.out[r - 1];
  const i64 la = p.stride_a[r - 1], lb = p.stride_b[r - 1];
  i64 ia = 0, ib = 0, o = 0;
  while (o < total) {
    for (i64 j = 0; j < last; ++j) f(o++, ia + j * la, ib + j * lb);
    // advance the odometer over all but the last axis
    int d = static_cast<int>(r) - 2;
    for (; d >= 0; --d) {
      const auto du = static_cast<std::size_t>(d);
      ia += p.stride_a[du];
      ib += p.stride_b[du];
      if (++idx[du] < p.out[du]) break;
      ia -= p.stride_a[du] * p.out[du];
      ib -= p.stride_b[du] * p.out[du];
      idx[du] = 0;
    }
    if (d < 0) break;
  }
}

template <class Fwd, class Da, class Db>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, Da da, Db db) {
  auto plan = broadcast_plan(a.shape(), b.shape());
  std::vector<double> out(static_cast<std::size_t>(numel_of(plan.out)));
  const auto av = a.data();
  const auto bv = b.data();
  for_each_broadcast(plan, [&](i64 o, i64 ia, i64 ib) { out[o] = fwd(av[ia], bv[ib]); });
  return make_result(plan.out, std::move(out), op, {a, b},
                     [a, b, plan, da, db](std::span<const double> g) mutable {
                       const auto av = a.data();
                       const auto bv = b.data();
                       const bool need_a = a.requires_grad(), need_b = b.requires_grad();
                       auto ga = need_a ? a.grad() : std::span<double>{};
                       auto gb = need_b ? b.grad() : std::span<double>{};
                       for_each_broadcast(plan, [&](i64 o, i64 ia, i64 ib) {
                         if (need_a) ga[ia] += g[o] * da(av[ia], bv[ib]);
                         if (need_b) gb[ib] += g[o] * db(av[ia], bv[ib]);
                       });
                     });
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, const char* op, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = fwd(v);
  return make_result(x.shape(), std::move(out), op, {x}, [x, deriv](std::span<const double> g) mutable {
    const auto xv = x.data();
    auto gx = x.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * deriv(xv[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& x, double s) {
  return unary(
      x, "scale", [s](double v) { return v * s; }, [s](double) { return s; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  return unary(
      x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
      [](double v) {
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + v * pdf;
      });
}

Tensor sum(const Tensor& x) {
  const double s = std::accumulate(x.data().begin(), x.data().end(), 0.0);
  return make_result(Shape{}, {s}, "sum", {x}, [x](std::span<const double> g) mutable {
    for (auto& v : x.grad()) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  const auto n = static_cast<double>(x.numel());
  return scale(sum(x), 1.0 / n);
}

Tensor sum(const Tensor& x, int axis, bool keepdim) {
  const int a = normalize_axis(axis, x.rank(), x.shape());
  const auto v = axis_view(x.shape(), a);
  std::vector<double> out(static_cast<std::size_t>(v.outer * v.inner), 0.0);
  const auto xv = x.data();
  for (i64 o = 0; o < v.outer; ++o) {
    for (i64 j = 0; j < v.n; ++j) {
      const double* src = xv.data() + (o * v.n + j) * v.inner;
      double* dst = out.data() + o * v.inner;
      for (i64 i = 0; i < v.inner; ++i) dst[i] += src[i];
    }
  }
  Shape shape = x.shape();
  if (keepdim) {
    shape[static_cast<std::size_t>(a)] = 1;
  } else {
    shape.erase(shape.begin() + a);
  }
  return make_result(std::move(shape), std::move(out), "sum_axis", {x}, [x, v](std::span<const double> g) mutable {
    auto gx = x.grad();
    for (i64 o = 0; o < v.outer; ++o) {
      for (i64 j = 0; j < v.n; ++j) {
        double* dst = gx.data() + (o * v.n + j) * v.inner;
        const double* src = g.data() + o * v.inner;
        for (i64 i = 0; i < v.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  // A single -1 extent is inferred.
  i64 known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape with more than one -1 extent");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0 && known > 0) shape[static_cast<std::size_t>(infer)] = x.numel() / known;
  if (numel_of(shape) != x.numel()) {
    throw ShapeError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), "reshape", {x}, [x](std::span<const double> g) mutable {
    auto gx = x.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
}

Tensor permute(const Tensor& x, std::span<const int> perm) {
  const auto r = static_cast<std::size_t>(x.rank());
  if (perm.size() != r) throw ShapeError("permute rank mismatch for " + shape_str(x.shape()));
  std::vector<bool> used(r, false);
  Shape out_shape(r);
  const auto in_strides = contiguous_strides(x.shape());
  std::vector<i64> strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    const int p = perm[i];
    if (p < 0 || static_cast<std::size_t>(p) >= r || used[static_cast<std::size_t>(p)]) {
      throw ShapeError("invalid permutation for " + shape_str(x.shape()));
    }
    used[static_cast<std::size_t>(p)] = true;
    out_shape[i] = x.shape()[static_cast<std::size_t>(p)];
    strides[i] = in_strides[static_cast<std::size_t>(p)];
  }
  // Reuse the broadcast walker: the "a" stride table is the permuted input.
  BroadcastPlan plan;
  plan.out = out_shape;
  plan.stride_a = strides;
  plan.stride_b.assign(r, 0);
  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  const auto xv = x.data();
  for_each_broadcast(plan, [&](i64 o, i64 ia, i64) { out[o] = xv[ia]; });
  return make_result(std::move(out_shape), std::move(out), "permute", {x},
                     [x, plan](std::span<const double> g) mutable {
                       auto gx = x.grad();
                       for_each_broadcast(plan, [&](i64 o, i64 ia, i64) { gx[ia] += g[o]; });
                     });
}

Tensor slice(const Tensor& x, int axis, i64 start, i64 length) {
  const int a = normalize_axis(axis, x.rank(), x.shape());
  const auto v = axis_view(x.shape(), a);
  if (start < 0 || length < 0 || start + length > v.n) {
    throw ShapeError("slice [" + std::to_string(start) + ", +" + std::to_string(length) + ") out of range for " +
                     shape_str(x.shape()));
  }
  Shape shape = x.shape();
  shape[static_cast<std::size_t>(a)] = length;
  std::vector<double> out(static_cast<std::size_t>(v.outer * length * v.inner));
  const auto xv = x.data();
  for (i64 o = 0; o < v.outer; ++o) {
    std::copy_n(xv.data() + (o * v.n + start) * v.inner, length * v.inner, out.data() + o * length * v.inner);
  }
  return make_result(std::move(shape), std::move(out), "slice", {x},
                     [x, v, start, length](std::span<const double> g) mutable {
                       auto gx = x.grad();
                       for (i64 o = 0; o < v.outer; ++o) {
                         double* dst = gx.data() + (o * v.n + start) * v.inner;
                         const double* src = g.data() + o * length * v.inner;
                         for (i64 i = 0; i < length * v.inner; ++i) dst[i] += src[i];
                       }
                     });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const int a = normalize_axis(axis, parts[0].rank(), parts[0].shape());
  Shape shape = parts[0].shape();
  i64 total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != shape.size()) throw ShapeError("concat rank mismatch");
    total += s[static_cast<std::size_t>(a)];
    s[static_cast<std::size_t>(a)] = shape[static_cast<std::size_t>(a)];
    if (s != shape) throw ShapeError("concat mismatch " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
  }
  shape[static_cast<std::size_t>(a)] = total;
  const auto v = axis_view(shape, a);
  std::vector<double> out(static_cast<std::size_t>(numel_of(shape)));
  i64 offset = 0;
  std::vector<i64> offsets;
  for (const auto& p : parts) {
    const i64 n = p.dim(a);
    offsets.push_back(offset);
    for (i64 o = 0; o < v.outer; ++o) {
      std::copy_n(p.data().data() + o * n * v.inner, n * v.inner, out.data() + (o * v.n + offset) * v.inner);
    }
    offset += n;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(std::move(shape), std::move(out), "concat", inputs,
                     [inputs, offsets, v, a](std::span<const double> g) mutable {
                       for (std::size_t k = 0; k < inputs.size(); ++k) {
                         auto& p = inputs[k];
                         if (!p.requires_grad()) continue;
                         const i64 n = p.dim(a);
                         auto gp = p.grad();
                         for (i64 o = 0; o < v.outer; ++o) {
                           const double* src = g.data() + (o * v.n + offsets[k]) * v.inner;
                           double* dst = gp.data() + o * n * v.inner;
                           for (i64 i = 0; i < n * v.inner; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const i64 m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  const double* av = a.data().data();
  const double* bv = b.data().data();
  for (i64 i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (i64 p = 0; p < k; ++p) {
      const double s = av[i * k + p];
      const double* brow = bv + p * n;
      for (i64 j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  return make_result(Shape{m, n}, std::move(out), "matmul", {a, b}, [a, b, m, k, n](std::span<const double> g) mutable {
    const double* av = a.data().data();
    const double* bv = b.data().data();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (i64 i = 0; i < m; ++i)
        for (i64 p = 0; p < k; ++p) {
          double acc = 0.0;
          for (i64 j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (i64 i = 0; i < m; ++i)
        for (i64 p = 0; p < k; ++p) {
          const double s = av[i * k + p];
          for (i64 j = 0; j < n; ++j) gb[p * n + j] += s * g[i * n + j];
        }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || x.rank() < 1 || x.dim(-1) != weight.dim(1)) {
    throw ShapeError("linear input " + shape_str(x.shape()) + " vs weight " + shape_str(weight.shape()));
  }
  const i64 in = weight.dim(1), outd = weight.dim(0);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != outd)) {
    throw ShapeError("linear bias " + shape_str(bias.shape()) + " vs weight " + shape_str(weight.shape()));
  }
  const i64 rows = x.numel() / in;
  Shape shape = x.shape();
  shape.back() = outd;
  std::vector<double> out(static_cast<std::size_t>(rows * outd));
  const double* xv = x.data().data();
  const double* wv = weight.data().data();
  for (i64 r = 0; r < rows; ++r) {
    const double* xr = xv + r * in;
    for (i64 o = 0; o < outd; ++o) {
      const double* wr = wv + o * in;
      double acc = bias.defined() ? bias.data()[static_cast<std::size_t>(o)] : 0.0;
      for (i64 i = 0; i < in; ++i) acc += xr[i] * wr[i];
      out[static_cast<std::size_t>(r * outd + o)] = acc;
    }
  }
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(shape), std::move(out), "linear", inputs,
                     [x, weight, bias, rows, in, outd](std::span<const double> g) mutable {
                       const double* xv = x.data().data();
                       const double* wv = weight.data().data();
                       if (x.requires_grad()) {
                         auto gx = x.grad();
                         for (i64 r = 0; r < rows; ++r)
                           for (i64 o = 0; o < outd; ++o) {
                             const double go = g[static_cast<std::size_t>(r * outd + o)];
                             if (go == 0.0) continue;
                             const double* wr = wv + o * in;
                             double* gr = gx.data() + r * in;
                             for (i64 i = 0; i < in; ++i) gr[i] += go * wr[i];
                           }
                       }
                       if (weight.requires_grad()) {
                         auto gw = weight.grad();
                         for (i64 r = 0; r < rows; ++r)
                           for (i64 o = 0; o < outd; ++o) {
                             const double go = g[static_cast<std::size_t>(r * outd + o)];
                             if (go == 0.0) continue;
                             const double* xr = xv + r * in;
                             double* gr = gw.data() + o * in;
                             for (i64 i = 0; i < in; ++i) gr[i] += go * xr[i];
                           }
                       }
                       if (bias.defined() && bias.requires_grad()) {
                         auto gb = bias.grad();
                         for (i64 r = 0; r < rows; ++r)
                           for (i64 o = 0; o < outd; ++o) gb[static_cast<std::size_t>(o)] += g[static_cast<std::size_t>(r * outd + o)];
                       }
                     });
}

Tensor softmax(const Tensor& x, int axis) {
  const int a = normalize_axis(axis, x.rank(), x.shape());
  const auto v = axis_view(x.shape(), a);
  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  const auto xv = x.data();
  for (i64 o = 0; o < v.outer; ++o) {
    for (i64 i = 0; i < v.inner; ++i) {
      const i64 base = o * v.n * v.inner + i;
      double mx = -INFINITY;
      for (i64 j = 0; j < v.n; ++j) mx = std::max(mx, xv[base + j * v.inner]);
      double z = 0.0;
      for (i64 j = 0; j < v.n; ++j) {
        const double e = std::exp(xv[base + j * v.inner] - mx);
        out[base + j * v.inner] = e;
        z += e;
      }
      for (i64 j = 0; j < v.n; ++j) out[base + j * v.inner] /= z;
    }
  }
  auto result = make_result(x.shape(), out, "softmax", {x}, nullptr);
  if (result.grad_fn()) {
    // Saves its own output for the backward pass.
    result.grad_fn()->backward = [x, v, y = std::move(out)](std::span<const double> g) mutable {
      auto gx = x.grad();
      for (i64 o = 0; o < v.outer; ++o) {
        for (i64 i = 0; i < v.inner; ++i) {
          const i64 base = o * v.n * v.inner + i;
          double dot = 0.0;
          for (i64 j = 0; j < v.n; ++j) dot += g[base + j * v.inner] * y[base + j * v.inner];
          for (i64 j = 0; j < v.n; ++j) {
            const i64 k = base + j * v.inner;
            gx[k] += y[k] * (g[k] - dot);
          }
        }
      }
    };
  }
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (!(eps > 0.0)) throw ConfigError("layer_norm eps must be positive, got " + std::to_string(eps));
  const i64 n = x.dim(-1);
  if (gamma.numel() != n || beta.numel() != n) {
    throw ShapeError("layer_norm gamma/beta " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                     " vs input " + shape_str(x.shape()));
  }
  const i64 rows = x.numel() / n;
  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  std::vector<double> xhat(out.size());
  std::vector<double> rstd(static_cast<std::size_t>(rows));
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  for (i64 r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * n;
    double mu = 0.0;
    for (i64 i = 0; i < n; ++i) mu += xr[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (i64 i = 0; i < n; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<double>(n);
    const double rs = 1.0 / std::sqrt(var + eps);
    rstd[static_cast<std::size_t>(r)] = rs;
    for (i64 i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(r * n + i);
      xhat[k] = (xr[i] - mu) * rs;
      out[k] = gv[static_cast<std::size_t>(i)] * xhat[k] + bv[static_cast<std::size_t>(i)];
    }
  }
  return make_result(x.shape(), std::move(out), "layer_norm", {x, gamma, beta},
                     [x, gamma, beta, n, rows, xhat = std::move(xhat), rstd = std::move(rstd)](
                         std::span<const double> g) mutable {
                       const auto gv = gamma.data();
                       if (gamma.requires_grad() || beta.requires_grad()) {
                         auto gg = gamma.requires_grad() ? gamma.grad() : std::span<double>{};
                         auto gb = beta.requires_grad() ? beta.grad() : std::span<double>{};
                         for (i64 r = 0; r < rows; ++r)
                           for (i64 i = 0; i < n; ++i) {
                             const auto k = static_cast<std::size_t>(r * n + i);
                             if (!gg.empty()) gg[static_cast<std::size_t>(i)] += g[k] * xhat[k];
                             if (!gb.empty()) gb[static_cast<std::size_t>(i)] += g[k];
                           }
                       }
                       if (!x.requires_grad()) return;
                       auto gx = x.grad();
                       for (i64 r = 0; r < rows; ++r) {
                         double m1 = 0.0, m2 = 0.0;
                         for (i64 i = 0; i < n; ++i) {
                           const auto k = static_cast<std::size_t>(r * n + i);
                           const double gh = g[k] * gv[static_cast<std::size_t>(i)];
                           m1 += gh;
                           m2 += gh * xhat[k];
                         }
                         m1 /= static_cast<double>(n);
                         m2 /= static_cast<double>(n);
                         for (i64 i = 0; i < n; ++i) {
                           const auto k = static_cast<std::size_t>(r * n + i);
                           const double gh = g[k] * gv[static_cast<std::size_t>(i)];
                           gx[k] += rstd[static_cast<std::size_t>(r)] * (gh - m1 - xhat[k] * m2);
                         }
                       }
                     });
}

Shape conv2d_output_shape(const Shape& x, const Shape& w, Conv2dParams p) {
  if (x.size() != 4 || w.size() != 4) {
    throw ShapeError("conv2d expects 4-D input and weight, got " + shape_str(x) + " and " + shape_str(w));
  }
  if (p.groups < 1 || x[1] % p.groups != 0 || w[0] % p.groups != 0) {
    throw ConfigError("conv2d groups=" + std::to_string(p.groups) + " must divide C_in=" + std::to_string(x[1]) +
                      " and C_out=" + std::to_string(w[0]));
  }
  if (p.dilation < 1 || p.stride < 1 || p.padding < 0) {
    throw ConfigError("conv2d needs stride >= 1, dilation >= 1, padding >= 0");
  }
  if (w[1] != x[1] / p.groups) {
    throw ShapeError("conv2d input " + shape_str(x) + " incompatible with weight " + shape_str(w) + " (groups=" +
                     std::to_string(p.groups) + ")");
  }
  const i64 ho = (x[2] + 2 * p.padding - p.dilation * (w[2] - 1) - 1) / p.stride + 1;
  const i64 wo = (x[3] + 2 * p.padding - p.dilation * (w[3] - 1) - 1) / p.stride + 1;
  if (ho <= 0 || wo <= 0 || x[2] + 2 * p.padding - p.dilation * (w[2] - 1) - 1 < 0 ||
      x[3] + 2 * p.padding - p.dilation * (w[3] - 1) - 1 < 0) {
    throw ShapeError("conv2d output would be empty for input " + shape_str(x) + " and weight " + shape_str(w));
  }
  return {x[0], w[0], ho, wo};
}

namespace {

// Range of output columns whose input column ow*stride - pad + off lies in [0, w).
inline void valid_range(i64 off, i64 pad, i64 stride, i64 in, i64 out, i64& lo, i64& hi) {
  // need 0 <= o*stride - pad + off < in
  const i64 a = pad - off;  // o*stride >= a
  lo = a <= 0 ? 0 : (a + stride - 1) / stride;
  const i64 b = in + pad - off;  // o*stride < b
  hi = b <= 0 ? 0 : std::min(out, (b + stride - 1) / stride);
  if (hi < lo) hi = lo;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, Conv2dParams p) {
  const Shape out_shape = conv2d_output_shape(x.shape(), w.shape(), p);
  if (b.defined() && (b.rank() != 1 || b.dim(0) != w.dim(0))) {
    throw ShapeError("conv2d bias " + shape_str(b.shape()) + " vs weight " + shape_str(w.shape()));
  }
  const i64 n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const i64 cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const i64 ho = out_shape[2], wo = out_shape[3];
  const i64 cin_g = cin / p.groups, cout_g = cout / p.groups;
  const i64 s = p.stride, pad = p.padding, dil = p.dilation;

  std::vector<double> out(static_cast<std::size_t>(numel_of(out_shape)), 0.0);
  const double* xv = x.data().data();
  const double* wv = w.data().data();

  // Shared loop nest: visit(out_plane, in_plane, weight_index, oh, ih, ow_lo, ow_hi, iw_of_ow_lo).
  auto nest = [=](auto&& body) {
    for (i64 bn = 0; bn < n; ++bn)
      for (i64 oc = 0; oc < cout; ++oc) {
        const i64 gi = oc / cout_g;
        for (i64 icg = 0; icg < cin_g; ++icg) {
          const i64 ic = gi * cin_g + icg;
          for (i64 ky = 0; ky < kh; ++ky) {
            i64 oh_lo, oh_hi;
            valid_range(ky * dil, pad, s, h, ho, oh_lo, oh_hi);
            for (i64 kx = 0; kx < kw; ++kx) {
              i64 ow_lo, ow_hi;
              valid_range(kx * dil, pad, s, wd, wo, ow_lo, ow_hi);
              const i64 widx = ((oc * cin_g + icg) * kh + ky) * kw + kx;
              for (i64 oh = oh_lo; oh < oh_hi; ++oh) {
                const i64 ih = oh * s - pad + ky * dil;
                const i64 obase = ((bn * cout + oc) * ho + oh) * wo;
                const i64 ibase = ((bn * cin + ic) * h + ih) * wd - pad + kx * dil;
                body(widx, obase, ibase, ow_lo, ow_hi);
              }
            }
          }
        }
      }
  };

  nest([&](i64 widx, i64 obase, i64 ibase, i64 lo, i64 hi) {
    const double wt = wv[widx];
    double* o = out.data() + obase;
    const double* in = xv + ibase;
    if (s == 1) {
      for (i64 ow = lo; ow < hi; ++ow) o[ow] += wt * in[ow];
    } else {
      for (i64 ow = lo; ow < hi; ++ow) o[ow] += wt * in[ow * s];
    }
  });
  if (b.defined()) {
    const auto bv = b.data();
    for (i64 bn = 0; bn < n; ++bn)
      for (i64 oc = 0; oc < cout; ++oc) {
        double* o = out.data() + (bn * cout + oc) * ho * wo;
        for (i64 k = 0; k < ho * wo; ++k) o[k] += bv[static_cast<std::size_t>(oc)];
      }
  }

  std::vector<Tensor> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return make_result(out_shape, std::move(out), "conv2d", inputs,
                     [x, w, b, nest, s, n, cout, ho, wo](std::span<const double> g) mutable {
                       const double* xv = x.data().data();
                       const double* wv = w.data().data();
                       const bool need_x = x.requires_grad(), need_w = w.requires_grad();
                       double* gx = need_x ? x.grad().data() : nullptr;
                       double* gw = need_w ? w.grad().data() : nullptr;
                       if (need_x || need_w) {
                         nest([&](i64 widx, i64 obase, i64 ibase, i64 lo, i64 hi) {
                           const double* go = g.data() + obase;
                           if (need_x) {
                             const double wt = wv[widx];
                             double* gi = gx + ibase;
                             for (i64 ow = lo; ow < hi; ++ow) gi[ow * s] += wt * go[ow];
                           }
                           if (need_w) {
                             const double* in = xv + ibase;
                             double acc = 0.0;
                             for (i64 ow = lo; ow < hi; ++ow) acc += go[ow] * in[ow * s];
                             gw[widx] += acc;
                           }
                         });
                       }
                       if (b.defined() && b.requires_grad()) {
                         auto gb = b.grad();
                         for (i64 bn = 0; bn < n; ++bn)
                           for (i64 oc = 0; oc < cout; ++oc) {
                             const double* go = g.data() + (bn * cout + oc) * ho * wo;
                             double acc = 0.0;
                             for (i64 k = 0; k < ho * wo; ++k) acc += go[k];
                             gb[static_cast<std::size_t>(oc)] += acc;
                           }
                       }
                     });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, double momentum, double eps) {
  if (x.rank() != 4) throw ShapeError("batch_norm expects [N,C,H,W], got " + shape_str(x.shape()));
  if (!(eps > 0.0)) throw ConfigError("batch_norm eps must be positive");
  const i64 n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &running_mean, &running_var}) {
    if (t->numel() != c) throw ShapeError("batch_norm parameter " + shape_str(t->shape()) + " vs C=" + std::to_string(c));
  }
  const i64 m = n * hw;
  std::vector<double> mu(static_cast<std::size_t>(c)), rstd(static_cast<std::size_t>(c));
  const auto xv = x.data();
  for (i64 ch = 0; ch < c; ++ch) {
    const auto cu = static_cast<std::size_t>(ch);
    if (training) {
      double s = 0.0;
      for (i64 bn = 0; bn < n; ++bn)
        for (i64 k = 0; k < hw; ++k) s += xv[static_cast<std::size_t>((bn * c + ch) * hw + k)];
      const double mean = s / static_cast<double>(m);
      double v = 0.0;
      for (i64 bn = 0; bn < n; ++bn)
        for (i64 k = 0; k < hw; ++k) {
          const double d = xv[static_cast<std::size_t>((bn * c + ch) * hw + k)] - mean;
          v += d * d;
        }
      const double var = v / static_cast<double>(m);
      mu[cu] = mean;
      rstd[cu] = 1.0 / std::sqrt(var + eps);
      const double unbiased = m > 1 ? v / static_cast<double>(m - 1) : var;
      running_mean.data()[cu] = (1.0 - momentum) * running_mean.data()[cu] + momentum * mean;
      running_var.data()[cu] = (1.0 - momentum) * running_var.data()[cu] + momentum * unbiased;
    } else {
      mu[cu] = running_mean.data()[cu];
      rstd[cu] = 1.0 / std::sqrt(running_var.data()[cu] + eps);
    }
  }
  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  for (i64 bn = 0; bn < n; ++bn)
    for (i64 ch = 0; ch < c; ++ch) {
      const auto cu = static_cast<std::size_t>(ch);
      const double a = gamma.data()[cu] * rstd[cu];
      const double bb = beta.data()[cu] - a * mu[cu];
      for (i64 k = 0; k < hw; ++k) {
        const auto i = static_cast<std::size_t>((bn * c + ch) * hw + k);
        out[i] = a * xv[i] + bb;
      }
    }
  return make_result(x.shape(), std::move(out), "batch_norm", {x, gamma, beta},
                     [x, gamma, beta, training, n, c, hw, m, mu = std::move(mu), rstd = std::move(rstd)](
                         std::span<const double> g) mutable {
                       const auto xv = x.data();
                       for (i64 ch = 0; ch < c; ++ch) {
                         const auto cu = static_cast<std::size_t>(ch);
                         double sg = 0.0, sgx = 0.0;
                         for (i64 bn = 0; bn < n; ++bn)
                           for (i64 k = 0; k < hw; ++k) {
                             const auto i = static_cast<std::size_t>((bn * c + ch) * hw + k);
                             sg += g[i];
                             sgx += g[i] * (xv[i] - mu[cu]) * rstd[cu];
                           }
                         if (gamma.requires_grad()) gamma.grad()[cu] += sgx;
                         if (beta.requires_grad()) beta.grad()[cu] += sg;
                         if (!x.requires_grad()) continue;
                         auto gx = x.grad();
                         const double gm = gamma.data()[cu];
                         for (i64 bn = 0; bn < n; ++bn)
                           for (i64 k = 0; k < hw; ++k) {
                             const auto i = static_cast<std::size_t>((bn * c + ch) * hw + k);
                             if (training) {
                               const double xh = (xv[i] - mu[cu]) * rstd[cu];
                               gx[i] += gm * rstd[cu] / static_cast<double>(m) *
                                        (static_cast<double>(m) * g[i] - sg - xh * sgx);
                             } else {
                               gx[i] += g[i] * gm * rstd[cu];
                             }
                           }
                       }
                     });
}

Tensor global_average_pool(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("global_average_pool expects [N,C,H,W], got " + shape_str(x.shape()));
  const i64 n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<double> out(static_cast<std::size_t>(n * c), 0.0);
  const auto xv = x.data();
  for (i64 i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (i64 k = 0; k < hw; ++k) s += xv[static_cast<std::size_t>(i * hw + k)];
    out[static_cast<std::size_t>(i)] = s / static_cast<double>(hw);
  }
  return make_result(Shape{n, c}, std::move(out), "global_average_pool", {x},
                     [x, n, c, hw](std::span<const double> g) mutable {
                       auto gx = x.grad();
                       for (i64 i = 0; i < n * c; ++i) {
                         const double v = g[static_cast<std::size_t>(i)] / static_cast<double>(hw);
                         for (i64 k = 0; k < hw; ++k) gx[static_cast<std::size_t>(i * hw + k)] += v;
                       }
                     });
}

Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || static_cast<std::size_t>(logits.dim(0)) != labels.size()) {
    throw ShapeError("cross_entropy logits " + shape_str(logits.shape()) + " vs " + std::to_string(labels.size()) +
                     " labels");
  }
  const i64 n = logits.dim(0), c = logits.dim(1);
  std::vector<double> prob(static_cast<std::size_t>(n * c));
  const auto lv = logits.data();
  double loss = 0.0;
  for (i64 r = 0; r < n; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= c) throw ShapeError("label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
    double mx = -INFINITY;
    for (i64 k = 0; k < c; ++k) mx = std::max(mx, lv[static_cast<std::size_t>(r * c + k)]);
    double z = 0.0;
    for (i64 k = 0; k < c; ++k) z += std::exp(lv[static_cast<std::size_t>(r * c + k)] - mx);
    for (i64 k = 0; k < c; ++k) {
      prob[static_cast<std::size_t>(r * c + k)] = std::exp(lv[static_cast<std::size_t>(r * c + k)] - mx) / z;
    }
    loss -= lv[static_cast<std::size_t>(r * c + y)] - mx - std::log(z);
  }
  loss /= static_cast<double>(n);
  std::vector<int> ys(labels.begin(), labels.end());
  return make_result(Shape{}, {loss}, "cross_entropy", {logits},
                     [logits, n, c, prob = std::move(prob), ys = std::move(ys)](std::span<const double> g) mutable {
                       auto gl = logits.grad();
                       const double s = g[0] / static_cast<double>(n);
                       for (i64 r = 0; r < n; ++r)
                         for (i64 k = 0; k < c; ++k) {
                           const auto i = static_cast<std::size_t>(r * c + k);
                           gl[i] += s * (prob[i] - (k == ys[static_cast<std::size_t>(r)] ? 1.0 : 0.0));
                         }
                     });
}

}  // namespace dgmn
