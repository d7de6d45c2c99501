#include "dgmn/oracle.hpp"

#include <cmath>
#include <string>

#include "dgmn/errors.hpp"

namespace dgmn::oracle {

using i64 = std::int64_t;

namespace {

void count(MacCounter* c, i64 n) {
  if (c) c->macs += n;
}

void check_spatial(i64 h, i64 w, const char* what) {
  if (h > kMaxSpatial || w > kMaxSpatial) {
    throw ShapeError(std::string(what) + " oracle is limited to 16x16 spatial inputs, got " + std::to_string(h) +
                     "x" + std::to_string(w));
  }
}

// Row-major index helpers kept local so nothing leaks from the production side.
inline i64 at4(const Shape& s, i64 a, i64 b, i64 c, i64 d) { return ((a * s[1] + b) * s[2] + c) * s[3] + d; }

double value(const Tensor& t, i64 i) { return t.data()[static_cast<std::size_t>(i)]; }

// Direct 1x1 projection of an NCHW map: out[n,o,y,x] = b[o] + sum_i W[o,i] f[n,i,y,x].
// W is read as [out, in] regardless of trailing 1x1 kernel dims.
std::vector<double> project_map(const Tensor& f, const Tensor& w, const Tensor& b, MacCounter* c) {
  const i64 n = f.dim(0), ci = f.dim(1), h = f.dim(2), wd = f.dim(3), co = w.dim(0);
  std::vector<double> out(static_cast<std::size_t>(n * co * h * wd));
  for (i64 bn = 0; bn < n; ++bn)
    for (i64 o = 0; o < co; ++o)
      for (i64 y = 0; y < h; ++y)
        for (i64 x = 0; x < wd; ++x) {
          double acc = b.defined() ? value(b, o) : 0.0;
          for (i64 i = 0; i < ci; ++i) acc += value(w, o * ci + i) * value(f, ((bn * ci + i) * h + y) * wd + x);
          out[static_cast<std::size_t>(((bn * co + o) * h + y) * wd + x)] = acc;
        }
  count(c, n * co * h * wd * ci);
  return out;
}

double corner_read(const std::vector<double>& map, i64 c, i64 h, i64 w, i64 n, i64 ch, i64 y, i64 x) {
  if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
  return map[static_cast<std::size_t>(((n * c + ch) * h + y) * w + x)];
}

// Four-corner bilinear read of a flat [N, C, H, W] buffer.
double bilerp(const std::vector<double>& map, i64 c, i64 h, i64 w, i64 n, i64 ch, double y, double x) {
  const double y0 = std::floor(y), x0 = std::floor(x);
  const double ay = y - y0, ax = x - x0;
  const auto iy = static_cast<i64>(y0), ix = static_cast<i64>(x0);
  return (1 - ay) * (1 - ax) * corner_read(map, c, h, w, n, ch, iy, ix) +
         (1 - ay) * ax * corner_read(map, c, h, w, n, ch, iy, ix + 1) +
         ay * (1 - ax) * corner_read(map, c, h, w, n, ch, iy + 1, ix) +
         ay * ax * corner_read(map, c, h, w, n, ch, iy + 1, ix + 1);
}

double table_lookup(const Tensor& table, i64 head, double offset) {
  const i64 r = table.dim(1);
  if (r == 1) return value(table, head);
  double u = offset + static_cast<double>(r - 1) / 2.0;
  if (u <= 0.0) return value(table, head * r);
  if (u >= static_cast<double>(r - 1)) return value(table, head * r + r - 1);
  const auto i = static_cast<i64>(std::floor(u));
  const double f = u - static_cast<double>(i);
  return (1 - f) * value(table, head * r + i) + f * value(table, head * r + i + 1);
}

}  // namespace

Tensor conv2d_reference(const Tensor& x, const Tensor& w, const Tensor& b, Conv2dParams p, MacCounter* counter) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  const i64 n = xs[0], ci = xs[1], h = xs[2], wd = xs[3];
  const i64 co = ws[0], cig = ws[1], kh = ws[2], kw = ws[3];
  check_spatial(h, wd, "conv2d");
  const i64 g = p.groups, cog = co / g;
  const i64 ho = (h + 2 * p.padding - p.dilation * (kh - 1) - 1) / p.stride + 1;
  const i64 wo = (wd + 2 * p.padding - p.dilation * (kw - 1) - 1) / p.stride + 1;
  if (cig * g != ci || ho < 1 || wo < 1) throw ShapeError("conv2d_reference: incompatible shapes");
  Tensor out({n, co, ho, wo});
  for (i64 bn = 0; bn < n; ++bn)
    for (i64 o = 0; o < co; ++o)
      for (i64 oy = 0; oy < ho; ++oy)
        for (i64 ox = 0; ox < wo; ++ox) {
          double acc = b.defined() ? value(b, o) : 0.0;
          const i64 grp = o / cog;
          for (i64 i = 0; i < cig; ++i)
            for (i64 ky = 0; ky < kh; ++ky)
              for (i64 kx = 0; kx < kw; ++kx) {
                const i64 iy = oy * p.stride - p.padding + ky * p.dilation;
                const i64 ix = ox * p.stride - p.padding + kx * p.dilation;
                const i64 cin = grp * cig + i;
                const double xv = (iy < 0 || iy >= h || ix < 0 || ix >= wd) ? 0.0 : value(x, at4(xs, bn, cin, iy, ix));
                acc += value(w, at4(ws, o, i, ky, kx)) * xv;
              }
          out.data()[static_cast<std::size_t>(at4(out.shape(), bn, o, oy, ox))] = acc;
        }
  count(counter, n * co * ho * wo * cig * kh * kw);
  return out;
}

Tensor matmul_reference(const Tensor& a, const Tensor& b, MacCounter* counter) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) throw ShapeError("matmul_reference: incompatible shapes");
  const i64 m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  for (i64 i = 0; i < m; ++i)
    for (i64 j = 0; j < n; ++j) {
      double acc = 0.0;
      for (i64 t = 0; t < k; ++t) acc += value(a, i * k + t) * value(b, t * n + j);
      out.data()[static_cast<std::size_t>(i * n + j)] = acc;
    }
  count(counter, m * n * k);
  return out;
}

std::vector<double> softmax_reference(std::span<const double> logits) {
  double hi = -INFINITY;
  for (double v : logits) hi = std::max(hi, v);
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - hi);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

Tensor layer_norm_reference(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const i64 d = x.shape().back();
  const i64 rows = x.numel() / d;
  Tensor out(x.shape());
  for (i64 r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (i64 i = 0; i < d; ++i) mu += value(x, r * d + i);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (i64 i = 0; i < d; ++i) var += (value(x, r * d + i) - mu) * (value(x, r * d + i) - mu);
    var /= static_cast<double>(d);
    for (i64 i = 0; i < d; ++i) {
      out.data()[static_cast<std::size_t>(r * d + i)] =
          (value(x, r * d + i) - mu) / std::sqrt(var + eps) * value(gamma, i) + value(beta, i);
    }
  }
  return out;
}

double gelu_reference(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double bilinear_point(const Tensor& map, i64 n, i64 c, double y, double x) {
  const i64 h = map.dim(2), w = map.dim(3);
  const double y0 = std::floor(y), x0 = std::floor(x);
  const double y1 = y0 + 1, x1 = x0 + 1;
  auto px = [&](double yy, double xx) {
    if (yy < 0 || yy > static_cast<double>(h - 1) || xx < 0 || xx > static_cast<double>(w - 1)) return 0.0;
    return value(map, at4(map.shape(), n, c, static_cast<i64>(yy), static_cast<i64>(xx)));
  };
  return (y1 - y) * (x1 - x) * px(y0, x0) + (y1 - y) * (x - x0) * px(y0, x1) + (y - y0) * (x1 - x) * px(y1, x0) +
         (y - y0) * (x - x0) * px(y1, x1);
}

Tensor bilinear_reference(const Tensor& map, const Tensor& coords, MacCounter* counter) {
  const i64 n = map.dim(0), c = map.dim(1), p = coords.dim(1);
  check_spatial(map.dim(2), map.dim(3), "bilinear");
  Tensor out({n, p, c});
  for (i64 b = 0; b < n; ++b)
    for (i64 i = 0; i < p; ++i)
      for (i64 ch = 0; ch < c; ++ch) {
        const double y = value(coords, (b * p + i) * 2), x = value(coords, (b * p + i) * 2 + 1);
        out.data()[static_cast<std::size_t>((b * p + i) * c + ch)] = bilinear_point(map, b, ch, y, x);
      }
  count(counter, n * p * c * 4);
  return out;
}

Tensor dmc_reference(const Tensor& features, const Tensor& coords, const Tensor& weights, const Tensor& affinities) {
  const i64 n = features.dim(0), c = features.dim(1), h = features.dim(2), w = features.dim(3);
  check_spatial(h, w, "dmc");
  const i64 K = coords.dim(3), G = weights.dim(4);
  const i64 per_group = c / G;
  Tensor out({n, c, h, w});
  for (i64 b = 0; b < n; ++b)
    for (i64 y = 0; y < h; ++y)
      for (i64 x = 0; x < w; ++x) {
        const i64 pos = (b * h + y) * w + x;
        for (i64 j = 0; j < K; ++j) {
          const double cy = value(coords, (pos * K + j) * 2), cx = value(coords, (pos * K + j) * 2 + 1);
          const double a = value(affinities, pos * K + j);
          for (i64 ch = 0; ch < c; ++ch) {
            const double wt = value(weights, (pos * K + j) * G + ch / per_group);
            out.data()[static_cast<std::size_t>(at4(out.shape(), b, ch, y, x))] +=
                a * wt * bilinear_point(features, b, ch, cy, cx);
          }
        }
      }
  return out;
}

Tensor dgmn_reference(const Tensor& F, const DgmnModule& module) {
  const auto& cfg = module.config();
  const i64 n = F.dim(0), c = F.dim(1), h = F.dim(2), w = F.dim(3);
  check_spatial(h, w, "dgmn");
  const i64 K = cfg.K, G = cfg.groups;
  const int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(K))));
  Tensor H = F.detach().clone();
  for (int t = 0; t < cfg.iterations; ++t) {
    Tensor msg({n, c, h, w});
    for (std::size_t q = 0; q < cfg.rates.size(); ++q) {
      const int rate = cfg.rates[q];
      const Conv2dParams dil{.stride = 1, .padding = rate, .dilation = rate};
      const Tensor walk = conv2d_reference(H, module.walk[q].conv.weight, module.walk[q].conv.bias, dil);
      const Tensor raw = conv2d_reference(H, module.kernel[q].conv.weight, module.kernel[q].conv.bias, dil);
      Tensor coords({n, h, w, K, 2});
      Tensor weights({n, h, w, K, G});
      Tensor aff({n, h, w, K});
      for (i64 b = 0; b < n; ++b)
        for (i64 y = 0; y < h; ++y)
          for (i64 x = 0; x < w; ++x) {
            const i64 pos = (b * h + y) * w + x;
            std::vector<double> logits(static_cast<std::size_t>(K));
            for (i64 j = 0; j < K; ++j) {
              const i64 gy = j / k - k / 2, gx = j % k - k / 2;
              coords.data()[static_cast<std::size_t>((pos * K + j) * 2)] =
                  static_cast<double>(y + gy * rate) + value(walk, at4(walk.shape(), b, 2 * j, y, x));
              coords.data()[static_cast<std::size_t>((pos * K + j) * 2 + 1)] =
                  static_cast<double>(x + gx * rate) + value(walk, at4(walk.shape(), b, 2 * j + 1, y, x));
              for (i64 g = 0; g < G; ++g) {
                weights.data()[static_cast<std::size_t>((pos * K + j) * G + g)] =
                    value(raw, at4(raw.shape(), b, j * G + g, y, x));
              }
              logits[static_cast<std::size_t>(j)] = value(raw, at4(raw.shape(), b, K * G + j, y, x));
            }
            const auto a = softmax_reference(logits);
            for (i64 j = 0; j < K; ++j) aff.data()[static_cast<std::size_t>(pos * K + j)] = a[static_cast<std::size_t>(j)];
          }
      const Tensor mq = dmc_reference(H, coords, weights, aff);
      const double bq = value(module.beta, static_cast<i64>(q));
      for (i64 i = 0; i < msg.numel(); ++i) msg.data()[static_cast<std::size_t>(i)] += bq * value(mq, i);
    }
    Tensor next({n, c, h, w});
    for (i64 b = 0; b < n; ++b)
      for (i64 ch = 0; ch < c; ++ch)
        for (i64 y = 0; y < h; ++y)
          for (i64 x = 0; x < w; ++x) {
            const i64 i = at4(next.shape(), b, ch, y, x);
            const double v = value(F, i) + value(module.alpha, ch) * value(msg, i);
            next.data()[static_cast<std::size_t>(i)] = v > 0.0 ? v : 0.0;
          }
    H = next;
  }
  return H;
}

Tensor dense_attention(const Tensor& Q, const Tensor& K, const Tensor& V, double scale, MacCounter* counter) {
  if (Q.rank() != 2 || K.shape() != Q.shape() || V.rank() != 2 || V.dim(0) != Q.dim(0)) {
    throw ShapeError("dense_attention expects Q, K [P,d] and V [P,d_v]");
  }
  const i64 p = Q.dim(0), d = Q.dim(1), dv = V.dim(1);
  if (p > kMaxSpatial * kMaxSpatial) throw ShapeError("dense_attention oracle is limited to 256 positions");
  Tensor out({p, dv});
  for (i64 i = 0; i < p; ++i) {
    std::vector<double> logits(static_cast<std::size_t>(p));
    for (i64 j = 0; j < p; ++j) {
      double acc = 0.0;
      for (i64 t = 0; t < d; ++t) {
        acc += value(Q, i * d + t) * value(K, j * d + t);
        count(counter, 1);
      }
      logits[static_cast<std::size_t>(j)] = acc * scale;
    }
    const auto a = softmax_reference(logits);
    for (i64 t = 0; t < dv; ++t) {
      double acc = 0.0;
      for (i64 j = 0; j < p; ++j) {
        acc += a[static_cast<std::size_t>(j)] * value(V, j * dv + t);
        count(counter, 1);
      }
      out.data()[static_cast<std::size_t>(i * dv + t)] = acc;
    }
  }
  return out;
}

Tensor dgmn2_attention_reference(const Tensor& features, const Dgmn2Attention& attn, MacCounter* counter,
                                 Tensor* attention) {
  const auto& cfg = attn.config();
  const i64 n = features.dim(0), d = features.dim(1), h = features.dim(2), w = features.dim(3);
  check_spatial(h, w, "dgmn2 attention");
  const i64 heads = cfg.heads, hd = d / heads, K = cfg.K;
  const i64 S = static_cast<i64>(cfg.rates.size()), M = K * S;
  const int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(K))));
  const double sc = cfg.logit_scale ? *cfg.logit_scale : 1.0 / std::sqrt(static_cast<double>(hd));

  const auto qmap = project_map(features, attn.q_proj.weight, attn.q_proj.bias, counter);
  const auto kmap = project_map(features, attn.k_proj.weight, attn.k_proj.bias, counter);
  const auto vmap = project_map(features, attn.v_proj.weight, attn.v_proj.bias, counter);

  // Node coordinates per (n, y, x, node) across all rates, node = q*K + j.
  std::vector<double> cy(static_cast<std::size_t>(n * h * w * M)), cx(cy.size());
  for (i64 q = 0; q < S; ++q) {
    const int rate = cfg.rates[static_cast<std::size_t>(q)];
    Tensor walk;
    if (cfg.walks) {
      walk = conv2d_reference(features.detach(), attn.walk[static_cast<std::size_t>(q)].conv.weight,
                              attn.walk[static_cast<std::size_t>(q)].conv.bias,
                              {.stride = 1, .padding = rate, .dilation = rate}, counter);
    }
    for (i64 b = 0; b < n; ++b)
      for (i64 y = 0; y < h; ++y)
        for (i64 x = 0; x < w; ++x)
          for (i64 j = 0; j < K; ++j) {
            double by = 0.0, bx = 0.0;
            if (cfg.anchor == GridAnchor::kCentered) {
              by = static_cast<double>(y + (j / k - k / 2) * rate);
              bx = static_cast<double>(x + (j % k - k / 2) * rate);
            } else {
              by = static_cast<double>((j / k) * rate);
              bx = static_cast<double>((j % k) * rate);
            }
            if (cfg.walks) {
              by += value(walk, at4(walk.shape(), b, 2 * j, y, x));
              bx += value(walk, at4(walk.shape(), b, 2 * j + 1, y, x));
            }
            const auto idx = static_cast<std::size_t>(((b * h + y) * w + x) * M + q * K + j);
            cy[idx] = by;
            cx[idx] = bx;
          }
  }

  std::vector<double> msg(static_cast<std::size_t>(n * h * w * d), 0.0);
  if (attention) *attention = Tensor({n, heads, h * w, M});
  for (i64 b = 0; b < n; ++b)
    for (i64 y = 0; y < h; ++y)
      for (i64 x = 0; x < w; ++x) {
        const i64 pos = (b * h + y) * w + x;
        // Sample every node's key and value across all d channels.
        std::vector<double> ks(static_cast<std::size_t>(M * d)), vs(ks.size());
        for (i64 m = 0; m < M; ++m)
          for (i64 ch = 0; ch < d; ++ch) {
            const auto idx = static_cast<std::size_t>(pos * M + m);
            ks[static_cast<std::size_t>(m * d + ch)] = bilerp(kmap, d, h, w, b, ch, cy[idx], cx[idx]);
            vs[static_cast<std::size_t>(m * d + ch)] = bilerp(vmap, d, h, w, b, ch, cy[idx], cx[idx]);
          }
        count(counter, 2 * M * d * 4);
        for (i64 hh = 0; hh < heads; ++hh) {
          std::vector<double> logits(static_cast<std::size_t>(M));
          for (i64 m = 0; m < M; ++m) {
            const auto idx = static_cast<std::size_t>(pos * M + m);
            double dot = 0.0;
            for (i64 t = 0; t < hd; ++t) {
              const i64 ch = hh * hd + t;
              dot += qmap[static_cast<std::size_t>(((b * d + ch) * h + y) * w + x)] * ks[static_cast<std::size_t>(m * d + ch)];
            }
            const double oy = (cy[idx] - static_cast<double>(y)) * attn.relpos_offset_scale;
            const double ox = (cx[idx] - static_cast<double>(x)) * attn.relpos_offset_scale;
            logits[static_cast<std::size_t>(m)] =
                dot * sc + table_lookup(attn.rel_height, hh, oy) + table_lookup(attn.rel_width, hh, ox);
          }
          count(counter, M * hd + M * 4);
          const auto a = softmax_reference(logits);
          if (attention) {
            for (i64 m = 0; m < M; ++m)
              attention->data()[static_cast<std::size_t>(((b * heads + hh) * h * w + y * w + x) * M + m)] =
                  a[static_cast<std::size_t>(m)];
          }
          for (i64 t = 0; t < hd; ++t) {
            const i64 ch = hh * hd + t;
            double acc = 0.0;
            for (i64 m = 0; m < M; ++m) acc += a[static_cast<std::size_t>(m)] * vs[static_cast<std::size_t>(m * d + ch)];
            msg[static_cast<std::size_t>(pos * d + ch)] = acc;
          }
          count(counter, M * hd);
        }
      }

  Tensor out({n, d, h, w});
  for (i64 b = 0; b < n; ++b)
    for (i64 y = 0; y < h; ++y)
      for (i64 x = 0; x < w; ++x)
        for (i64 o = 0; o < d; ++o) {
          double acc = value(attn.out_proj.bias, o);
          for (i64 i = 0; i < d; ++i)
            acc += value(attn.out_proj.weight, o * d + i) * msg[static_cast<std::size_t>(((b * h + y) * w + x) * d + i)];
          out.data()[static_cast<std::size_t>(at4(out.shape(), b, o, y, x))] = acc;
        }
  count(counter, n * h * w * d * d);
  return out;
}

Tensor dense_attention_layer(const Tensor& features, const Dgmn2Attention& attn, MacCounter* counter) {
  const auto& cfg = attn.config();
  const i64 n = features.dim(0), d = features.dim(1), h = features.dim(2), w = features.dim(3);
  check_spatial(h, w, "dense attention");
  const i64 heads = cfg.heads, hd = d / heads, p = h * w;
  const double sc = cfg.logit_scale ? *cfg.logit_scale : 1.0 / std::sqrt(static_cast<double>(hd));
  const auto qmap = project_map(features, attn.q_proj.weight, attn.q_proj.bias, counter);
  const auto kmap = project_map(features, attn.k_proj.weight, attn.k_proj.bias, counter);
  const auto vmap = project_map(features, attn.v_proj.weight, attn.v_proj.bias, counter);
  Tensor out({n, d, h, w});
  for (i64 b = 0; b < n; ++b) {
    std::vector<double> msg(static_cast<std::size_t>(p * d));
    for (i64 hh = 0; hh < heads; ++hh) {
      Tensor Q({p, hd}), Kt({p, hd}), V({p, hd});
      for (i64 i = 0; i < p; ++i)
        for (i64 t = 0; t < hd; ++t) {
          const auto src = static_cast<std::size_t>((b * d + hh * hd + t) * p + i);
          Q.data()[static_cast<std::size_t>(i * hd + t)] = qmap[src];
          Kt.data()[static_cast<std::size_t>(i * hd + t)] = kmap[src];
          V.data()[static_cast<std::size_t>(i * hd + t)] = vmap[src];
        }
      const Tensor o = dense_attention(Q, Kt, V, sc, counter);
      for (i64 i = 0; i < p; ++i)
        for (i64 t = 0; t < hd; ++t) msg[static_cast<std::size_t>(i * d + hh * hd + t)] = value(o, i * hd + t);
    }
    for (i64 i = 0; i < p; ++i)
      for (i64 oc = 0; oc < d; ++oc) {
        double acc = value(attn.out_proj.bias, oc);
        for (i64 ic = 0; ic < d; ++ic) acc += value(attn.out_proj.weight, oc * d + ic) * msg[static_cast<std::size_t>(i * d + ic)];
        out.data()[static_cast<std::size_t>((b * d + oc) * p + i)] = acc;
      }
  }
  count(counter, n * p * d * d);
  return out;
}

}  // namespace dgmn::oracle
