#include "dgmn/dgmn2.hpp"

#include <algorithm>
#include <cmath>

namespace dgmn {

using i64 = std::int64_t;

double Dgmn2Config::scale() const {
  return logit_scale ? *logit_scale : 1.0 / std::sqrt(static_cast<double>(head_dim()));
}

void Dgmn2Config::validate() const {
  if (dim < 1 || heads < 1 || dim % heads != 0) {
    throw ConfigError("DGMN2 dim=" + std::to_string(dim) + " must be divisible by heads=" + std::to_string(heads));
  }
  checked_grid_side(K);
  if (rates.empty()) throw ConfigError("DGMN2 needs at least one sampling rate");
  for (int r : rates)
    if (r < 1) throw ConfigError("sampling rates must be >= 1");
  if (ffn_expansion < 1) throw ConfigError("ffn expansion must be >= 1");
  if (relpos_extent < 1 || relpos_extent % 2 == 0) {
    throw ConfigError("relative position extent must be odd and positive, got " + std::to_string(relpos_extent));
  }
}

double interp_table(std::span<const double> table, double offset) {
  const auto r = static_cast<i64>(table.size());
  if (r == 1) return table[0];
  const double u = std::clamp(offset + static_cast<double>(r - 1) / 2.0, 0.0, static_cast<double>(r - 1));
  const i64 i0 = std::min(static_cast<i64>(std::floor(u)), r - 2);
  const double f = u - static_cast<double>(i0);
  return table[static_cast<std::size_t>(i0)] * (1.0 - f) + table[static_cast<std::size_t>(i0) + 1] * f;
}

namespace {

// Returns (lower index, fraction, slope-active) for an offset into a table of extent r.
struct InterpAt {
  i64 i0;
  double f;
  bool inside;
};

InterpAt locate(i64 r, double offset) {
  const double raw = offset + static_cast<double>(r - 1) / 2.0;
  const double u = std::clamp(raw, 0.0, static_cast<double>(r - 1));
  const i64 i0 = std::min(static_cast<i64>(std::floor(u)), r - 2);
  return {i0, u - static_cast<double>(i0), raw > 0.0 && raw < static_cast<double>(r - 1)};
}

}  // namespace

Tensor relpos_bias(const Tensor& offsets, const Tensor& height, const Tensor& width, double offset_scale) {
  if (offsets.rank() != 3 || offsets.dim(2) != 2 || height.rank() != 2 || height.shape() != width.shape()) {
    throw ShapeError("relpos_bias offsets " + shape_str(offsets.shape()) + " tables " + shape_str(height.shape()) +
                     "/" + shape_str(width.shape()));
  }
  const i64 n = offsets.dim(0), m = offsets.dim(1), heads = height.dim(0), r = height.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n * heads * m));
  const double* ov = offsets.data().data();
  const double* hv = height.data().data();
  const double* wv = width.data().data();
  for (i64 b = 0; b < n; ++b)
    for (i64 hd = 0; hd < heads; ++hd)
      for (i64 i = 0; i < m; ++i) {
        const double dy = ov[(b * m + i) * 2] * offset_scale;
        const double dx = ov[(b * m + i) * 2 + 1] * offset_scale;
        out[static_cast<std::size_t>((b * heads + hd) * m + i)] =
            interp_table({hv + hd * r, static_cast<std::size_t>(r)}, dy) +
            interp_table({wv + hd * r, static_cast<std::size_t>(r)}, dx);
      }
  return make_result(Shape{n, heads, m}, std::move(out), "relpos_bias", {offsets, height, width},
                     [offsets, height, width, offset_scale, n, m, heads, r](std::span<const double> g) mutable {
                       const double* ov = offsets.data().data();
                       const double* hv = height.data().data();
                       const double* wv = width.data().data();
                       double* go = offsets.requires_grad() ? offsets.grad().data() : nullptr;
                       double* gh = height.requires_grad() ? height.grad().data() : nullptr;
                       double* gw = width.requires_grad() ? width.grad().data() : nullptr;
                       for (i64 b = 0; b < n; ++b)
                         for (i64 hd = 0; hd < heads; ++hd)
                           for (i64 i = 0; i < m; ++i) {
                             const double gv = g[static_cast<std::size_t>((b * heads + hd) * m + i)];
                             if (r == 1) {
                               if (gh) gh[hd] += gv;
                               if (gw) gw[hd] += gv;
                               continue;
                             }
                             const auto ly = locate(r, ov[(b * m + i) * 2] * offset_scale);
                             const auto lx = locate(r, ov[(b * m + i) * 2 + 1] * offset_scale);
                             if (gh) {
                               gh[hd * r + ly.i0] += gv * (1.0 - ly.f);
                               gh[hd * r + ly.i0 + 1] += gv * ly.f;
                             }
                             if (gw) {
                               gw[hd * r + lx.i0] += gv * (1.0 - lx.f);
                               gw[hd * r + lx.i0 + 1] += gv * lx.f;
                             }
                             if (go) {
                               if (ly.inside)
                                 go[(b * m + i) * 2] += gv * offset_scale * (hv[hd * r + ly.i0 + 1] - hv[hd * r + ly.i0]);
                               if (lx.inside)
                                 go[(b * m + i) * 2 + 1] +=
                                     gv * offset_scale * (wv[hd * r + lx.i0 + 1] - wv[hd * r + lx.i0]);
                             }
                           }
                     });
}

Dgmn2Attention::Dgmn2Attention(Dgmn2Config cfg, Rng& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const i64 d = cfg_.dim;
  q_proj = Linear(d, d);
  k_proj = Conv2d(d, d, 1, {});
  v_proj = Conv2d(d, d, 1, {});
  out_proj = Linear(d, d);
  init_trunc_normal(q_proj, rng);
  init_trunc_normal(k_proj, rng);
  init_trunc_normal(v_proj, rng);
  if (cfg_.walks) {
    for (int r : cfg_.rates) walk.emplace_back(d, r, cfg_.K);
  }
  rel_height = make_parameter(rng.truncated_normal_tensor({cfg_.heads, cfg_.relpos_extent}, 0.02));
  rel_width = make_parameter(rng.truncated_normal_tensor({cfg_.heads, cfg_.relpos_extent}, 0.02));
  init_trunc_normal(out_proj, rng);
}

Dgmn2Attention::Sampled Dgmn2Attention::sample(const Tensor& features, std::size_t q) const {
  const i64 n = features.dim(0), h = features.dim(2), w = features.dim(3);
  const i64 K = cfg_.K, heads = cfg_.heads, hd = cfg_.head_dim();
  Tensor base = uniform_grid(h, w, cfg_.rates[q], cfg_.K, cfg_.anchor);
  Tensor walks = cfg_.walks ? walk[q].forward(features) : Tensor::zeros({n, h, w, K, 2});
  Tensor resolved = resolve_coords(base, walks);
  Tensor coords = reshape(resolved, {n, h * w * K, 2});
  auto gather = [&](const Conv2d& proj) {
    Tensor s = bilinear_sample(proj.forward(features), coords);  // [N, HWK, d]
    return permute(reshape(s, {n, h * w, K, heads, hd}), {0, 3, 1, 2, 4});
  };
  return {gather(k_proj), gather(v_proj), resolved};
}

Tensor Dgmn2Attention::forward_tokens(const Tensor& tokens, AttentionTrace* trace) const {
  if (tokens.rank() != 4 || tokens.dim(3) != cfg_.dim) {
    throw ShapeError("DGMN2 attention expects [N,H,W," + std::to_string(cfg_.dim) + "] tokens, got " +
                     shape_str(tokens.shape()));
  }
  const i64 n = tokens.dim(0), h = tokens.dim(1), w = tokens.dim(2);
  const i64 heads = cfg_.heads, hd = cfg_.head_dim(), K = cfg_.K;
  const i64 hw = h * w;
  Tensor features = permute(tokens, {0, 3, 1, 2});

  Tensor query = reshape(permute(reshape(q_proj.forward(tokens), {n, hw, heads, hd}), {0, 2, 1, 3}),
                         {n, heads, hw, 1, hd});

  // Query coordinates broadcast against resolved [N, H, W, K, 2].
  Tensor qpos({h, w, 1, 2});
  for (i64 y = 0; y < h; ++y)
    for (i64 x = 0; x < w; ++x) {
      qpos.data()[static_cast<std::size_t>((y * w + x) * 2)] = static_cast<double>(y);
      qpos.data()[static_cast<std::size_t>((y * w + x) * 2 + 1)] = static_cast<double>(x);
    }

  std::vector<Tensor> keys, values, biases;
  if (trace) trace->resolved.clear();
  for (std::size_t q = 0; q < cfg_.rates.size(); ++q) {
    auto s = sample(features, q);
    Tensor offsets = reshape(sub(s.resolved, qpos), {n, hw * K, 2});
    biases.push_back(reshape(relpos_bias(offsets, rel_height, rel_width, relpos_offset_scale), {n, heads, hw, K}));
    keys.push_back(std::move(s.keys));
    values.push_back(std::move(s.values));
    if (trace) trace->resolved.push_back(s.resolved);
  }
  Tensor k_all = keys.size() == 1 ? keys[0] : concat(keys, 3);
  Tensor v_all = values.size() == 1 ? values[0] : concat(values, 3);
  Tensor bias = biases.size() == 1 ? biases[0] : concat(biases, 3);

  Tensor logits = add(scale(sum(mul(query, k_all), 4), cfg_.scale()), bias);  // [N, heads, HW, K*S]
  Tensor attn = softmax(logits, 3);
  if (trace) trace->attention = attn;
  const i64 total = k_all.dim(3);
  Tensor msg = sum(mul(reshape(attn, {n, heads, hw, total, 1}), v_all), 3);  // [N, heads, HW, hd]
  msg = reshape(permute(msg, {0, 2, 1, 3}), {n, h, w, cfg_.dim});
  return out_proj.forward(msg);
}

Tensor Dgmn2Attention::forward(const Tensor& features, AttentionTrace* trace) const {
  if (features.rank() != 4) throw ShapeError("DGMN2 attention expects [N,d,H,W], got " + shape_str(features.shape()));
  return permute(forward_tokens(permute(features, {0, 2, 3, 1}), trace), {0, 3, 1, 2});
}

void Dgmn2Attention::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  q_proj.collect_parameters(join_name(prefix, "q"), out);
  k_proj.collect_parameters(join_name(prefix, "k"), out);
  v_proj.collect_parameters(join_name(prefix, "v"), out);
  for (std::size_t q = 0; q < walk.size(); ++q) walk[q].collect_parameters(join_name(prefix, "walk" + std::to_string(q)), out);
  out.push_back({join_name(prefix, "rel_height"), rel_height});
  out.push_back({join_name(prefix, "rel_width"), rel_width});
  out_proj.collect_parameters(join_name(prefix, "proj"), out);
}

Dgmn2Layer::Dgmn2Layer(Dgmn2Config cfg, Rng& rng)
    : norm1(cfg.dim), attn(cfg, rng), alpha(make_parameter(Tensor::zeros({cfg.dim}))), norm2(cfg.dim) {
  const i64 hidden = cfg.dim * cfg.ffn_expansion;
  fc1 = Linear(cfg.dim, hidden);
  fc2 = Linear(hidden, cfg.dim);
  init_trunc_normal(fc1, rng);
  init_trunc_normal(fc2, rng);
}

Tensor Dgmn2Layer::forward_tokens(const Tensor& tokens, AttentionTrace* trace) const {
  Tensor x = add(tokens, mul(attn.forward_tokens(norm1.forward(tokens), trace), alpha));
  return add(x, fc2.forward(gelu(fc1.forward(norm2.forward(x)))));
}

Tensor Dgmn2Layer::forward(const Tensor& F, AttentionTrace* trace) const {
  if (F.rank() != 4) throw ShapeError("DGMN2 layer expects [N,d,H,W], got " + shape_str(F.shape()));
  return permute(forward_tokens(permute(F, {0, 2, 3, 1}), trace), {0, 3, 1, 2});
}

void Dgmn2Layer::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  norm1.collect_parameters(join_name(prefix, "norm1"), out);
  attn.collect_parameters(join_name(prefix, "attn"), out);
  out.push_back({join_name(prefix, "alpha"), alpha});
  norm2.collect_parameters(join_name(prefix, "norm2"), out);
  fc1.collect_parameters(join_name(prefix, "fc1"), out);
  fc2.collect_parameters(join_name(prefix, "fc2"), out);
}

}  // namespace dgmn
