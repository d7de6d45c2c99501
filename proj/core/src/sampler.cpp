#include "dgmn/sampler.hpp"

#include <cmath>

#include "dgmn/fault.hpp"

namespace dgmn {

namespace testing {
namespace {
Fault g_fault = Fault::kNone;
}
void inject_fault(Fault f) { g_fault = f; }
Fault active_fault() { return g_fault; }
}  // namespace testing

using i64 = std::int64_t;

int checked_grid_side(int K) {
  if (K < 1) throw ConfigError("K must be positive, got " + std::to_string(K));
  const int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(K))));
  if (k * k != K) throw ConfigError("K must be a perfect square, got " + std::to_string(K));
  return k;
}

std::vector<std::array<int, 2>> grid_offsets(int rate, int K) {
  const int k = checked_grid_side(K);
  if (rate < 1) throw ConfigError("sampling rate must be >= 1, got " + std::to_string(rate));
  const int lo = -(k / 2);
  std::vector<std::array<int, 2>> out;
  out.reserve(static_cast<std::size_t>(K));
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) out.push_back({(lo + a) * rate, (lo + b) * rate});
  return out;
}

Tensor uniform_grid(i64 H, i64 W, int rate, int K, GridAnchor anchor) {
  const int k = checked_grid_side(K);
  if (rate < 1) throw ConfigError("sampling rate must be >= 1, got " + std::to_string(rate));
  Tensor grid({H, W, K, 2});
  auto g = grid.data();
  const auto offs = grid_offsets(rate, K);
  for (i64 y = 0; y < H; ++y)
    for (i64 x = 0; x < W; ++x)
      for (int j = 0; j < K; ++j) {
        const auto base = static_cast<std::size_t>(((y * W + x) * K + j) * 2);
        if (anchor == GridAnchor::kCentered) {
          g[base] = static_cast<double>(y + offs[static_cast<std::size_t>(j)][0]);
          g[base + 1] = static_cast<double>(x + offs[static_cast<std::size_t>(j)][1]);
        } else {
          g[base] = static_cast<double>((j / k) * rate);
          g[base + 1] = static_cast<double>((j % k) * rate);
        }
      }
  return grid;
}

Tensor bilinear_sample(const Tensor& map, const Tensor& coords) {
  if (map.rank() != 4 || coords.rank() != 3 || coords.dim(2) != 2 || coords.dim(0) != map.dim(0)) {
    throw ShapeError("bilinear_sample map " + shape_str(map.shape()) + " with coords " + shape_str(coords.shape()));
  }
  const i64 n = map.dim(0), c = map.dim(1), h = map.dim(2), w = map.dim(3), p = coords.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n * p * c), 0.0);
  const double* mv = map.data().data();
  const double* cv = coords.data().data();

  for (i64 b = 0; b < n; ++b) {
    const double* plane = mv + b * c * h * w;
    for (i64 i = 0; i < p; ++i) {
      const double y = cv[(b * p + i) * 2], x = cv[(b * p + i) * 2 + 1];
      const double fy = std::floor(y), fx = std::floor(x);
      const i64 y0 = static_cast<i64>(fy), x0 = static_cast<i64>(fx);
      const double ly = y - fy, lx = x - fx;
      const double wts[4] = {(1 - ly) * (1 - lx), (1 - ly) * lx, ly * (1 - lx), ly * lx};
      const i64 ys[4] = {y0, y0, y0 + 1, y0 + 1};
      const i64 xs[4] = {x0, x0 + 1, x0, x0 + 1};
      double* o = out.data() + (b * p + i) * c;
      for (int k = 0; k < 4; ++k) {
        if (ys[k] < 0 || ys[k] >= h || xs[k] < 0 || xs[k] >= w || wts[k] == 0.0) continue;
        const double* src = plane + ys[k] * w + xs[k];
        for (i64 ch = 0; ch < c; ++ch) o[ch] += wts[k] * src[ch * h * w];
      }
    }
  }

  return make_result(Shape{n, p, c}, std::move(out), "bilinear_sample", {map, coords},
                     [map, coords, n, c, h, w, p](std::span<const double> g) mutable {
                       const double* mv = map.data().data();
                       const double* cv = coords.data().data();
                       double* gm = map.requires_grad() ? map.grad().data() : nullptr;
                       double* gc = coords.requires_grad() ? coords.grad().data() : nullptr;
                       const double sign =
                           testing::active_fault() == testing::Fault::kBilinearBackwardSign ? -1.0 : 1.0;
                       for (i64 b = 0; b < n; ++b) {
                         const double* plane = mv + b * c * h * w;
                         for (i64 i = 0; i < p; ++i) {
                           const double y = cv[(b * p + i) * 2], x = cv[(b * p + i) * 2 + 1];
                           const double fy = std::floor(y), fx = std::floor(x);
                           const i64 y0 = static_cast<i64>(fy), x0 = static_cast<i64>(fx);
                           const double ly = y - fy, lx = x - fx;
                           const double* go = g.data() + (b * p + i) * c;
                           auto inside = [&](i64 yy, i64 xx) { return yy >= 0 && yy < h && xx >= 0 && xx < w; };
                           const bool in00 = inside(y0, x0), in01 = inside(y0, x0 + 1);
                           const bool in10 = inside(y0 + 1, x0), in11 = inside(y0 + 1, x0 + 1);
                           if (gm) {
                             double* gp = gm + b * c * h * w;
                             const double wts[4] = {(1 - ly) * (1 - lx), (1 - ly) * lx, ly * (1 - lx), ly * lx};
                             const bool ins[4] = {in00, in01, in10, in11};
                             const i64 offs[4] = {y0 * w + x0, y0 * w + x0 + 1, (y0 + 1) * w + x0,
                                                  (y0 + 1) * w + x0 + 1};
                             for (int k = 0; k < 4; ++k) {
                               if (!ins[k] || wts[k] == 0.0) continue;
                               for (i64 ch = 0; ch < c; ++ch) gp[ch * h * w + offs[k]] += wts[k] * go[ch];
                             }
                           }
                           if (gc) {
                             double dy = 0.0, dx = 0.0;
                             for (i64 ch = 0; ch < c; ++ch) {
                               const double* pl = plane + ch * h * w;
                               const double v00 = in00 ? pl[y0 * w + x0] : 0.0;
                               const double v01 = in01 ? pl[y0 * w + x0 + 1] : 0.0;
                               const double v10 = in10 ? pl[(y0 + 1) * w + x0] : 0.0;
                               const double v11 = in11 ? pl[(y0 + 1) * w + x0 + 1] : 0.0;
                               dy += go[ch] * ((v10 - v00) * (1 - lx) + (v11 - v01) * lx);
                               dx += go[ch] * ((v01 - v00) * (1 - ly) + (v11 - v10) * ly);
                             }
                             gc[(b * p + i) * 2] += sign * dy;
                             gc[(b * p + i) * 2 + 1] += sign * dx;
                           }
                         }
                       }
                     });
}

WalkPredictor::WalkPredictor(i64 channels, int rate, int K) : rate_(rate), k_(K) {
  checked_grid_side(K);
  if (rate < 1) throw ConfigError("walk predictor rate must be >= 1");
  conv = Conv2d(channels, 2 * K, 3, Conv2dParams{.stride = 1, .padding = rate, .dilation = rate});
}

Tensor WalkPredictor::forward(const Tensor& features) const {
  const i64 n = features.dim(0), h = features.dim(2), w = features.dim(3);
  Tensor raw = conv.forward(features);                       // [N, 2K, H, W]
  return reshape(permute(raw, {0, 2, 3, 1}), {n, h, w, k_, 2});  // channel 2j + {0,1} -> node j
}

void WalkPredictor::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  conv.collect_parameters(join_name(prefix, "conv"), out);
}

Tensor resolve_coords(const Tensor& base, const Tensor& walks) {
  if (base.rank() != 4 || walks.rank() != 5 || Shape(walks.shape().begin() + 1, walks.shape().end()) != base.shape()) {
    throw ShapeError("resolve_coords base " + shape_str(base.shape()) + " vs walks " + shape_str(walks.shape()));
  }
  return add(walks, base);
}

SamplingField build_sampling_field(const Tensor& features, const std::vector<int>& rates, int K,
                                   const std::vector<WalkPredictor>& predictors, GridAnchor anchor) {
  if (!predictors.empty() && predictors.size() != rates.size()) {
    throw ConfigError("need one walk predictor per sampling rate");
  }
  SamplingField f;
  f.rates = rates;
  f.K = K;
  const i64 n = features.dim(0), h = features.dim(2), w = features.dim(3);
  for (std::size_t q = 0; q < rates.size(); ++q) {
    Tensor base = uniform_grid(h, w, rates[q], K, anchor);
    Tensor walks = predictors.empty() ? Tensor::zeros({n, h, w, K, 2}) : predictors[q].forward(features);
    f.resolved.push_back(resolve_coords(base, walks));
    f.base.push_back(std::move(base));
    f.walks.push_back(std::move(walks));
  }
  return f;
}

}  // namespace dgmn
