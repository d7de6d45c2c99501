#include "dgmn/dgmn.hpp"

namespace dgmn {

using i64 = std::int64_t;

void DgmnConfig::validate() const {
  if (channels < 1) throw ConfigError("DGMN channels must be positive");
  if (groups < 1 || channels % groups != 0) {
    throw ConfigError("DGMN groups=" + std::to_string(groups) + " must divide channels=" + std::to_string(channels));
  }
  checked_grid_side(K);
  if (iterations < 1) throw ConfigError("DGMN needs T >= 1 iterations");
  if (rates.empty()) throw ConfigError("DGMN needs at least one sampling rate");
  for (int r : rates)
    if (r < 1) throw ConfigError("sampling rates must be >= 1");
}

DynamicKernel split_dynamic_kernel(const Tensor& raw, int K, int G) {
  if (raw.rank() != 4 || raw.dim(1) != static_cast<i64>(K) * G + K) {
    throw ShapeError("dynamic kernel expects " + std::to_string(K * G + K) + " channels, got " +
                     shape_str(raw.shape()));
  }
  const i64 n = raw.dim(0), h = raw.dim(2), w = raw.dim(3);
  Tensor nhwc = permute(raw, {0, 2, 3, 1});
  DynamicKernel dk;
  dk.weights = reshape(slice(nhwc, 3, 0, static_cast<i64>(K) * G), {n, h, w, K, G});
  dk.affinities = softmax(slice(nhwc, 3, static_cast<i64>(K) * G, K), 3);
  return dk;
}

KernelPredictor::KernelPredictor(i64 channels, int rate, int k, int g) : K(k), G(g) {
  conv = Conv2d(channels, static_cast<i64>(K) * G + K, 3, Conv2dParams{.stride = 1, .padding = rate, .dilation = rate});
}

DynamicKernel KernelPredictor::forward(const Tensor& features) const {
  return split_dynamic_kernel(conv.forward(features), K, G);
}

void KernelPredictor::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  conv.collect_parameters(join_name(prefix, "conv"), out);
}

Tensor dynamic_message(const Tensor& features, const Tensor& resolved, const DynamicKernel& kernel, int G) {
  const i64 n = features.dim(0), c = features.dim(1), h = features.dim(2), w = features.dim(3);
  if (c % G != 0) throw ConfigError("groups must divide channels");
  const i64 K = resolved.dim(3);
  if (resolved.shape() != Shape{n, h, w, K, 2}) {
    throw ShapeError("resolved coords " + shape_str(resolved.shape()) + " do not match features " +
                     shape_str(features.shape()));
  }
  if (kernel.weights.shape() != Shape{n, h, w, K, G} || kernel.affinities.shape() != Shape{n, h, w, K}) {
    throw ShapeError("dynamic kernel " + shape_str(kernel.weights.shape()) + "/" +
                     shape_str(kernel.affinities.shape()) + " does not match features " + shape_str(features.shape()));
  }
  Tensor sampled = bilinear_sample(features, reshape(resolved, {n, h * w * K, 2}));  // [N, HWK, C]
  sampled = reshape(sampled, {n, h, w, K, G, c / G});
  Tensor coeff = mul(reshape(kernel.weights, {n, h, w, K, G, 1}), reshape(kernel.affinities, {n, h, w, K, 1, 1}));
  Tensor msg = sum(mul(sampled, coeff), 3);  // [N, H, W, G, C/G]
  return permute(reshape(msg, {n, h, w, c}), {0, 3, 1, 2});
}

DgmnModule::DgmnModule(DgmnConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto s = static_cast<i64>(cfg_.rates.size());
  for (int r : cfg_.rates) {
    walk.emplace_back(cfg_.channels, r, cfg_.K);
    KernelPredictor kp(cfg_.channels, r, cfg_.K, cfg_.groups);
    init_trunc_normal(kp.conv, rng);
    kernel.push_back(std::move(kp));
  }
  beta = make_parameter(Tensor({s}, 1.0 / static_cast<double>(s)));
  alpha = make_parameter(Tensor::zeros({cfg_.channels}));
}

Tensor DgmnModule::forward(const Tensor& F, DgmnTrace* trace) const {
  if (F.rank() != 4 || F.dim(1) != cfg_.channels) {
    throw ShapeError("DGMN expects [N," + std::to_string(cfg_.channels) + ",H,W], got " + shape_str(F.shape()));
  }
  const Tensor alpha_c = reshape(alpha, {cfg_.channels, 1, 1});
  Tensor H = F;
  for (int t = 0; t < cfg_.iterations; ++t) {
    SamplingField field = build_sampling_field(H, cfg_.rates, cfg_.K, walk);
    std::vector<DynamicKernel> kernels;
    Tensor m;
    for (std::size_t q = 0; q < cfg_.rates.size(); ++q) {
      DynamicKernel dk = kernel[q].forward(H);
      Tensor mq = mul(dynamic_message(H, field.resolved[q], dk, cfg_.groups),
                      slice(beta, 0, static_cast<i64>(q), 1));
      m = m.defined() ? add(m, mq) : mq;
      kernels.push_back(std::move(dk));
    }
    H = relu(add(F, mul(m, alpha_c)));
    if (trace) {
      trace->fields.push_back(std::move(field));
      trace->kernels.push_back(std::move(kernels));
    }
  }
  return H;
}

void DgmnModule::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  for (std::size_t q = 0; q < walk.size(); ++q) {
    walk[q].collect_parameters(join_name(prefix, "walk" + std::to_string(q)), out);
    kernel[q].collect_parameters(join_name(prefix, "kernel" + std::to_string(q)), out);
  }
  out.push_back({join_name(prefix, "beta"), beta});
  out.push_back({join_name(prefix, "alpha"), alpha});
}

}  // namespace dgmn
