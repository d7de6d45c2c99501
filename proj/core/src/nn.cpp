#include "dgmn/nn.hpp"

namespace dgmn {

NamedTensors Module::named_parameters() const {
  NamedTensors out;
  collect_parameters("", out);
  return out;
}

NamedTensors Module::named_buffers() const {
  NamedTensors out;
  collect_buffers("", out);
  return out;
}

std::vector<Tensor> Module::parameters() const {
  std::vector<Tensor> out;
  for (auto& p : named_parameters()) out.push_back(p.tensor);
  return out;
}

std::int64_t Module::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : named_parameters()) n += p.tensor.numel();
  return n;
}

void Module::zero_grad() const {
  for (auto& p : named_parameters()) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

Tensor make_parameter(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

Conv2d::Conv2d(std::int64_t in, std::int64_t out, int kernel, Conv2dParams p, bool with_bias) : params(p) {
  if (p.groups < 1 || in % p.groups != 0 || out % p.groups != 0) {
    throw ConfigError("Conv2d groups=" + std::to_string(p.groups) + " must divide in=" + std::to_string(in) +
                      " and out=" + std::to_string(out));
  }
  weight = make_parameter(Tensor::zeros({out, in / p.groups, kernel, kernel}));
  if (with_bias) bias = make_parameter(Tensor::zeros({out}));
}

void Conv2d::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  out.push_back({join_name(prefix, "weight"), weight});
  if (bias.defined()) out.push_back({join_name(prefix, "bias"), bias});
}

Linear::Linear(std::int64_t in, std::int64_t out, bool with_bias) {
  weight = make_parameter(Tensor::zeros({out, in}));
  if (with_bias) bias = make_parameter(Tensor::zeros({out}));
}

void Linear::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  out.push_back({join_name(prefix, "weight"), weight});
  if (bias.defined()) out.push_back({join_name(prefix, "bias"), bias});
}

LayerNorm::LayerNorm(std::int64_t dim, double e)
    : gamma(make_parameter(Tensor::ones({dim}))), beta(make_parameter(Tensor::zeros({dim}))), eps(e) {}

void LayerNorm::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  out.push_back({join_name(prefix, "gamma"), gamma});
  out.push_back({join_name(prefix, "beta"), beta});
}

BatchNorm2d::BatchNorm2d(std::int64_t channels, double m, double e)
    : gamma(make_parameter(Tensor::ones({channels}))),
      beta(make_parameter(Tensor::zeros({channels}))),
      running_mean(Tensor::zeros({channels})),
      running_var(Tensor::ones({channels})),
      momentum(m),
      eps(e) {}

Tensor BatchNorm2d::forward(const Tensor& x) {
  return batch_norm(x, gamma, beta, running_mean, running_var, training, momentum, eps);
}

void BatchNorm2d::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  out.push_back({join_name(prefix, "gamma"), gamma});
  out.push_back({join_name(prefix, "beta"), beta});
}

void BatchNorm2d::collect_buffers(const std::string& prefix, NamedTensors& out) const {
  out.push_back({join_name(prefix, "running_mean"), running_mean});
  out.push_back({join_name(prefix, "running_var"), running_var});
}

ConvBnRelu::ConvBnRelu(std::int64_t in, std::int64_t out, int stride)
    : conv(in, out, 3, Conv2dParams{.stride = stride, .padding = 1}, /*bias=*/false), bn(out) {}

void ConvBnRelu::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  conv.collect_parameters(join_name(prefix, "conv"), out);
  bn.collect_parameters(join_name(prefix, "bn"), out);
}

void ConvBnRelu::collect_buffers(const std::string& prefix, NamedTensors& out) const {
  bn.collect_buffers(join_name(prefix, "bn"), out);
}

void init_trunc_normal(Conv2d& conv, Rng& rng, double std) {
  for (auto& v : conv.weight.data()) v = rng.truncated_normal(std);
  if (conv.bias.defined()) std::fill(conv.bias.data().begin(), conv.bias.data().end(), 0.0);
}

void init_trunc_normal(Linear& lin, Rng& rng, double std) {
  for (auto& v : lin.weight.data()) v = rng.truncated_normal(std);
  if (lin.bias.defined()) std::fill(lin.bias.data().begin(), lin.bias.data().end(), 0.0);
}

}  // namespace dgmn
