#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dgmn/ops.hpp"
#include "dgmn/rng.hpp"
#include "dgmn/tensor.hpp"

namespace dgmn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using NamedTensors = std::vector<NamedTensor>;

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

/// Base for everything that owns learnable parameters or buffers.
/// Parameters are shared handles: the lists returned here alias the module.
class Module {
 public:
  virtual ~Module() = default;
  virtual void collect_parameters(const std::string& prefix, NamedTensors& out) const = 0;
  virtual void collect_buffers(const std::string& /*prefix*/, NamedTensors& /*out*/) const {}
  virtual void set_training(bool /*on*/) {}

  NamedTensors named_parameters() const;
  NamedTensors named_buffers() const;
  std::vector<Tensor> parameters() const;
  std::int64_t parameter_count() const;
  void zero_grad() const;
};

Tensor make_parameter(Tensor t);

class Conv2d : public Module {
 public:
  Conv2d() = default;
  Conv2d(std::int64_t in, std::int64_t out, int kernel, Conv2dParams params, bool bias = true);

  Tensor forward(const Tensor& x) const { return conv2d(x, weight, bias, params); }
  void collect_parameters(const std::string& prefix, NamedTensors& out) const override;

  Tensor weight, bias;
  Conv2dParams params;
};

class Linear : public Module {
 public:
  Linear() = default;
  Linear(std::int64_t in, std::int64_t out, bool bias = true);

  Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
  void collect_parameters(const std::string& prefix, NamedTensors& out) const override;

  Tensor weight, bias;
};

class LayerNorm : public Module {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::int64_t dim, double eps = 1e-6);

  Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
  void collect_parameters(const std::string& prefix, NamedTensors& out) const override;

  Tensor gamma, beta;
  double eps = 1e-6;
};

class BatchNorm2d : public Module {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(std::int64_t channels, double momentum = 0.1, double eps = 1e-5);

  Tensor forward(const Tensor& x);
  void collect_parameters(const std::string& prefix, NamedTensors& out) const override;
  void collect_buffers(const std::string& prefix, NamedTensors& out) const override;
  void set_training(bool on) override { training = on; }

  Tensor gamma, beta, running_mean, running_var;
  double momentum = 0.1, eps = 1e-5;
  bool training = false;
};

/// 3x3 Conv-BN-ReLU unit, padding 1.
class ConvBnRelu : public Module {
 public:
  ConvBnRelu() = default;
  ConvBnRelu(std::int64_t in, std::int64_t out, int stride);

  Tensor forward(const Tensor& x) { return relu(bn.forward(conv.forward(x))); }
  void collect_parameters(const std::string& prefix, NamedTensors& out) const override;
  void collect_buffers(const std::string& prefix, NamedTensors& out) const override;
  void set_training(bool on) override { bn.set_training(on); }

  Conv2d conv;
  BatchNorm2d bn;
};

/// Fills projection weights with truncated normals (std 0.02) and zeroes
/// every bias, the initialization used throughout the library.
void init_trunc_normal(Conv2d& conv, Rng& rng, double std = 0.02);
void init_trunc_normal(Linear& lin, Rng& rng, double std = 0.02);

}  // namespace dgmn
