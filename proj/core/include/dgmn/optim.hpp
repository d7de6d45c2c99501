#pragma once

#include <cstdint>
#include <vector>

#include "dgmn/tensor.hpp"

namespace dgmn {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-2;
};

/// Decoupled weight decay Adam. Moments are kept per parameter, in the order
/// the parameters were given at construction.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWOptions opts = {});

  void step();
  void zero_grad();
  std::int64_t steps() const { return t_; }
  AdamWOptions& options() { return opts_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamWOptions opts_;
  std::int64_t t_ = 0;
};

/// Plain (optionally momentum) SGD: v = mu v + g; p -= lr v.
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, double lr, double momentum = 0.0);

  void step();
  void zero_grad();

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  double lr_, momentum_;
};

// Single-tensor update rules, usable without an optimizer object.
void adamw_step(Tensor& param, std::vector<double>& m, std::vector<double>& v, std::int64_t t,
                const AdamWOptions& opts);
void sgd_step(Tensor& param, double lr);

}  // namespace dgmn
