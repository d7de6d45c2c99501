#include "dgmn/optim.hpp"

#include <cmath>

namespace dgmn {

void adamw_step(Tensor& param, std::vector<double>& m, std::vector<double>& v, std::int64_t t,
                const AdamWOptions& o) {
  auto p = param.data();
  auto g = param.grad();
  if (m.size() != p.size()) m.assign(p.size(), 0.0);
  if (v.size() != p.size()) v.assign(p.size(), 0.0);
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
    v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    p[i] -= o.lr * (mhat / (std::sqrt(vhat) + o.eps) + o.weight_decay * p[i]);
  }
}

void sgd_step(Tensor& param, double lr) {
  auto p = param.data();
  auto g = param.grad();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
}

AdamW::AdamW(std::vector<Tensor> params, AdamWOptions opts)
    : params_(std::move(params)), m_(params_.size()), v_(params_.size()), opts_(opts) {}

void AdamW::step() {
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) adamw_step(params_[i], m_[i], v_[i], t_, opts_);
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Sgd::Sgd(std::vector<Tensor> params, double lr, double momentum)
    : params_(std::move(params)), velocity_(params_.size()), lr_(lr), momentum_(momentum) {}

void Sgd::step() {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (momentum_ == 0.0) {
      sgd_step(p, lr_);
      continue;
    }
    auto& vel = velocity_[k];
    auto g = p.grad();
    auto d = p.data();
    if (vel.size() != d.size()) vel.assign(d.size(), 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) {
      vel[i] = momentum_ * vel[i] + g[i];
      d[i] -= lr_ * vel[i];
    }
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace dgmn
