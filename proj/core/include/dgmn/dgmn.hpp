#pragma once

#include <cstdint>
#include <vector>

#include "dgmn/nn.hpp"
#include "dgmn/rng.hpp"
#include "dgmn/sampler.hpp"

namespace dgmn {

struct DgmnConfig {
  std::int64_t channels = 64;
  std::vector<int> rates = {1, 4, 8, 12};
  int K = 9;
  int groups = 4;
  int iterations = 1;

  void validate() const;
};

/// Position-specific filters and affinities for one rate branch.
struct DynamicKernel {
  Tensor weights;     // [N, H, W, K, G]
  Tensor affinities;  // [N, H, W, K], softmax over K
};

/// Splits the K*G + K channels of `raw` [N, K*G + K, H, W] into grouped
/// filter weights (node-major: channel j*G + g) and softmax-normalized
/// affinities (the trailing K channels).
DynamicKernel split_dynamic_kernel(const Tensor& raw, int K, int G);

/// 3x3 convolution dilated by `rate` predicting K*G + K channels per position.
class KernelPredictor : public Module {
 public:
  KernelPredictor() = default;
  KernelPredictor(std::int64_t channels, int rate, int K, int G);

  DynamicKernel forward(const Tensor& features) const;
  void collect_parameters(const std::string& prefix, NamedTensors& out) const override;

  Conv2d conv;
  int K = 9, G = 4;
};

/// Dynamic message calculation for one rate branch.
/// m_i = sum_j A_ij * (h'_j * w_j) with w_j's G scalars each scaling a
/// contiguous block of C/G channels; h'_j is read bilinearly at the resolved
/// coordinate. features [N, C, H, W], resolved [N, H, W, K, 2] -> [N, C, H, W].
Tensor dynamic_message(const Tensor& features, const Tensor& resolved, const DynamicKernel& kernel, int G);

/// Everything one forward pass produced, for inspection and export.
struct DgmnTrace {
  std::vector<SamplingField> fields;          // per iteration
  std::vector<std::vector<DynamicKernel>> kernels;  // [iteration][rate]
};

/// Multi-rate dynamic graph message passing module.
///
/// For t = 1..T: m = sum_q beta_q dmc_q(H^(t-1)); H^(t) = ReLU(F + alpha * m),
/// with H^(0) = F. beta starts at 1/S and alpha (per channel) at zero, so a
/// fresh module computes ReLU(F).
class DgmnModule : public Module {
 public:
  DgmnModule() = default;
  DgmnModule(DgmnConfig cfg, Rng& rng);

  Tensor forward(const Tensor& F, DgmnTrace* trace = nullptr) const;
  void collect_parameters(const std::string& prefix, NamedTensors& out) const override;

  const DgmnConfig& config() const { return cfg_; }

  std::vector<WalkPredictor> walk;
  std::vector<KernelPredictor> kernel;
  Tensor beta;   // [S]
  Tensor alpha;  // [C]

 private:
  DgmnConfig cfg_;
};

}  // namespace dgmn
