#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dgmn/tensor.hpp"

namespace dgmn {

// Elementwise arithmetic with numpy-style right-aligned broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);

Tensor relu(const Tensor& x);
// Exact GELU, 0.5 x (1 + erf(x / sqrt 2)).
Tensor gelu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, int axis, bool keepdim = false);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, std::span<const int> perm);
inline Tensor permute(const Tensor& x, std::initializer_list<int> perm) {
  return permute(x, std::span<const int>(perm.begin(), perm.size()));
}
Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length);
Tensor concat(std::span<const Tensor> parts, int axis);

// [M,K] x [K,N] -> [M,N].
Tensor matmul(const Tensor& a, const Tensor& b);
// x[..., in] with weight [out, in] and optional bias [out] -> [..., out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

/// Softmax along `axis`, max-subtracted.
Tensor softmax(const Tensor& x, int axis);

/// Normalizes over the last axis; gamma/beta have the extent of that axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);

struct Conv2dParams {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
  int groups = 1;
};

/// Cross-correlation with zero padding.
/// x [N, C_in, H, W], w [C_out, C_in/groups, kh, kw], b [C_out] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, Conv2dParams p = {});
Shape conv2d_output_shape(const Shape& x, const Shape& w, Conv2dParams p);

/// Batch normalization over (N, H, W) of a [N, C, H, W] map.
/// In training mode batch statistics are used and the running buffers are
/// updated in place: running = (1 - momentum) running + momentum batch, with
/// the unbiased batch variance. Otherwise the running statistics are used.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, double momentum = 0.1, double eps = 1e-5);

// [N, C, H, W] -> [N, C].
Tensor global_average_pool(const Tensor& x);

/// Mean softmax cross entropy of logits [N, C] against integer class labels.
Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels);

}  // namespace dgmn
