#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dgmn/dgmn.hpp"
#include "dgmn/dgmn2.hpp"
#include "dgmn/ops.hpp"
#include "dgmn/tensor.hpp"

// Brute-force reference implementations. Nothing in here calls the
// production kernels: parameters are read from modules as raw numbers and
// every result is produced by explicit loops, so a bug on either side shows
// up as a disagreement. Inputs are expected to be small (<= 16x16 spatial).
namespace dgmn::oracle {

/// Counts multiply-accumulates executed inside the reference loops.
/// Convention: one product added into an accumulator is one MAC; padded
/// convolution taps and out-of-range bilinear corners are counted because
/// the loops visit them (their operand is zero).
struct MacCounter {
  std::int64_t macs = 0;
};

inline constexpr std::int64_t kMaxSpatial = 16;

Tensor conv2d_reference(const Tensor& x, const Tensor& w, const Tensor& b, Conv2dParams p,
                        MacCounter* counter = nullptr);
Tensor matmul_reference(const Tensor& a, const Tensor& b, MacCounter* counter = nullptr);
std::vector<double> softmax_reference(std::span<const double> logits);
Tensor layer_norm_reference(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
double gelu_reference(double x);

/// Reads map [N, C, H, W] at a continuous (y, x) using the explicit four-corner
/// formula with zero padding.
double bilinear_point(const Tensor& map, std::int64_t n, std::int64_t c, double y, double x);
Tensor bilinear_reference(const Tensor& map, const Tensor& coords, MacCounter* counter = nullptr);

/// Message of one rate branch: for each position, node and channel,
/// accumulates A_ij * w_j[group(c)] * h'_j[c].
/// features [N,C,H,W], coords [N,H,W,K,2], weights [N,H,W,K,G], affinities [N,H,W,K].
Tensor dmc_reference(const Tensor& features, const Tensor& coords, const Tensor& weights, const Tensor& affinities);

/// Full module forward with every sub-step written as loops.
Tensor dgmn_reference(const Tensor& F, const DgmnModule& module);

/// Full P x P softmax attention: softmax(Q K^T * scale) V for one head.
/// Q, K, V [P, d] -> [P, d].
Tensor dense_attention(const Tensor& Q, const Tensor& K, const Tensor& V, double scale,
                       MacCounter* counter = nullptr);

/// Sampled attention as loops: projections, walk convolution, bilinear
/// sampling of keys/values, relative-position interpolation, per-head softmax,
/// output projection. features [N, d, H, W] -> [N, d, H, W]. When
/// `attention` is given it receives weights [N, heads, H*W, K*S].
Tensor dgmn2_attention_reference(const Tensor& features, const Dgmn2Attention& attn, MacCounter* counter = nullptr,
                                 Tensor* attention = nullptr);

/// Same projections as above but every query attends to every position
/// through dense_attention (no sampling, no walks, no position bias).
Tensor dense_attention_layer(const Tensor& features, const Dgmn2Attention& attn, MacCounter* counter = nullptr);

}  // namespace dgmn::oracle
