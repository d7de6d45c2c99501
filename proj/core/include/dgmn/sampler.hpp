#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dgmn/nn.hpp"
#include "dgmn/tensor.hpp"

namespace dgmn {

// Coordinates are (y, x) pairs in pixel units; (0, 0) is the center of the
// top-left pixel. Reads outside [0, H) x [0, W) return zero.

enum class GridAnchor {
  kCentered,  // k x k dilated neighbourhood around each query, self included
  kAbsolute,  // one k x k grid with spacing `rate` anchored at (0, 0), shared by all queries
};

/// Integer offsets (dy, dx) of the k x k grid at `rate`, row-major over nodes.
/// For odd k these are {-(k-1)/2 .. (k-1)/2} * rate; for even k the extra
/// node sits on the negative side so (0, 0) is always present.
std::vector<std::array<int, 2>> grid_offsets(int rate, int K);

/// Base coordinates [H, W, K, 2] of the uniform sampling grid.
Tensor uniform_grid(std::int64_t H, std::int64_t W, int rate, int K,
                    GridAnchor anchor = GridAnchor::kCentered);

/// Bilinear read of map [N, C, H, W] at coords [N, P, 2] -> [N, P, C].
/// Differentiable with respect to both the map and the coordinates.
Tensor bilinear_sample(const Tensor& map, const Tensor& coords);

/// Predicts a (dy, dx) walk for each of the K nodes of one rate branch with a
/// 3x3 convolution dilated by the rate. Weights and bias start at zero so the
/// initial resolved coordinates equal the uniform grid.
class WalkPredictor : public Module {
 public:
  WalkPredictor() = default;
  WalkPredictor(std::int64_t channels, int rate, int K);

  // features [N, C, H, W] -> walks [N, H, W, K, 2]
  Tensor forward(const Tensor& features) const;
  void collect_parameters(const std::string& prefix, NamedTensors& out) const override;

  int rate() const { return rate_; }
  int nodes() const { return k_; }

  Conv2d conv;

 private:
  int rate_ = 1;
  int k_ = 9;
};

/// base [H, W, K, 2] + walks [N, H, W, K, 2] -> resolved [N, H, W, K, 2].
Tensor resolve_coords(const Tensor& base, const Tensor& walks);

/// Per-rate sampling state for one forward pass.
struct SamplingField {
  std::vector<int> rates;
  int K = 9;
  std::vector<Tensor> base;      // [H, W, K, 2] per rate
  std::vector<Tensor> walks;     // [N, H, W, K, 2] per rate
  std::vector<Tensor> resolved;  // [N, H, W, K, 2] per rate
};

/// Builds a sampling field from features with the given walk predictors.
/// When `predictors` is empty the walks are identically zero.
SamplingField build_sampling_field(const Tensor& features, const std::vector<int>& rates, int K,
                                   const std::vector<WalkPredictor>& predictors,
                                   GridAnchor anchor = GridAnchor::kCentered);

int checked_grid_side(int K);

}  // namespace dgmn
