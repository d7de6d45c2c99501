#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dgmn/nn.hpp"
#include "dgmn/rng.hpp"
#include "dgmn/sampler.hpp"

namespace dgmn {

struct Dgmn2Config {
  std::int64_t dim = 64;
  int heads = 1;
  int K = 9;
  std::vector<int> rates = {1};
  int ffn_expansion = 8;
  int relpos_extent = 15;  // odd; entries cover offsets -(R-1)/2 .. (R-1)/2
  std::optional<double> logit_scale;  // default 1/sqrt(head_dim)
  GridAnchor anchor = GridAnchor::kCentered;
  bool walks = true;  // false pins every walk at zero (no predictor parameters)

  std::int64_t head_dim() const { return dim / heads; }
  double scale() const;
  int total_nodes() const { return K * static_cast<int>(rates.size()); }
  void validate() const;
};

/// Linear interpolation into a 1-D table indexed by a continuous offset.
/// Entry i sits at offset i - (R-1)/2; offsets beyond either end clamp to the
/// edge entry (zero slope there).
double interp_table(std::span<const double> table, double offset);

/// Relative-position bias r = interp(height[h], dy * s) + interp(width[h], dx * s).
/// offsets [N, M, 2] (resolved minus query coordinate), tables [heads, R]
/// -> [N, heads, M]. `offset_scale` s maps runtime offsets onto the table's
/// grid when running at a different resolution than the tables were sized for.
Tensor relpos_bias(const Tensor& offsets, const Tensor& height, const Tensor& width, double offset_scale = 1.0);

/// Intermediates of one attention forward, kept for export and invariants.
struct AttentionTrace {
  std::vector<Tensor> resolved;  // per rate [N, H, W, K, 2]
  Tensor attention;              // [N, heads, H*W, K*S], softmax over the last axis
};

/// Sampled key/value attention with predicted walks and relative position bias.
///
/// Query is a linear projection of the receiving position. Keys and values are
/// 1x1 projections read bilinearly at the K resolved nodes of each rate
/// branch. logits = q.k * scale + r; softmax over all sampled nodes; heads are
/// concatenated and projected back to `dim`.
class Dgmn2Attention : public Module {
 public:
  Dgmn2Attention() = default;
  Dgmn2Attention(Dgmn2Config cfg, Rng& rng);

  // features [N, dim, H, W] -> message [N, dim, H, W]
  Tensor forward(const Tensor& features, AttentionTrace* trace = nullptr) const;
  // tokens [N, H, W, dim] -> [N, H, W, dim]
  Tensor forward_tokens(const Tensor& tokens, AttentionTrace* trace = nullptr) const;

  /// Keys and values [N, heads, H*W, K, head_dim] for one rate branch.
  struct Sampled {
    Tensor keys, values, resolved;
  };
  Sampled sample(const Tensor& features, std::size_t rate_index) const;

  void collect_parameters(const std::string& prefix, NamedTensors& out) const override;
  const Dgmn2Config& config() const { return cfg_; }

  Linear q_proj;
  Conv2d k_proj, v_proj;
  std::vector<WalkPredictor> walk;
  Tensor rel_height, rel_width;  // [heads, R]
  Linear out_proj;
  double relpos_offset_scale = 1.0;

 private:
  Dgmn2Config cfg_;
};

/// Pre-norm transformer layer: x = F + alpha * attn(LN(F)); out = x + FFN(LN(x)),
/// FFN = Linear(d, e d) -> GELU -> Linear(e d, d). alpha is per channel and
/// starts at zero.
class Dgmn2Layer : public Module {
 public:
  Dgmn2Layer() = default;
  Dgmn2Layer(Dgmn2Config cfg, Rng& rng);

  Tensor forward(const Tensor& F, AttentionTrace* trace = nullptr) const;  // NCHW
  Tensor forward_tokens(const Tensor& tokens, AttentionTrace* trace = nullptr) const;  // NHWC

  void collect_parameters(const std::string& prefix, NamedTensors& out) const override;
  const Dgmn2Config& config() const { return attn.config(); }

  LayerNorm norm1;
  Dgmn2Attention attn;
  Tensor alpha;
  LayerNorm norm2;
  Linear fc1, fc2;
};

}  // namespace dgmn
