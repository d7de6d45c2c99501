#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dgmn/backbone.hpp"
#include "dgmn/dgmn2.hpp"
#include "dgmn/nn.hpp"

namespace dgmn {

/// One row of the complexity ledger. MACs are multiply-accumulates at the
/// (H, W) the ledger was built for; normalization, activations, biases and
/// softmax exponentials are not counted.
struct LedgerEntry {
  std::string name;
  std::int64_t params = 0;
  std::int64_t macs = 0;
};

struct OpLedger {
  std::vector<LedgerEntry> entries;

  void add(std::string name, std::int64_t params, std::int64_t macs);
  void append(const OpLedger& other);
  std::int64_t total_params() const;
  std::int64_t total_macs() const;

  std::string to_json() const;
  std::string to_table() const;  // aligned text, one row per entry plus a total
};

std::int64_t conv2d_macs(std::int64_t n, std::int64_t cin, std::int64_t cout, std::int64_t ho, std::int64_t wo,
                         std::int64_t kh, std::int64_t kw, std::int64_t groups = 1);
std::int64_t matmul_macs(std::int64_t m, std::int64_t k, std::int64_t n);

/// Itemized attention cost at H x W (batch 1): q/k/v projections, walk
/// prediction per rate, bilinear sampling of keys and values (4 corners),
/// relative-position interpolation (2 taps per table per head), q.k, attn.v,
/// output projection.
OpLedger attention_ledger(const Dgmn2Config& cfg, std::int64_t H, std::int64_t W, const std::string& prefix = "attn");
/// Full softmax attention over P = H*W positions: Q K^T and attn V per head.
OpLedger dense_attention_ledger(std::int64_t H, std::int64_t W, std::int64_t dim, int heads,
                                const std::string& prefix = "dense");

/// Per-layer ledger of a backbone at input H x W (batch 1).
OpLedger backbone_ledger(const Backbone& model, std::int64_t H, std::int64_t W);

std::int64_t count_params(const Module& model);
std::int64_t count_flops(const Backbone& model, std::int64_t H, std::int64_t W);
std::int64_t count_flops(const Dgmn2Attention& attn, std::int64_t H, std::int64_t W);

/// One sampled node of one query, as exported for plotting.
struct SampledNode {
  int stage = 0;  // 1-based; 0 for single-layer exports
  int layer = 0;
  std::int64_t y = 0, x = 0;  // query position on the layer's grid
  int rate = 1;
  int node_index = 0;  // q * K + j across all rate branches
  double sampled_y = 0.0, sampled_x = 0.0;
  double weight = 0.0;  // attention weight averaged over heads
};

struct NodeExport {
  std::vector<SampledNode> nodes;
  std::string json;
  std::string svg;
};

/// Collects the sampled nodes of query positions from one attention trace.
/// `positions` are (y, x) on the grid of the traced layer; out-of-range
/// positions raise ConfigError.
std::vector<SampledNode> sampled_nodes(const AttentionTrace& trace, const Dgmn2Config& cfg, std::int64_t H,
                                       std::int64_t W, const std::vector<std::array<std::int64_t, 2>>& positions,
                                       int stage = 0, int layer = 0);

std::string nodes_to_json(const std::vector<SampledNode>& nodes);
/// Static SVG 1.1 plot: one panel per (stage, layer), queries as squares,
/// samples as circles shaded by weight.
std::string nodes_to_svg(const std::vector<SampledNode>& nodes, const std::vector<std::array<std::int64_t, 2>>& grids);

/// Runs the backbone in inference mode and exports the first layer of every
/// stage. `positions` are pixel coordinates of the input image; each is
/// mapped to stage i by integer division by that stage's output stride.
NodeExport export_sampled_nodes(Backbone& model, const Tensor& image,
                                const std::vector<std::array<std::int64_t, 2>>& positions);

}  // namespace dgmn
