#include <cmath>
#include <numeric>

#include "doctest.h"
#include "dgmn/analysis.hpp"
#include "dgmn/oracle.hpp"
#include "dgmn/toy.hpp"
#include "json.hpp"

using namespace dgmn;
using i64 = std::int64_t;

TEST_CASE("1x1 convolution d->d with bias has d^2 + d parameters") {
  for (i64 d : {1, 7, 64}) {
    const Conv2d c(d, d, 1, {});
    CHECK(count_params(c) == d * d + d);
  }
}

TEST_CASE("3x3 convolution C->C costs H*W*C^2*9 MACs") {
  const i64 H = 6, W = 5, C = 4;
  CHECK(conv2d_macs(1, C, C, H, W, 3, 3) == H * W * C * C * 9);
  Rng rng(1);
  oracle::MacCounter counter;
  (void)oracle::conv2d_reference(rng.normal_tensor({1, C, H, W}, 1.0), rng.normal_tensor({C, C, 3, 3}, 1.0),
                                 Tensor{}, Conv2dParams{1, 1, 1, 1}, &counter);
  CHECK(counter.macs == H * W * C * C * 9);
}

TEST_CASE("toy model parameter count equals the hand sum") {
  ToyModelConfig cfg;
  cfg.patch = 2;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.layers = 2;
  cfg.rates = {1, 4};
  cfg.K = 9;
  cfg.ffn_expansion = 2;
  cfg.classes = 4;
  const ToyModel m(cfg, 16, 0);
  const i64 d = 8, e = 2, K = 9, heads = 2, R = 2 * 8 - 1;
  const i64 embed = 3 * d * 2 * 2 + d;
  const i64 walk = 2 * K * d * 9 + 2 * K;
  const i64 attn = 4 * (d * d + d) + 2 * walk + 2 * heads * R;
  const i64 layer = 2 * d + attn + d + 2 * d + (d * e * d + e * d) + (e * d * d + d);
  const i64 manual = embed + 2 * layer + 2 * d + (d * 4 + 4);
  CHECK(count_params(m) == manual);
  CHECK(m.parameter_count() == manual);
}

TEST_CASE("ledger totals are the sum of their entries") {
  const Backbone model(BackboneSpec::make(Variant::kTiny), 0);
  const OpLedger l = backbone_ledger(model, 224, 224);
  i64 p = 0, m = 0;
  for (const auto& e : l.entries) {
    p += e.params;
    m += e.macs;
  }
  CHECK(l.total_params() == p);
  CHECK(l.total_macs() == m);
  CHECK(p == count_params(model));
  CHECK(count_flops(model, 224, 224) == m);
  const auto j = nlohmann::json::parse(l.to_json());
  CHECK(j.is_object());
}

TEST_CASE("exported node weights form a distribution per query") {
  Backbone model(BackboneSpec::make(Variant::kTiny), 1);
  Rng rng(2);
  const NodeExport ex = export_sampled_nodes(model, rng.normal_tensor({1, 3, 64, 64}, 1.0), {{8, 8}, {40, 20}});
  REQUIRE(!ex.nodes.empty());
  std::map<std::tuple<int, int, i64, i64>, double> sums;
  for (const auto& n : ex.nodes) sums[{n.stage, n.layer, n.y, n.x}] += n.weight;
  CHECK(sums.size() == 8);  // two queries, four stages
  for (const auto& [key, s] : sums) CHECK(std::abs(s - 1.0) < 1e-12);
  // Untrained walks: stage 1 samples the 3x3 grid around the query.
  int checked = 0;
  for (const auto& n : ex.nodes) {
    if (n.stage != 1 || n.y != 2 || n.x != 2) continue;
    const int j = n.node_index;
    CHECK(n.sampled_y == n.y + (j / 3 - 1));
    CHECK(n.sampled_x == n.x + (j % 3 - 1));
    ++checked;
  }
  CHECK(checked == 9);
  CHECK(ex.svg.find("<svg") != std::string::npos);
  CHECK_THROWS_AS(export_sampled_nodes(model, rng.normal_tensor({1, 3, 64, 64}, 1.0), {{64, 0}}), ConfigError);
}

TEST_CASE("trained toy export matches a loop recompute") {
  SyntheticTask task;
  task.samples = 4;
  const Dataset data = make_dataset(task);
  ToyModel model(ToyModelConfig{}, task.size, 0);
  TrainOptions opts;
  opts.steps = 25;
  opts.lr = 1e-2;
  (void)train(model, data, opts);

  const Tensor image = slice(data.images, 0, 0, 1);
  std::vector<AttentionTrace> traces;
  {
    NoGradGuard g;
    (void)model.forward(image, &traces);
  }
  const i64 G = model.grid();
  const auto& layer = model.layers[0];
  const auto nodes = sampled_nodes(traces[0], layer.config(), G, G, {{3, 5}, {12, 9}});

  Tensor attention;
  {
    NoGradGuard g;
    const Tensor tokens = permute(model.embed.forward(image), {0, 2, 3, 1});
    const Tensor feats = permute(layer.norm1.forward(tokens), {0, 3, 1, 2});
    (void)oracle::dgmn2_attention_reference(feats, layer.attn, nullptr, &attention);
  }
  const int heads = layer.config().heads;
  const i64 M = attention.dim(3);
  REQUIRE(nodes.size() == static_cast<std::size_t>(2 * M));
  double walked = 0.0;
  for (const auto& n : nodes) {
    const i64 q = n.y * G + n.x;
    double w = 0.0;
    for (int h = 0; h < heads; ++h) w += attention.data()[static_cast<std::size_t>((h * G * G + q) * M + n.node_index)];
    CHECK(std::abs(n.weight - w / heads) < 1e-12);
    const int r = n.rate, j = n.node_index % layer.config().K;
    walked += std::abs(n.sampled_y - (n.y + (j / 3 - 1) * r)) + std::abs(n.sampled_x - (n.x + (j % 3 - 1) * r));
  }
  CHECK(walked > 0.0);
}
