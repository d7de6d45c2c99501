#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "dgmn/dgmn.hpp"
#include "dgmn/dgmn2.hpp"
#include "dgmn/fault.hpp"
#include "dgmn/oracle.hpp"
#include "dgmn/verify.hpp"

using namespace dgmn;

namespace {

void fill(Tensor& t, Rng& rng, double std, double mean = 0.0) {
  for (double& v : t.data()) v = mean + std * rng.normal();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

double worst(const std::vector<verify::GradCheck>& checks) {
  double w = 0.0;
  for (const auto& c : checks) w = std::max(w, c.max_rel_error);
  return w;
}

}  // namespace

TEST_CASE("a fresh DGMN module is ReLU of its input") {
  Rng rng(1);
  DgmnConfig cfg;
  cfg.channels = 8;
  cfg.rates = {1, 4};
  DgmnModule m(cfg, rng);
  const Tensor f = rng.normal_tensor({2, 8, 6, 6}, 1.0);
  const Tensor out = m.forward(f);
  CHECK(max_abs_diff(out, relu(f)) == 0.0);
}

TEST_CASE("DGMN forward with trained-looking weights matches the reference loop") {
  Rng rng(2);
  DgmnConfig cfg;
  cfg.channels = 8;
  cfg.rates = {1, 2};
  cfg.groups = 2;
  cfg.iterations = 2;
  DgmnModule m(cfg, rng);
  for (const auto& p : m.named_parameters()) {
    Tensor t = p.tensor;
    fill(t, rng, 0.3);
  }
  const Tensor f = rng.normal_tensor({1, 8, 5, 7}, 1.0);
  CHECK(max_abs_diff(m.forward(f), oracle::dgmn_reference(f, m)) < 1e-12);
}

TEST_CASE("fresh walks leave the sampling grid uniform") {
  Rng rng(3);
  Dgmn2Config cfg;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.rates = {1, 3};
  Dgmn2Attention attn(cfg, rng);
  AttentionTrace trace;
  (void)attn.forward(rng.normal_tensor({1, 8, 6, 5}, 1.0), &trace);
  REQUIRE(trace.resolved.size() == 2);
  for (std::size_t r = 0; r < 2; ++r) {
    const Tensor base = uniform_grid(6, 5, cfg.rates[r], cfg.K);
    CHECK(std::equal(base.data().begin(), base.data().end(), trace.resolved[r].data().begin()));
  }
}

TEST_CASE("zero alpha blocks the attention branch at init") {
  Rng rng(4);
  Dgmn2Config cfg;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.ffn_expansion = 2;
  Dgmn2Layer layer(cfg, rng);
  const Tensor f = rng.normal_tensor({1, 8, 4, 4}, 1.0);
  backward(sum(layer.forward(f)));
  double q_grad = 0.0, alpha_grad = 0.0;
  for (double g : layer.attn.q_proj.weight.grad()) q_grad = std::max(q_grad, std::abs(g));
  for (double g : layer.alpha.grad()) alpha_grad = std::max(alpha_grad, std::abs(g));
  CHECK(q_grad == 0.0);
  CHECK(alpha_grad > 0.0);
}

TEST_CASE("attention gradient check passes and catches a flipped bilinear backward") {
  Rng rng(5);
  Dgmn2Config cfg;
  cfg.dim = 4;
  cfg.heads = 2;
  cfg.rates = {1};
  cfg.relpos_extent = 9;
  Dgmn2Attention attn(cfg, rng);
  for (const auto& p : attn.named_parameters()) {
    Tensor t = p.tensor;
    fill(t, rng, 0.3);
  }
  fill(attn.walk[0].conv.bias, rng, 0.15, 0.3);  // keep samples off the integer lattice
  fill(attn.walk[0].conv.weight, rng, 0.05);
  const Tensor f = rng.normal_tensor({1, 4, 5, 5}, 1.0);
  auto run = [&] {
    Rng r(9);
    return verify::check_gradients(attn, [&] { return attn.forward(f); }, r);
  };
  CHECK(worst(run()) < 1e-4);
  testing::ScopedFault fault(testing::Fault::kBilinearBackwardSign);
  CHECK(worst(run()) > 1e-2);
}

TEST_CASE("small-sample invariants") {
  CHECK(verify::normalization_deviation(5, 8) < 1e-12);
  CHECK(verify::dense_equivalence_error(8) < 1e-10);
  const auto l = verify::ledger_checks(3, 8);
  CHECK(l.sampled_ratio == 2.0);
  CHECK(l.dense_ratio == 4.0);
  CHECK(l.mismatches == 0);
}

TEST_CASE("configs are validated") {
  Rng rng(6);
  Dgmn2Config bad;
  bad.dim = 10;
  bad.heads = 3;
  CHECK_THROWS_AS(Dgmn2Attention(bad, rng), ConfigError);
  DgmnConfig g;
  g.channels = 6;
  g.groups = 4;
  CHECK_THROWS_AS(DgmnModule(g, rng), ConfigError);
}
