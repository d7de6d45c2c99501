#include "dgmn/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "dgmn/analysis.hpp"
#include "dgmn/dgmn.hpp"
#include "dgmn/dgmn2.hpp"
#include "dgmn/oracle.hpp"
#include "json.hpp"

namespace dgmn::verify {

using i64 = std::int64_t;

namespace {

int pick(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (i64 i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(a.data()[static_cast<std::size_t>(i)] - b.data()[static_cast<std::size_t>(i)]));
  }
  return m;
}

void fill_normal(Tensor& t, Rng& rng, double std) {
  for (double& v : t.data()) v = rng.normal(0.0, std);
}

// Replaces every parameter with N(0, std^2) draws, in place.
void randomize(const Module& m, Rng& rng, double std) {
  for (auto& p : m.named_parameters()) fill_normal(p.tensor, rng, std);
}

// Walk predictors get small weights and a fractional bias so resolved
// coordinates land off the integer lattice.
void randomize_walk(WalkPredictor& w, Rng& rng) {
  fill_normal(w.conv.weight, rng, 0.05);
  for (double& v : w.conv.bias.data()) v = 0.3 + rng.uniform(-0.15, 0.15);
}

// Distance from the nearest integer over every resolved coordinate. Bilinear
// sampling and the relative-position tables have kinks on the integer lattice,
// so central differences are only meaningful when this exceeds the step.
double lattice_margin(const std::vector<Tensor>& resolved) {
  double m = 0.5;
  for (const auto& t : resolved)
    for (double v : t.data()) m = std::min(m, std::abs(v - std::round(v)));
  return m;
}

constexpr double kLatticeMargin = 2e-4;  // twenty finite-difference steps
constexpr int kMaxDraws = 64;

std::vector<int> random_rates(Rng& rng) {
  static const int pool[] = {1, 2, 3, 4};
  std::vector<int> r;
  for (int v : pool)
    if (rng.uniform() < 0.5) r.push_back(v);
  if (r.empty()) r.push_back(pool[rng.below(4)]);
  return r;
}

int random_k(Rng& rng) {
  static const int ks[] = {1, 4, 9};
  return ks[rng.below(3)];
}

DgmnModule random_dgmn(Rng& rng, i64 channels, std::vector<int> rates, int K, int G, int iterations) {
  DgmnConfig cfg;
  cfg.channels = channels;
  cfg.rates = std::move(rates);
  cfg.K = K;
  cfg.groups = G;
  cfg.iterations = iterations;
  DgmnModule m(cfg, rng);
  randomize(m, rng, 0.2);
  for (auto& w : m.walk) randomize_walk(w, rng);
  return m;
}

Dgmn2Config random_dgmn2_config(Rng& rng) {
  Dgmn2Config cfg;
  cfg.heads = pick(rng, 1, 3);
  cfg.dim = cfg.heads * pick(rng, 1, 4);
  cfg.K = random_k(rng);
  cfg.rates = random_rates(rng);
  cfg.relpos_extent = 2 * pick(rng, 0, 7) + 1;
  cfg.anchor = rng.uniform() < 0.8 ? GridAnchor::kCentered : GridAnchor::kAbsolute;
  cfg.walks = rng.uniform() < 0.85;
  cfg.ffn_expansion = pick(rng, 1, 3);
  return cfg;
}

Dgmn2Attention random_attention(Rng& rng, const Dgmn2Config& cfg) {
  Dgmn2Attention a(cfg, rng);
  randomize(a, rng, 0.4);
  for (auto& w : a.walk) randomize_walk(w, rng);
  a.relpos_offset_scale = rng.uniform() < 0.5 ? 1.0 : rng.uniform(0.4, 2.0);
  return a;
}

template <typename F>
double timed(F&& f, double& seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  const double v = f();
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return v;
}

}  // namespace

Agreement oracle_conv2d(int cases, std::uint64_t seed) {
  Rng rng(seed);
  NoGradGuard guard;
  Agreement a{"conv2d", 0, 0.0};
  while (a.cases < cases) {
    const int g = pick(rng, 1, 3);
    const i64 cin = g * pick(rng, 1, 3), cout = g * pick(rng, 1, 3);
    const int k = pick(rng, 1, 3);
    Conv2dParams p{.stride = pick(rng, 1, 2), .padding = pick(rng, 0, 2), .dilation = pick(rng, 1, 2), .groups = g};
    const i64 h = pick(rng, 1, 12), w = pick(rng, 1, 12);
    if (h + 2 * p.padding < p.dilation * (k - 1) + 1 || w + 2 * p.padding < p.dilation * (k - 1) + 1) continue;
    const i64 n = pick(rng, 1, 2);
    Tensor x = rng.normal_tensor({n, cin, h, w}, 1.0);
    Tensor wt = rng.normal_tensor({cout, cin / g, k, k}, 1.0);
    Tensor b = rng.uniform() < 0.7 ? rng.normal_tensor({cout}, 1.0) : Tensor();
    a.max_error = std::max(a.max_error, max_abs_diff(conv2d(x, wt, b, p), oracle::conv2d_reference(x, wt, b, p)));
    ++a.cases;
  }
  return a;
}

Agreement oracle_bilinear(int cases, std::uint64_t seed) {
  Rng rng(seed);
  NoGradGuard guard;
  Agreement a{"bilinear_sample", 0, 0.0};
  for (; a.cases < cases; ++a.cases) {
    const i64 n = pick(rng, 1, 2), c = pick(rng, 1, 4), h = pick(rng, 1, 16), w = pick(rng, 1, 16), p = pick(rng, 1, 20);
    Tensor map = rng.normal_tensor({n, c, h, w}, 1.0);
    Tensor coords({n, p, 2});
    for (i64 i = 0; i < n * p; ++i) {
      const bool lattice = rng.uniform() < 0.3;
      for (int t = 0; t < 2; ++t) {
        const double ext = static_cast<double>(t == 0 ? h : w);
        const double v = lattice ? static_cast<double>(pick(rng, -2, static_cast<int>(ext) + 1)) : rng.uniform(-1.5, ext + 0.5);
        coords.data()[static_cast<std::size_t>(i * 2 + t)] = v;
      }
    }
    a.max_error = std::max(a.max_error, max_abs_diff(bilinear_sample(map, coords), oracle::bilinear_reference(map, coords)));
  }
  return a;
}

Agreement oracle_softmax(int cases, std::uint64_t seed) {
  Rng rng(seed);
  NoGradGuard guard;
  Agreement a{"softmax", 0, 0.0};
  for (; a.cases < cases; ++a.cases) {
    const int rank = pick(rng, 1, 3);
    Shape s;
    for (int i = 0; i < rank; ++i) s.push_back(pick(rng, 1, 6));
    const int axis = pick(rng, 0, rank - 1);
    Tensor x = rng.normal_tensor(s, rng.uniform(0.1, 30.0));
    Tensor y = softmax(x, axis);
    i64 inner = 1;
    for (int i = axis + 1; i < rank; ++i) inner *= s[static_cast<std::size_t>(i)];
    const i64 len = s[static_cast<std::size_t>(axis)], outer = x.numel() / (inner * len);
    for (i64 o = 0; o < outer; ++o)
      for (i64 in = 0; in < inner; ++in) {
        std::vector<double> row(static_cast<std::size_t>(len));
        for (i64 j = 0; j < len; ++j) row[static_cast<std::size_t>(j)] = x.data()[static_cast<std::size_t>((o * len + j) * inner + in)];
        const auto ref = oracle::softmax_reference(row);
        for (i64 j = 0; j < len; ++j) {
          a.max_error = std::max(a.max_error, std::abs(ref[static_cast<std::size_t>(j)] -
                                                       y.data()[static_cast<std::size_t>((o * len + j) * inner + in)]));
        }
      }
  }
  return a;
}

Agreement oracle_dmc(int cases, std::uint64_t seed) {
  Rng rng(seed);
  NoGradGuard guard;
  Agreement a{"dmc", 0, 0.0};
  for (; a.cases < cases; ++a.cases) {
    static const int gs[] = {1, 2, 4};
    const int G = gs[rng.below(3)], K = random_k(rng);
    const i64 n = pick(rng, 1, 2), c = G * pick(rng, 1, 3), h = pick(rng, 1, 10), w = pick(rng, 1, 10);
    Tensor f = rng.normal_tensor({n, c, h, w}, 1.0);
    Tensor coords({n, h, w, K, 2});
    for (i64 i = 0; i < n * h * w * K; ++i) {
      coords.data()[static_cast<std::size_t>(i * 2)] = rng.uniform(-1.5, static_cast<double>(h) + 0.5);
      coords.data()[static_cast<std::size_t>(i * 2 + 1)] = rng.uniform(-1.5, static_cast<double>(w) + 0.5);
    }
    DynamicKernel dk{rng.normal_tensor({n, h, w, K, G}, 1.0), softmax(rng.normal_tensor({n, h, w, K}, 2.0), 3)};
    a.max_error = std::max(a.max_error, max_abs_diff(dynamic_message(f, coords, dk, G),
                                                     oracle::dmc_reference(f, coords, dk.weights, dk.affinities)));
  }
  return a;
}

Agreement oracle_dgmn(int cases, std::uint64_t seed) {
  Rng rng(seed);
  NoGradGuard guard;
  Agreement a{"dgmn_forward", 0, 0.0};
  for (; a.cases < cases; ++a.cases) {
    static const int gs[] = {1, 2, 4};
    const int G = gs[rng.below(3)];
    const i64 c = G * pick(rng, 1, 2);
    DgmnModule m = random_dgmn(rng, c, random_rates(rng), random_k(rng), G, pick(rng, 1, 2));
    const i64 h = pick(rng, 1, 8), w = pick(rng, 1, 8);
    Tensor f = rng.normal_tensor({pick(rng, 1, 2), c, h, w}, 1.0);
    a.max_error = std::max(a.max_error, max_abs_diff(m.forward(f), oracle::dgmn_reference(f, m)));
  }
  return a;
}

Agreement oracle_dgmn2_attention(int cases, std::uint64_t seed) {
  Rng rng(seed);
  NoGradGuard guard;
  Agreement a{"dgmn2_attention", 0, 0.0};
  for (; a.cases < cases; ++a.cases) {
    const auto cfg = random_dgmn2_config(rng);
    const Dgmn2Attention attn = random_attention(rng, cfg);
    Tensor f = rng.normal_tensor({pick(rng, 1, 2), cfg.dim, pick(rng, 1, 8), pick(rng, 1, 8)}, 1.0);
    a.max_error = std::max(a.max_error, max_abs_diff(attn.forward(f), oracle::dgmn2_attention_reference(f, attn)));
  }
  return a;
}

double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double scale = 0.0;
  for (double v : numeric) scale = std::max(scale, std::abs(v));
  const double floor = 1e-3 * scale + 1e-12;
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double den = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / den);
  }
  return worst;
}

std::vector<double> finite_diff(const std::function<double()>& loss, Tensor& param, double step) {
  NoGradGuard guard;
  auto v = param.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double keep = v[i];
    v[i] = keep + step;
    const double up = loss();
    v[i] = keep - step;
    const double down = loss();
    v[i] = keep;
    out[i] = (up - down) / (2.0 * step);
  }
  return out;
}

std::vector<GradCheck> check_gradients(const Module& model, const std::function<Tensor()>& forward, Rng& rng,
                                       double step) {
  model.zero_grad();
  Tensor out = forward();
  const Tensor r = rng.normal_tensor(out.shape(), 1.0);
  backward(sum(mul(out, r)));
  auto loss = [&]() { return sum(mul(forward(), r)).item(); };
  std::vector<GradCheck> results;
  for (auto& p : model.named_parameters()) {
    const std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    const auto numeric = finite_diff(loss, p.tensor, step);
    results.push_back({p.name, p.tensor.numel(), relative_error(analytic, numeric)});
  }
  return results;
}

std::vector<GradCheck> gradcheck_dgmn(std::uint64_t seed) {
  Rng rng(seed);
  // Redraw until no sample sits within kLatticeMargin of an integer coordinate.
  for (int draw = 1;; ++draw) {
    DgmnModule m = random_dgmn(rng, 8, {1, 4}, 9, 4, 1);
    const Tensor f = rng.normal_tensor({1, 8, 8, 8}, 1.0);
    DgmnTrace trace;
    {
      NoGradGuard g;
      (void)m.forward(f, &trace);
    }
    std::vector<Tensor> resolved;
    for (const auto& field : trace.fields) resolved.insert(resolved.end(), field.resolved.begin(), field.resolved.end());
    if (lattice_margin(resolved) >= kLatticeMargin || draw == kMaxDraws) {
      return check_gradients(m, [&] { return m.forward(f); }, rng);
    }
  }
}

namespace {

class Stack : public Module {
 public:
  std::vector<Dgmn2Layer> layers;
  Tensor forward(const Tensor& x) const {
    Tensor y = x;
    for (const auto& l : layers) y = l.forward(y);
    return y;
  }
  void collect_parameters(const std::string& prefix, NamedTensors& out) const override {
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect_parameters(join_name(prefix, "layer" + std::to_string(i)), out);
  }
};

}  // namespace

std::vector<GradCheck> gradcheck_dgmn2_stack(std::uint64_t seed) {
  Rng rng(seed);
  Dgmn2Config cfg;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.K = 9;
  cfg.rates = {1, 2};
  cfg.ffn_expansion = 2;
  cfg.relpos_extent = 15;
  for (int draw = 1;; ++draw) {
    Stack s;
    for (int i = 0; i < 2; ++i) {
      Dgmn2Layer l(cfg, rng);
      randomize(l, rng, 0.3);
      for (auto& w : l.attn.walk) randomize_walk(w, rng);
      for (double& v : l.norm1.gamma.data()) v += 1.0;
      for (double& v : l.norm2.gamma.data()) v += 1.0;
      s.layers.push_back(std::move(l));
    }
    const Tensor f = rng.normal_tensor({1, 8, 8, 8}, 1.0);
    std::vector<Tensor> resolved;
    {
      NoGradGuard g;
      Tensor y = f;
      for (const auto& l : s.layers) {
        AttentionTrace trace;
        y = l.forward(y, &trace);
        resolved.insert(resolved.end(), trace.resolved.begin(), trace.resolved.end());
      }
    }
    if (lattice_margin(resolved) >= kLatticeMargin || draw == kMaxDraws) {
      return check_gradients(s, [&] { return s.forward(f); }, rng);
    }
  }
}

double normalization_deviation(int forwards, std::uint64_t seed) {
  Rng rng(seed);
  NoGradGuard guard;
  double worst = 0.0;
  auto rows = [&](const Tensor& t) {
    const i64 len = t.shape().back();
    for (i64 r = 0; r < t.numel() / len; ++r) {
      double s = 0.0;
      for (i64 j = 0; j < len; ++j) s += t.data()[static_cast<std::size_t>(r * len + j)];
      worst = std::max(worst, std::abs(s - 1.0));
    }
  };
  for (int i = 0; i < forwards; ++i) {
    static const int gs[] = {1, 2, 4};
    const int G = gs[rng.below(3)];
    const i64 c = G * pick(rng, 1, 3);
    DgmnModule m = random_dgmn(rng, c, random_rates(rng), random_k(rng), G, pick(rng, 1, 2));
    for (auto& k : m.kernel) fill_normal(k.conv.weight, rng, 3.0);  // sharp, far-from-uniform affinities
    DgmnTrace trace;
    m.forward(rng.normal_tensor({1, c, pick(rng, 1, 10), pick(rng, 1, 10)}, 1.0), &trace);
    for (const auto& it : trace.kernels)
      for (const auto& dk : it) rows(dk.affinities);

    const auto cfg = random_dgmn2_config(rng);
    Dgmn2Layer layer(cfg, rng);
    randomize(layer, rng, 1.0);
    for (auto& w : layer.attn.walk) randomize_walk(w, rng);
    AttentionTrace at;
    layer.forward(rng.normal_tensor({pick(rng, 1, 2), cfg.dim, pick(rng, 1, 10), pick(rng, 1, 10)}, 1.0), &at);
    rows(at.attention);
  }
  return worst;
}

double dense_equivalence_error(std::uint64_t seed) {
  Rng rng(seed);
  NoGradGuard guard;
  Dgmn2Config cfg;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.K = 16;
  cfg.rates = {1};
  cfg.anchor = GridAnchor::kAbsolute;
  cfg.walks = false;
  cfg.relpos_extent = 7;
  Dgmn2Attention attn(cfg, rng);
  randomize(attn, rng, 0.5);
  for (double& v : attn.rel_height.data()) v = 0.0;
  for (double& v : attn.rel_width.data()) v = 0.0;
  const Tensor f = rng.normal_tensor({2, 8, 4, 4}, 1.0);
  return max_abs_diff(attn.forward(f), oracle::dense_attention_layer(f, attn));
}

LedgerCheck ledger_checks(int configs, std::uint64_t seed) {
  LedgerCheck lc;
  Dgmn2Config tiny1;  // first-stage attention of the tiny backbone
  tiny1.dim = 64;
  tiny1.heads = 1;
  tiny1.relpos_extent = 111;
  lc.sampled_ratio = static_cast<double>(attention_ledger(tiny1, 112, 56).total_macs()) /
                     static_cast<double>(attention_ledger(tiny1, 56, 56).total_macs());
  lc.dense_ratio = static_cast<double>(dense_attention_ledger(112, 56, 64, 1).total_macs()) /
                   static_cast<double>(dense_attention_ledger(56, 56, 64, 1).total_macs());

  Rng rng(seed);
  NoGradGuard guard;
  for (; lc.configs < configs; ++lc.configs) {
    bool ok = true;
    // conv2d
    const int g = pick(rng, 1, 2);
    const i64 cin = g * pick(rng, 1, 3), cout = g * pick(rng, 1, 3);
    const int k = pick(rng, 1, 3);
    const Conv2dParams p{.stride = pick(rng, 1, 2), .padding = k / 2, .dilation = 1, .groups = g};
    const i64 h = pick(rng, 2, 10), w = pick(rng, 2, 10);
    oracle::MacCounter cc;
    const Tensor y = oracle::conv2d_reference(rng.normal_tensor({1, cin, h, w}, 1.0),
                                              rng.normal_tensor({cout, cin / g, k, k}, 1.0), Tensor(), p, &cc);
    ok = ok && cc.macs == conv2d_macs(1, cin, cout, y.dim(2), y.dim(3), k, k, g);
    // matmul
    const i64 m = pick(rng, 1, 9), kk = pick(rng, 1, 9), n = pick(rng, 1, 9);
    oracle::MacCounter mc;
    oracle::matmul_reference(rng.normal_tensor({m, kk}, 1.0), rng.normal_tensor({kk, n}, 1.0), &mc);
    ok = ok && mc.macs == matmul_macs(m, kk, n);
    // sampled attention
    const auto cfg = random_dgmn2_config(rng);
    const Dgmn2Attention attn = random_attention(rng, cfg);
    const i64 ah = pick(rng, 1, 8), aw = pick(rng, 1, 8);
    oracle::MacCounter ac;
    oracle::dgmn2_attention_reference(rng.normal_tensor({1, cfg.dim, ah, aw}, 1.0), attn, &ac);
    ok = ok && ac.macs == attention_ledger(cfg, ah, aw).total_macs();
    // dense attention
    const i64 pp = pick(rng, 1, 32), dd = pick(rng, 1, 6);
    oracle::MacCounter dc;
    oracle::dense_attention(rng.normal_tensor({pp, dd}, 1.0), rng.normal_tensor({pp, dd}, 1.0),
                            rng.normal_tensor({pp, dd}, 1.0), 1.0, &dc);
    ok = ok && dc.macs == dense_attention_ledger(pp, 1, dd, 1).total_macs();
    if (!ok) ++lc.mismatches;
  }
  return lc;
}

bool Report::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::string Report::to_json() const {
  nlohmann::ordered_json j;
  j["suite"] = suite;
  j["passed"] = passed();
  auto arr = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    arr.push_back({{"name", c.name},
                   {"passed", c.passed},
                   {"value", c.value},
                   {"threshold", c.threshold},
                   {"detail", c.detail},
                   {"seconds", c.seconds}});
  }
  j["checks"] = arr;
  return j.dump(2);
}

namespace {

void oracle_suite(Report& r, std::uint64_t seed) {
  using Fn = Agreement (*)(int, std::uint64_t);
  const Fn fns[] = {oracle_conv2d, oracle_bilinear, oracle_softmax, oracle_dmc, oracle_dgmn, oracle_dgmn2_attention};
  std::uint64_t s = seed;
  for (Fn fn : fns) {
    CheckResult c;
    Agreement a;
    timed([&] { a = fn(200, s++); return 0.0; }, c.seconds);
    c.name = "oracle." + a.name;
    c.value = a.max_error;
    c.threshold = 1e-10;
    c.passed = a.cases >= 200 && a.max_error <= 1e-10;
    c.detail = std::to_string(a.cases) + " random cases";
    r.checks.push_back(c);
  }
}

void grads_suite(Report& r, std::uint64_t seed) {
  auto add = [&](const std::string& name, const std::vector<GradCheck>& gc, double seconds) {
    CheckResult c;
    c.name = name;
    c.threshold = 1e-4;
    c.seconds = seconds;
    i64 scalars = 0;
    std::string worst;
    for (const auto& g : gc) {
      scalars += g.scalars;
      if (g.max_rel_error >= c.value) {
        c.value = g.max_rel_error;
        worst = g.name;
      }
    }
    c.passed = !gc.empty() && c.value < c.threshold;
    c.detail = std::to_string(gc.size()) + " tensors, " + std::to_string(scalars) + " scalars; worst " + worst;
    r.checks.push_back(c);
  };
  std::vector<GradCheck> g;
  double secs = 0.0;
  timed([&] { g = gradcheck_dgmn(seed); return 0.0; }, secs);
  add("grads.dgmn", g, secs);
  timed([&] { g = gradcheck_dgmn2_stack(seed + 1); return 0.0; }, secs);
  add("grads.dgmn2_stack", g, secs);
}

void invariant_suite(Report& r, std::uint64_t seed) {
  CheckResult c;
  c.value = timed([&] { return normalization_deviation(100, seed); }, c.seconds);
  c.name = "invariants.normalization";
  c.threshold = 1e-12;
  c.passed = c.value <= c.threshold;
  c.detail = "max |sum - 1| over affinity and attention rows, 100 forwards per module";
  r.checks.push_back(c);

  c = {};
  c.value = timed([&] { return dense_equivalence_error(seed); }, c.seconds);
  c.name = "invariants.dense_equivalence";
  c.threshold = 1e-10;
  c.passed = c.value <= c.threshold;
  c.detail = "4x4 map, K=16 absolute grid, zero walks and position bias";
  r.checks.push_back(c);

  LedgerCheck lc;
  double secs = 0.0;
  timed([&] { lc = ledger_checks(20, seed); return 0.0; }, secs);
  r.checks.push_back({"invariants.ledger_linear", lc.sampled_ratio == 2.0, lc.sampled_ratio, 2.0,
                      "sampled attention MACs (2H,W)/(H,W)", secs});
  r.checks.push_back({"invariants.ledger_dense_quadratic", lc.dense_ratio == 4.0, lc.dense_ratio, 4.0,
                      "dense attention MACs (2H,W)/(H,W)", 0.0});
  r.checks.push_back({"invariants.ledger_counter", lc.mismatches == 0 && lc.configs >= 20,
                      static_cast<double>(lc.mismatches), 0.0,
                      std::to_string(lc.configs) + " configs, analytic vs instrumented counts", 0.0});
}

}  // namespace

Report run_suite(const std::string& suite, std::uint64_t seed) {
  if (suite != "oracles" && suite != "grads" && suite != "invariants" && suite != "all") {
    throw ConfigError("unknown verification suite '" + suite + "' (expected oracles, grads, invariants, all)");
  }
  Report r;
  r.suite = suite;
  if (suite == "oracles" || suite == "all") oracle_suite(r, seed);
  if (suite == "grads" || suite == "all") grads_suite(r, seed);
  if (suite == "invariants" || suite == "all") invariant_suite(r, seed);
  return r;
}

}  // namespace dgmn::verify
