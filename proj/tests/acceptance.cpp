// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: dgmn_acceptance <path-to-dgmn-cli> <scratch-dir>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sys/wait.h>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "dgmn/analysis.hpp"
#include "dgmn/backbone.hpp"
#include "dgmn/toy.hpp"
#include "dgmn/verify.hpp"

namespace {

using namespace dgmn;
using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  std::printf("[%s] %d %s: %s\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string summarize(const verify::Report& r, bool& ok) {
  std::string out;
  ok = !r.checks.empty();
  for (const auto& c : r.checks) {
    ok = ok && c.passed;
    if (!out.empty()) out += ", ";
    out += c.name + "=" + fmt("%.3g", c.value) + (c.passed ? "" : " (over)");
  }
  return out;
}

void oracles() {
  const auto t0 = Clock::now();
  const auto r = verify::run_suite("oracles", 1);
  const double secs = seconds_since(t0);
  bool ok = false;
  const std::string s = summarize(r, ok);
  report(1, ok && secs < 60.0, "oracle equivalence (200 configs per kernel, <=1e-10)", s + fmt(", %.1fs", secs));
}

void grads() {
  const auto r = verify::run_suite("grads", 2);
  bool ok = false;
  const std::string s = summarize(r, ok);
  report(2, ok, "finite-difference gradients (rel < 1e-4)", s);
}

void dense_equivalence() {
  const double e = verify::dense_equivalence_error(3);
  report(3, e <= 1e-10, "sampled == dense on a 4x4 map with K=16", fmt("max |diff| = %.3g", e));
}

void ledger() {
  const auto l = verify::ledger_checks(20, 4);
  const bool ok = l.sampled_ratio == 2.0 && l.dense_ratio == 4.0 && l.mismatches == 0 && l.configs >= 20;
  report(4, ok, "MAC ledger ratios 2.000 / 4.000, counter == ledger",
         fmt("sampled %.6f", l.sampled_ratio) + fmt(", dense %.6f", l.dense_ratio) + ", " +
             std::to_string(l.mismatches) + " mismatches over " + std::to_string(l.configs) + " configs");
}

void architecture() {
  struct Target {
    Variant v;
    double params;
  };
  const Target targets[] = {{Variant::kTiny, 12.1e6}, {Variant::kSmall, 21.0e6}, {Variant::kMedium, 35.8e6},
                            {Variant::kLarge, 48.3e6}};
  bool ok = true;
  std::string detail;
  for (const auto& t : targets) {
    const Backbone m(BackboneSpec::make(t.v), 0);
    const double p = static_cast<double>(count_params(m));
    const double dev = std::abs(p - t.params) / t.params;
    ok = ok && dev <= 0.05;
    detail += to_string(t.v) + fmt("=%.2fM", p / 1e6) + fmt("(%+.1f%%) ", 100.0 * (p - t.params) / t.params);
    const auto& st = m.spec().stages;
    const std::int64_t dims[] = {64, 128, 320, 512};
    const int heads[] = {1, 2, 5, 8}, exps[] = {8, 8, 4, 4};
    for (int i = 0; i < 4; ++i) {
      ok = ok && st[i].dim == dims[i] && st[i].heads == heads[i] && st[i].expansion == exps[i];
      ok = ok && m.stages()[static_cast<std::size_t>(i)].layers.front().config().dim == dims[i];
    }
  }
  // Strides measured on real feature maps.
  Rng rng(5);
  const Tensor x = rng.normal_tensor({1, 3, 64, 64}, 1.0);
  for (auto mode : {BackboneMode::kClassify, BackboneMode::kDense}) {
    Backbone m(BackboneSpec::make(Variant::kTiny, mode), 0);
    m.set_training(false);
    NoGradGuard g;
    const auto feats = m.forward_features(x);
    const std::array<int, 4> want =
        mode == BackboneMode::kClassify ? std::array<int, 4>{4, 8, 16, 32} : std::array<int, 4>{4, 8, 8, 8};
    std::string s;
    for (int i = 0; i < 4; ++i) {
      const auto stride = 64 / feats[static_cast<std::size_t>(i)].dim(2);
      ok = ok && stride == want[static_cast<std::size_t>(i)] && m.spec().output_strides()[static_cast<std::size_t>(i)] == want[static_cast<std::size_t>(i)];
      s += (i ? "," : "") + std::to_string(stride);
    }
    detail += to_string(mode) + " strides (" + s + ") ";
  }
  report(5, ok, "architecture: params within 5%, strides, dims/heads/expansions", detail);
}

void normalization() {
  const double d = verify::normalization_deviation(100, 6);
  report(6, d <= 1e-12, "affinity and attention rows sum to 1", fmt("max |sum-1| = %.3g", d));
}

void toy() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : {0, 1, 2}) {
    SyntheticTask task;
    task.seed = seed;
    const Dataset data = make_dataset(task);
    double acc[2] = {0.0, 0.0};
    int steps[2] = {0, 0};
    const int rates[] = {4, 1};
    for (int i = 0; i < 2; ++i) {
      ToyModelConfig mc;
      mc.rates = {rates[i]};
      ToyModel model(mc, task.size, seed);
      TrainOptions opts;
      opts.stop_accuracy = 0.95;
      const auto h = train(model, data, opts);
      for (const auto& r : h) acc[i] = std::max(acc[i], r.accuracy);
      steps[i] = h.back().step;
    }
    ok = ok && acc[0] >= 0.95 && acc[1] < 0.80;
    detail += "seed " + std::to_string(seed) + fmt(": rate4 %.3f", acc[0]) + " @" + std::to_string(steps[0]) +
              fmt(", rate1 %.3f; ", acc[1]);
  }
  const double secs = seconds_since(t0);
  report(7, ok && secs < 600.0, "classify_blobs: rate-4 >= 95%, rate-1 < 80%", detail + fmt("%.0fs", secs));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

void determinism(const std::string& cli, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string d = dir.string() + "/";
  {
    std::ofstream(d + "tiny.json") << R"({"variant": "tiny"})";
  }
  bool ok = run(cli + " random-input --shape 1,3,224,224 --seed 7 --out " + d + "x.dgt") == 0;
  for (const char* tag : {"a", "b"}) {
    ok = ok && run(cli + " forward --model " + d + "tiny.json --input " + d + "x.dgt --seed 3 --out " + d + "y_" +
                   tag + ".dgt") == 0;
    ok = ok && run(cli + " train-toy --task classify_blobs --steps 15 --seed 0 --metrics " + d + "m_" + tag +
                   ".csv") == 0;
  }
  const std::string ya = slurp(d + "y_a.dgt"), ma = slurp(d + "m_a.csv");
  const bool same_fwd = !ya.empty() && ya == slurp(d + "y_b.dgt");
  const bool same_toy = !ma.empty() && ma == slurp(d + "m_b.csv");
  report(8, ok && same_fwd && same_toy, "forward and train-toy are byte-identical across runs",
         std::string("forward ") + (same_fwd ? "identical" : "DIFFERENT") + " (" + std::to_string(ya.size()) +
             " bytes), train-toy " + (same_toy ? "identical" : "DIFFERENT"));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::fprintf(stderr, "usage: %s <dgmn-cli> <scratch-dir>\n", argv[0]);
    return 2;
  }
  oracles();
  grads();
  dense_equivalence();
  ledger();
  architecture();
  normalization();
  toy();
  determinism(argv[1], argv[2]);
  std::printf("%s: %d of 8 criteria failed\n", failures ? "FAILED" : "OK", failures);
  return failures ? 1 : 0;
}
