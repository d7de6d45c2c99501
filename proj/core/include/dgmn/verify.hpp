#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dgmn/nn.hpp"
#include "dgmn/rng.hpp"

namespace dgmn::verify {

/// Agreement between a production kernel and its oracle over random cases.
struct Agreement {
  std::string name;
  int cases = 0;
  double max_error = 0.0;  // max absolute elementwise difference
};

Agreement oracle_conv2d(int cases, std::uint64_t seed);
Agreement oracle_bilinear(int cases, std::uint64_t seed);
Agreement oracle_softmax(int cases, std::uint64_t seed);
Agreement oracle_dmc(int cases, std::uint64_t seed);
Agreement oracle_dgmn(int cases, std::uint64_t seed);
Agreement oracle_dgmn2_attention(int cases, std::uint64_t seed);

/// Gradient of one parameter tensor, autodiff vs central differences.
struct GradCheck {
  std::string name;
  std::int64_t scalars = 0;
  double max_rel_error = 0.0;
};

/// Relative error used by the gradient checks: |a - n| / max(|a|, |n|, floor)
/// with floor = 1e-3 * max |n| over the tensor (plus 1e-12), so entries that
/// are tiny compared to the rest of the tensor are judged on absolute scale.
double relative_error(std::span<const double> analytic, std::span<const double> numeric);

/// Central differences of `loss` with respect to every entry of `param`.
std::vector<double> finite_diff(const std::function<double()>& loss, Tensor& param, double step = 1e-5);

/// Checks every parameter of `model` (and optionally `input`) under the
/// scalar loss sum(r * f()) for a fixed random r.
std::vector<GradCheck> check_gradients(const Module& model, const std::function<Tensor()>& forward, Rng& rng,
                                       double step = 1e-5);

/// DGMN module, rates {1, 4}, G = 4, K = 9, input 1x8x8x8.
std::vector<GradCheck> gradcheck_dgmn(std::uint64_t seed);
/// Two DGMN2 layers, dim 8, two heads, rates {1, 2}, input 1x8x8x8.
std::vector<GradCheck> gradcheck_dgmn2_stack(std::uint64_t seed);

/// Largest |sum - 1| over every affinity / attention distribution produced by
/// `forwards` random forwards of each module.
double normalization_deviation(int forwards, std::uint64_t seed);

/// 4x4 map, K = 16 absolute grid, zero walks and relative bias: sampled
/// attention vs dense attention (max abs difference).
double dense_equivalence_error(std::uint64_t seed);

struct LedgerCheck {
  double sampled_ratio = 0.0;  // attention MACs at (2H, W) / (H, W)
  double dense_ratio = 0.0;
  int configs = 0;
  int mismatches = 0;  // ledger vs instrumented counter
};
LedgerCheck ledger_checks(int configs, std::uint64_t seed);

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
  double seconds = 0.0;
};

struct Report {
  std::string suite;
  std::vector<CheckResult> checks;
  bool passed() const;
  std::string to_json() const;
};

/// Runs "oracles", "grads", "invariants" or "all". Unknown names raise ConfigError.
Report run_suite(const std::string& suite, std::uint64_t seed);

}  // namespace dgmn::verify
