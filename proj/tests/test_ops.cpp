#include <cmath>
#include <vector>

#include "doctest.h"
#include "dgmn/dgmn2.hpp"
#include "dgmn/fault.hpp"
#include "dgmn/ops.hpp"
#include "dgmn/oracle.hpp"
#include "dgmn/rng.hpp"
#include "dgmn/sampler.hpp"

using namespace dgmn;

namespace {

Tensor iota(Shape shape, double start = 1.0) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = start + static_cast<double>(i);
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST_CASE("conv2d box filter on a 3x3 ramp") {
  const Tensor x = iota({1, 1, 3, 3});
  const Tensor w = Tensor::ones({1, 1, 3, 3});
  const Tensor y = conv2d(x, w, Tensor(Shape{1}, 0.5), {1, 1});
  REQUIRE(y.shape() == Shape{1, 1, 3, 3});
  CHECK(y.data()[0] == 12.5);  // 1 + 2 + 4 + 5
  CHECK(y.data()[4] == 45.5);
  CHECK(y.data()[8] == 28.5);  // 5 + 6 + 8 + 9
}

TEST_CASE("conv2d stride, dilation and groups agree with the reference") {
  Rng rng(11);
  for (Conv2dParams p : {Conv2dParams{2, 1, 1, 1}, Conv2dParams{1, 2, 2, 1}, Conv2dParams{1, 1, 1, 2}}) {
    const Tensor x = rng.normal_tensor({2, 4, 7, 6}, 1.0);
    const Tensor w = rng.normal_tensor({6, 4 / p.groups, 3, 3}, 1.0);
    const Tensor b = rng.normal_tensor({6}, 1.0);
    CHECK(max_abs_diff(conv2d(x, w, b, p), oracle::conv2d_reference(x, w, b, p)) < 1e-12);
  }
}

TEST_CASE("bilinear sampling at fractional and out-of-range points") {
  const Tensor map = iota({1, 1, 2, 2});  // [[1, 2], [3, 4]]
  const Tensor coords(Shape{1, 5, 2}, {0.5, 0.5, 0.0, -1.0, 0.0, -0.5, 1.25, 0.0, 1.0, 1.0});
  const Tensor out = bilinear_sample(map, coords);
  REQUIRE(out.shape() == Shape{1, 5, 1});
  CHECK(out.data()[0] == doctest::Approx(2.5));
  CHECK(out.data()[1] == 0.0);
  CHECK(out.data()[2] == doctest::Approx(0.5));
  CHECK(out.data()[3] == doctest::Approx(2.25));
  CHECK(out.data()[4] == 4.0);
}

TEST_CASE("bilinear coordinate gradient follows the map slope") {
  // map[y, x] = 2y + 3x, so d/dy = 2 and d/dx = 3 away from the border.
  Tensor map({1, 1, 4, 4});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) map.data()[y * 4 + x] = 2.0 * y + 3.0 * x;
  auto grad_at = [&](bool fault) {
    testing::ScopedFault f(fault ? testing::Fault::kBilinearBackwardSign : testing::Fault::kNone);
    Tensor c(Shape{1, 1, 2}, {1.3, 1.6});
    c.set_requires_grad(true);
    backward(sum(bilinear_sample(map, c)));
    return std::vector<double>(c.grad().begin(), c.grad().end());
  };
  const auto g = grad_at(false);
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(3.0));
  const auto bad = grad_at(true);
  CHECK(bad[0] == doctest::Approx(-2.0));
}

TEST_CASE("softmax of log weights recovers the weights") {
  const Tensor x(Shape{1, 3}, {0.0, std::log(2.0), std::log(5.0)});
  const Tensor s = softmax(x, 1);
  CHECK(s.data()[0] == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(s.data()[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(s.data()[2] == doctest::Approx(0.625).epsilon(1e-15));
  const std::vector<double> big = {1000.0, 1000.0};
  CHECK(oracle::softmax_reference(big)[0] == 0.5);
}

TEST_CASE("gelu uses the exact erf form") {
  CHECK(oracle::gelu_reference(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-15));
  const Tensor x(Shape{3}, {-1.0, 0.0, 1.0});
  const Tensor y = gelu(x);
  CHECK(y.data()[0] == doctest::Approx(-0.15865525393145707).epsilon(1e-14));
  CHECK(y.data()[1] == 0.0);
}

TEST_CASE("layer norm over the last axis matches the reference") {
  Rng rng(5);
  const Tensor x = rng.normal_tensor({3, 5, 8}, 2.0);
  const Tensor g = rng.normal_tensor({8}, 1.0), b = rng.normal_tensor({8}, 1.0);
  CHECK(max_abs_diff(layer_norm(x, g, b, 1e-6), oracle::layer_norm_reference(x, g, b, 1e-6)) < 1e-12);
}

TEST_CASE("grid offsets") {
  const auto o = grid_offsets(2, 9);
  REQUIRE(o.size() == 9);
  CHECK(o[0] == std::array<int, 2>{-2, -2});
  CHECK(o[4] == std::array<int, 2>{0, 0});
  CHECK(o[8] == std::array<int, 2>{2, 2});
  const auto e = grid_offsets(1, 16);
  CHECK(e[0] == std::array<int, 2>{-2, -2});
  CHECK(e[15] == std::array<int, 2>{1, 1});
  CHECK_THROWS(grid_offsets(1, 8));
}

TEST_CASE("uniform grid is centered on the query") {
  const Tensor g = uniform_grid(5, 5, 2, 9);
  REQUIRE(g.shape() == Shape{5, 5, 9, 2});
  const std::int64_t q = (2 * 5 + 3) * 18;  // query (2, 3)
  CHECK(g.data()[q + 0] == 0.0);
  CHECK(g.data()[q + 1] == 1.0);
  CHECK(g.data()[q + 4 * 2] == 2.0);
  CHECK(g.data()[q + 4 * 2 + 1] == 3.0);
}

TEST_CASE("relative-position table interpolation clamps at the edges") {
  const std::vector<double> t = {0.0, 10.0, 20.0};
  CHECK(interp_table(t, 0.5) == doctest::Approx(15.0));
  CHECK(interp_table(t, -0.25) == doctest::Approx(7.5));
  CHECK(interp_table(t, 5.0) == 20.0);
  CHECK(interp_table(t, -3.0) == 0.0);
}
