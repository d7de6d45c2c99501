#include <cmath>
#include <vector>

#include "doctest.h"
#include "dgmn/errors.hpp"
#include "dgmn/ops.hpp"
#include "dgmn/rng.hpp"
#include "dgmn/tensor.hpp"

using namespace dgmn;

TEST_CASE("product rule through a shared input") {
  Tensor x = Tensor(Shape{3}, std::vector<double>{1.0, -2.0, 0.5});
  x.set_requires_grad(true);
  // f = sum(x * x + 3x)  =>  df/dx = 2x + 3
  Tensor f = sum(add(mul(x, x), scale(x, 3.0)));
  backward(f);
  CHECK(f.item() == doctest::Approx(1.0 + 4.0 + 0.25 + 3.0 * (-0.5)));
  CHECK(x.grad()[0] == doctest::Approx(5.0));
  CHECK(x.grad()[1] == doctest::Approx(-1.0));
  CHECK(x.grad()[2] == doctest::Approx(4.0));
}

TEST_CASE("backward twice through the same graph is rejected") {
  Tensor x = Tensor(Shape{2}, 1.0);
  x.set_requires_grad(true);
  Tensor f = sum(mul(x, x));
  backward(f);
  CHECK_THROWS_AS(backward(f), GraphError);
}

TEST_CASE("no-grad guard records nothing") {
  Tensor x = Tensor(Shape{2}, 1.0);
  x.set_requires_grad(true);
  {
    NoGradGuard g;
    Tensor y = mul(x, x);
    CHECK(y.is_leaf());
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(grad_enabled());
  CHECK_FALSE(mul(x, x).is_leaf());
}

TEST_CASE("permute moves gradients back") {
  Rng rng(3);
  Tensor x = rng.normal_tensor({2, 3, 4}, 1.0);
  x.set_requires_grad(true);
  const int perm[] = {2, 0, 1};
  Tensor z = permute(x, perm);
  CHECK(z.shape() == Shape{4, 2, 3});
  CHECK(z.data()[1 * 6 + 0 * 3 + 2] == x.data()[0 * 12 + 2 * 4 + 1]);
  Tensor w = Tensor(z.shape(), 0.0);
  for (std::int64_t i = 0; i < w.numel(); ++i) w.data()[i] = static_cast<double>(i);
  backward(sum(mul(z, w)));
  // d/dx[a,b,c] = w[c,a,b]
  CHECK(x.grad()[1 * 12 + 2 * 4 + 3] == doctest::Approx(3 * 6 + 1 * 3 + 2));
}

TEST_CASE("cross entropy of uniform logits is log(classes)") {
  Tensor logits = Tensor::zeros({5, 4});
  const int labels[] = {0, 1, 2, 3, 0};
  CHECK(cross_entropy_loss(logits, labels).item() == doctest::Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("rng streams are reproducible and truncated normal stays in range") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(7);
  for (int i = 0; i < 10000; ++i) {
    const double z = c.truncated_normal(0.5);
    CHECK(std::abs(z) <= 1.0);
  }
}
