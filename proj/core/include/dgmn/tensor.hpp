#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dgmn/errors.hpp"

namespace dgmn {

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;
struct Node;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first touched
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;
};

/// Dense row-major float64 array with optional gradient storage.
///
/// Copies are shallow: two Tensor handles may refer to the same storage.
/// Use clone() for a deep copy and detach() to drop the autograd history.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t dim(int axis) const;
  int rank() const { return static_cast<int>(shape().size()); }
  std::int64_t numel() const;

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;

  // Gradient buffer; allocated as zeros on first access. Writable through a
  // const handle because handles are shallow.
  std::span<double> grad() const;
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  void zero_grad();

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  const std::shared_ptr<Node>& grad_fn() const;
  bool is_leaf() const { return !grad_fn(); }

  Tensor detach() const;
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  TensorImpl* impl() const { return impl_.get(); }

 private:
  friend Tensor make_result(Shape, std::vector<double>, const char*, std::vector<Tensor>,
                            std::function<void(std::span<const double>)>);
  std::shared_ptr<TensorImpl> impl_;
};

/// One recorded op. `backward` receives the gradient of the op's output and
/// accumulates into the gradients of `inputs`.
struct Node {
  const char* op = "";
  std::vector<Tensor> inputs;
  std::function<void(std::span<const double>)> backward;
  bool consumed = false;
};

/// Builds an op output; attaches a graph node only when grad mode is on and
/// some input requires grad.
Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                   std::vector<Tensor> inputs,
                   std::function<void(std::span<const double>)> backward);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Topologically ordered view of the ops reachable from a root tensor.
class Graph {
 public:
  explicit Graph(const Tensor& root);

  // Tensors with a grad_fn, inputs before consumers.
  const std::vector<Tensor>& nodes() const { return order_; }
  std::size_t size() const { return order_.size(); }

  // Seeds d(root)/d(root) = 1 and runs every node's backward once.
  void backward();

 private:
  Tensor root_;
  std::vector<Tensor> order_;
};

/// Populates grads of every requires_grad leaf reachable from `loss`.
/// `loss` must hold exactly one element. Leaves listed in `leaves` are given a
/// zero gradient buffer even when unreachable.
void backward(const Tensor& loss, std::span<const Tensor> leaves = {});

}  // namespace dgmn
