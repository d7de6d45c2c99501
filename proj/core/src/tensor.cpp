#include "dgmn/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace dgmn {

namespace {
thread_local bool g_grad_enabled = true;
}

std::int64_t numel_of(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<TensorImpl>()) {
  const auto n = numel_of(shape);
  impl_->shape = std::move(shape);
  impl_->data.assign(static_cast<std::size_t>(n), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<TensorImpl>()) {
  const auto n = numel_of(shape);
  if (static_cast<std::size_t>(n) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " needs " + std::to_string(n) +
                     " values, got " + std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

const Shape& Tensor::shape() const {
  static const Shape empty;
  return impl_ ? impl_->shape : empty;
}

std::int64_t Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  }
  return shape()[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const { return impl_ ? static_cast<std::int64_t>(impl_->data.size()) : 0; }

std::span<double> Tensor::data() { return impl_->data; }
std::span<const double> Tensor::data() const { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

std::span<double> Tensor::grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

const std::shared_ptr<Node>& Tensor::grad_fn() const {
  static const std::shared_ptr<Node> none;
  return impl_ ? impl_->grad_fn : none;
}

Tensor Tensor::detach() const {
  Tensor t;
  t.impl_ = std::make_shared<TensorImpl>();
  t.impl_->shape = impl_->shape;
  t.impl_->data = impl_->data;
  return t;
}

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_result(Shape shape, std::vector<double> data, const char* op, std::vector<Tensor> inputs,
                   std::function<void(std::span<const double>)> backward) {
  Tensor out(std::move(shape), std::move(data));
  if (!g_grad_enabled) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  auto node = std::make_shared<Node>();
  node->op = op;
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  out.impl_->requires_grad = true;
  out.impl_->grad_fn = std::move(node);
  return out;
}

Graph::Graph(const Tensor& root) : root_(root) {
  // Iterative post-order DFS; recursion depth would track model depth otherwise.
  std::unordered_set<const TensorImpl*> seen;
  std::vector<std::pair<Tensor, std::size_t>> stack;
  if (root.grad_fn()) {
    stack.emplace_back(root, 0);
    seen.insert(root.impl());
  }
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    const auto& inputs = t.grad_fn()->inputs;
    if (next < inputs.size()) {
      const Tensor& in = inputs[next++];
      if (in.grad_fn() && seen.insert(in.impl()).second) stack.emplace_back(in, 0);
      continue;
    }
    order_.push_back(t);
    stack.pop_back();
  }
}

void Graph::backward() {
  for (const auto& t : order_) {
    if (t.grad_fn()->consumed) {
      throw GraphError(std::string("backward through op '") + t.grad_fn()->op +
                       "' that was already consumed; rebuild the forward graph first");
    }
  }
  Tensor root = root_;
  if (root.requires_grad()) root.grad()[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Tensor t = *it;
    auto& node = *t.grad_fn();
    node.backward(t.grad());
    node.consumed = true;
    node.backward = nullptr;  // release saved activations
    if (!t.same_storage(root)) {
      t.impl()->grad.clear();
      t.impl()->grad.shrink_to_fit();
    }
  }
}

void backward(const Tensor& loss, std::span<const Tensor> leaves) {
  if (loss.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  for (auto leaf : leaves) {
    if (leaf.defined()) (void)leaf.grad();
  }
  Graph(loss).backward();
}

}  // namespace dgmn
