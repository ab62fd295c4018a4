// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0

#include "serpent/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace serpent {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t e : shape) {
    if (e < 0) throw DimensionError("negative extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(static_cast<size_t>(shape_numel(shape)), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data,
                         bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw DimensionError("shape " + shape_str(shape) + " does not hold " +
                         std::to_string(data.size()) + " values");
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

int64_t Tensor::dim(int64_t i) const {
  const int64_t r = rank();
  if (i < 0) i += r;
  if (i < 0 || i >= r) {
    throw DimensionError("dim index out of range for " + shape_str(shape()));
  }
  return impl_->shape[static_cast<size_t>(i)];
}

float Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  }
  return impl_->data[0];
}

float Tensor::at(std::initializer_list<int64_t> index) const {
  if (static_cast<int64_t>(index.size()) != rank()) {
    throw DimensionError("index rank mismatch for " + shape_str(shape()));
  }
  int64_t flat = 0;
  size_t k = 0;
  for (int64_t i : index) {
    const int64_t extent = impl_->shape[k++];
    if (i < 0 || i >= extent) throw DimensionError("index out of range");
    flat = flat * extent + i;
  }
  return impl_->data[static_cast<size_t>(flat)];
}

Tensor Tensor::detach() const {
  return from_data(shape(), impl_->data, false);
}

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace detail {

template <typename Range>
static Tensor make_result_impl(Shape shape, std::vector<float> data,
                               const Range& inputs, BackwardRule rule) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  bool needs_grad = false;
  if (g_grad_enabled) {
    for (const Tensor& t : inputs) needs_grad = needs_grad || t.requires_grad();
  }
  if (needs_grad) {
    auto fn = std::make_shared<GradFn>();
    for (const Tensor& t : inputs) fn->inputs.push_back(t.impl());
    fn->apply = std::move(rule);
    impl->requires_grad = true;
    impl->grad_fn = std::move(fn);
  }
  return Tensor(std::move(impl));
}

Tensor make_result(Shape shape, std::vector<float> data,
                   std::initializer_list<Tensor> inputs, BackwardRule rule) {
  return make_result_impl(std::move(shape), std::move(data), inputs,
                          std::move(rule));
}

Tensor make_result(Shape shape, std::vector<float> data,
                   const std::vector<Tensor>& inputs, BackwardRule rule) {
  return make_result_impl(std::move(shape), std::move(data), inputs,
                          std::move(rule));
}

}  // namespace detail

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw DimensionError("backward needs a scalar loss, got " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) {
    throw GraphError("loss is detached: no input requires grad");
  }
  const auto& root = loss.impl();
  if (root->grad_fn && root->grad_fn->consumed) {
    throw GraphError("backward already ran on this graph");
  }

  // Post-order DFS gives a topological order (inputs before outputs).
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> visited;
  std::vector<std::pair<detail::TensorImpl*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const auto* fn = node->grad_fn.get();
    if (fn && next < fn->inputs.size()) {
      detail::TensorImpl* child = fn->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  for (auto* t : order) {
    if (t->grad_fn && t->grad_fn->consumed) {
      throw GraphError("graph contains a node whose backward already ran");
    }
  }

  root->grad_buffer()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* t = *it;
    t->grad_buffer();
    if (!t->grad_fn) continue;
    t->grad_fn->apply(*t, t->grad_fn->inputs);
  }
  for (auto* t : order) {
    if (!t->grad_fn) continue;
    t->grad_fn->consumed = true;
    t->grad_fn->apply = nullptr;
    t->grad_fn->inputs.clear();
  }
}

}  // namespace serpent
