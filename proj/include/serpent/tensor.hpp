// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense f32 tensor with reverse-mode differentiation.

#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace serpent {

using Shape = std::vector<int64_t>;

/// Raised when operand extents are incompatible with an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised on misuse of the computation graph (double backward, detached loss).
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::string shape_str(const Shape& shape);
int64_t shape_numel(const Shape& shape);

namespace detail {

struct TensorImpl;

// Backward rule of one recorded op. `apply` reads the output gradient from
// `out.grad` and accumulates into the gradients of `inputs`.
struct GradFn {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(const TensorImpl& out,
                     const std::vector<std::shared_ptr<TensorImpl>>& inputs)>
      apply;
  bool consumed = false;
};

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty when absent
  bool requires_grad = false;
  std::shared_ptr<GradFn> grad_fn;

  // Returns the gradient buffer, allocating zeros on first use.
  std::vector<float>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0f);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<float> data,
                          bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t rank() const { return static_cast<int64_t>(impl_->shape.size()); }
  // Negative indices count from the back.
  int64_t dim(int64_t i) const;
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  std::span<const float> data() const { return impl_->data; }
  // Direct write access, reserved for initialisers and optimisers.
  std::span<float> mutable_data() { return impl_->data; }
  float item() const;
  float at(std::initializer_list<int64_t> index) const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag) { impl_->requires_grad = flag; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const float> grad() const { return impl_->grad; }
  std::span<float> mutable_grad() { return impl_->grad_buffer(); }
  void zero_grad() { impl_->grad.clear(); }
  bool is_leaf() const { return impl_->grad_fn == nullptr; }

  // Copy of the values with no graph linkage.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Populates gradients of every tensor reachable from a scalar `loss`.
/// The graph is released afterwards; a second call on it throws GraphError.
void backward(const Tensor& loss);

/// True while graph recording is enabled on this thread.
bool grad_enabled();

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

using BackwardRule =
    std::function<void(const TensorImpl& out,
                       const std::vector<std::shared_ptr<TensorImpl>>& inputs)>;

// Wraps freshly computed values as an op output. A graph node is recorded
// only when recording is enabled and at least one input requires grad.
Tensor make_result(Shape shape, std::vector<float> data,
                   std::initializer_list<Tensor> inputs, BackwardRule rule);
Tensor make_result(Shape shape, std::vector<float> data,
                   const std::vector<Tensor>& inputs, BackwardRule rule);

}  // namespace detail

}  // namespace serpent
