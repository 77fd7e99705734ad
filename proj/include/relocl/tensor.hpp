// Copyright 2026 the relocl authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "relocl/error.hpp"

namespace relocl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a backward pass touches the node
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<TensorNode>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(TensorNode&)> backward_fn;

  bool is_leaf() const { return !backward_fn && inputs.empty(); }
  std::vector<T>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

// Shared handle to a dense row-major tensor. Copies alias the same storage,
// so a parameter tensor held by a module and the handle used inside a graph
// accumulate into the same grad buffer.
template <typename T>
class Tensor {
 public:
  using Node = TensorNode<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  std::span<T> mutable_data() { return node_->data; }
  T item() const;
  T at(std::size_t i) const { return node_->data.at(i); }
  T at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  // Reverse-mode pass from this scalar. Consumes the graph: interior nodes
  // release their closures, and a second call throws UsageError.
  void backward();

  // Fresh leaf holding a copy of the values.
  Tensor detach() const;
  // Copy to another precision, as a leaf.
  template <typename U>
  Tensor<U> cast(bool requires_grad = false) const {
    std::vector<U> values(node_->data.begin(), node_->data.end());
    return Tensor<U>::from(node_->shape, std::move(values), requires_grad);
  }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Graph recording switch. Recording is on by default; inference paths wrap
// themselves in NoGradGuard so no closures are built.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool enabled);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Branch decisions taken by non-smooth ops (relu sign, max argmax). A
// gradient check compares traces of perturbed evaluations to find elements
// whose finite difference straddles a kink.
class KinkTrace {
 public:
  static std::vector<std::uint32_t>* active();
  static void record(std::uint32_t decision);
};

class KinkRecorder {
 public:
  KinkRecorder();
  ~KinkRecorder();
  KinkRecorder(const KinkRecorder&) = delete;
  KinkRecorder& operator=(const KinkRecorder&) = delete;
  const std::vector<std::uint32_t>& decisions() const { return decisions_; }

 private:
  std::vector<std::uint32_t> decisions_;
  std::vector<std::uint32_t>* previous_;
};

namespace detail {

// Builds an op result. Records the closure only when grad mode is on and some
// input requires grad.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values,
                      std::vector<std::shared_ptr<TensorNode<T>>> inputs,
                      std::function<void(TensorNode<T>&)> backward_fn);

}  // namespace detail

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace relocl
