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

#include "relocl/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace relocl {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {
thread_local bool grad_enabled = true;
thread_local std::vector<std::uint32_t>* kink_trace = nullptr;
}  // namespace

bool GradMode::enabled() { return grad_enabled; }
void GradMode::set_enabled(bool enabled) { grad_enabled = enabled; }

std::vector<std::uint32_t>* KinkTrace::active() { return kink_trace; }
void KinkTrace::record(std::uint32_t decision) {
  if (kink_trace) kink_trace->push_back(decision);
}

KinkRecorder::KinkRecorder() : previous_(kink_trace) { kink_trace = &decisions_; }
KinkRecorder::~KinkRecorder() { kink_trace = previous_; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  for (auto extent : shape) {
    if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->data.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  for (auto extent : shape) {
    if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return from({}, {value});
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename T>
T Tensor<T>::at(std::size_t r, std::size_t c) const {
  if (rank() != 2 || r >= dim(0) || c >= dim(1)) throw DimensionError("at(r, c) out of range");
  return node_->data[r * dim(1) + c];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(node_->shape, node_->data, false);
}

template <typename T>
void Tensor<T>::backward() {
  if (numel() != 1) throw UsageError("backward() requires a scalar loss, got " + shape_str(shape()));
  if (node_->consumed) throw UsageError("backward() called twice on the same graph");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS yields a topological order (inputs first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && !visited.count(child)) {
        if (child->consumed) throw UsageError("backward() through a consumed graph");
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn) node->backward_fn(*node);
  }
  for (Node* node : order) {
    if (node->is_leaf()) {
      for (T g : node->grad) {
        if (!std::isfinite(g)) throw NumericError("non-finite gradient after backward()");
      }
      continue;
    }
    node->backward_fn = nullptr;
    node->inputs.clear();
    node->grad.clear();
    node->grad.shrink_to_fit();
    node->consumed = true;
  }
}

namespace detail {

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values,
                      std::vector<std::shared_ptr<TensorNode<T>>> inputs,
                      std::function<void(TensorNode<T>&)> backward_fn) {
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  if (GradMode::enabled()) {
    bool any = false;
    for (const auto& input : inputs) any = any || input->requires_grad;
    if (any) {
      node->requires_grad = true;
      node->inputs = std::move(inputs);
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor<T>(std::move(node));
}

template Tensor<float> make_result(Shape, std::vector<float>, std::vector<std::shared_ptr<TensorNode<float>>>,
                                   std::function<void(TensorNode<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, std::vector<std::shared_ptr<TensorNode<double>>>,
                                    std::function<void(TensorNode<double>&)>);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;

}  // namespace relocl
