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
#include <span>
#include <string>
#include <vector>

#include "relocl/tensor.hpp"

namespace relocl {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double warmup_proportion = 0.01;
  std::size_t total_steps = 0;
};

// Per-parameter moments plus the shared step counter.
struct OptimizerState {
  AdamWConfig config;
  std::size_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

// Linear warmup from 0 over ceil(warmup_proportion * total_steps) steps, then
// constant.
double scheduled_lr(const AdamWConfig& config, std::size_t step);

struct ParamSlot {
  std::span<float> values;
  std::span<const float> grad;
  bool decay = true;
};

// One AdamW update. Increments state.step, then applies decoupled weight
// decay and the bias-corrected moment update to every slot.
void adamw_step(std::span<const ParamSlot> params, OptimizerState& state);

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
  bool decay = true;
};

// Ordered collection of trainable tensors. Registration order is the
// serialization and optimizer order.
template <typename T>
class ParameterSet {
 public:
  Tensor<T> add(std::string name, Tensor<T> tensor, bool decay = true);
  const std::vector<NamedParameter<T>>& items() const { return items_; }
  std::vector<NamedParameter<T>>& items() { return items_; }
  const NamedParameter<T>* find(const std::string& name) const;
  std::size_t total_elements() const;
  void zero_grad();

 private:
  std::vector<NamedParameter<T>> items_;
};

class AdamW {
 public:
  explicit AdamW(AdamWConfig config) { state_.config = config; }
  // Applies one step from the current grads. Parameters without a grad
  // buffer are treated as having zero gradient.
  void step(ParameterSet<float>& params);
  double current_lr() const { return scheduled_lr(state_.config, state_.step); }
  const OptimizerState& state() const { return state_; }

 private:
  OptimizerState state_;
};

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;

}  // namespace relocl
