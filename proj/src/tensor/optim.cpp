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

#include "relocl/optim.hpp"

#include <cmath>

namespace relocl {

double scheduled_lr(const AdamWConfig& config, std::size_t step) {
  const auto warmup =
      static_cast<std::size_t>(std::ceil(config.warmup_proportion * static_cast<double>(config.total_steps)));
  if (warmup == 0 || step >= warmup) return config.lr;
  return config.lr * static_cast<double>(step) / static_cast<double>(warmup);
}

void adamw_step(std::span<const ParamSlot> params, OptimizerState& state) {
  if (state.first_moment.empty()) {
    for (const auto& slot : params) {
      state.first_moment.emplace_back(slot.values.size(), 0.0);
      state.second_moment.emplace_back(slot.values.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adamw_step: parameter count changed between steps");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p].values.size() != state.first_moment[p].size() ||
        (!params[p].grad.empty() && params[p].grad.size() != params[p].values.size())) {
      throw DimensionError("adamw_step: parameter/gradient shape mismatch at slot " + std::to_string(p));
    }
  }

  ++state.step;
  const auto& cfg = state.config;
  const double lr = scheduled_lr(cfg, state.step);
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    auto values = params[p].values;
    const double decay = params[p].decay ? cfg.weight_decay : 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = params[p].grad.empty() ? 0.0 : static_cast<double>(params[p].grad[i]);
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      const double theta = values[i];
      const double updated = theta - lr * decay * theta - lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
      values[i] = static_cast<float>(updated);
    }
  }
}

template <typename T>
Tensor<T> ParameterSet<T>::add(std::string name, Tensor<T> tensor, bool decay) {
  if (find(name)) throw ConfigError("duplicate parameter name: " + name);
  tensor.set_requires_grad(true);
  items_.push_back({std::move(name), tensor, decay});
  return tensor;
}

template <typename T>
const NamedParameter<T>* ParameterSet<T>::find(const std::string& name) const {
  for (const auto& item : items_)
    if (item.name == name) return &item;
  return nullptr;
}

template <typename T>
std::size_t ParameterSet<T>::total_elements() const {
  std::size_t n = 0;
  for (const auto& item : items_) n += item.tensor.numel();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& item : items_) item.tensor.zero_grad();
}

void AdamW::step(ParameterSet<float>& params) {
  std::vector<ParamSlot> slots;
  slots.reserve(params.items().size());
  for (auto& item : params.items()) {
    std::span<const float> grad;
    if (item.tensor.has_grad()) grad = item.tensor.grad();
    slots.push_back({item.tensor.mutable_data(), grad, item.decay});
  }
  adamw_step(slots, state_);
}

template class ParameterSet<float>;
template class ParameterSet<double>;

}  // namespace relocl
