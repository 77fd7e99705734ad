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
#include <functional>
#include <vector>

#include "relocl/tensor.hpp"

namespace relocl {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Elements whose ±h evaluations took a different branch at some relu/max
  // than the base point; the finite difference is meaningless there.
  std::size_t excluded = 0;
  // Analytic and numeric values at the worst element.
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares reverse-mode gradients of `loss` with respect to every element of
// `params` against central differences with step h, in 64-bit arithmetic.
// The per-element error is |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
GradCheckResult gradient_check(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> params,
                               double h);

// Single-input form: f is evaluated at `point` (which is made a grad leaf).
GradCheckResult gradient_check(const std::function<Tensor<double>(const Tensor<double>&)>& f, Tensor<double> point,
                               double h);

}  // namespace relocl
