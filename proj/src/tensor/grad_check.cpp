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

#include "relocl/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace relocl {

namespace {

struct Evaluation {
  double value;
  std::vector<std::uint32_t> trace;
};

Evaluation evaluate(const std::function<Tensor<double>()>& loss) {
  NoGradGuard no_grad;
  KinkRecorder recorder;
  double value = loss().item();
  return {value, recorder.decisions()};
}

}  // namespace

GradCheckResult gradient_check(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> params,
                               double h) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  std::vector<std::uint32_t> base_trace;
  {
    KinkRecorder recorder;
    Tensor<double> out = loss();
    base_trace = recorder.decisions();
    out.backward();
  }

  GradCheckResult result;
  for (auto& p : params) {
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad()) std::ranges::copy(p.grad(), analytic.begin());
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      Evaluation plus = evaluate(loss);
      values[i] = saved - h;
      Evaluation minus = evaluate(loss);
      values[i] = saved;
      if (plus.trace != base_trace || minus.trace != base_trace) {
        ++result.excluded;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * h);
      const double err = std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_analytic = analytic[i];
        result.worst_numeric = numeric;
      }
      ++result.checked;
    }
  }
  return result;
}

GradCheckResult gradient_check(const std::function<Tensor<double>(const Tensor<double>&)>& f, Tensor<double> point,
                               double h) {
  return gradient_check([&] { return f(point); }, {point}, h);
}

}  // namespace relocl
