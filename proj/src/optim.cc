// Copyright (c) 2026 The psyn Authors
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

#include "psyn/optim.h"

#include <algorithm>
#include <cmath>

namespace psyn {

float noam_lr(long step, std::size_t d_model, int warmup, float scale) {
  if (step < 1) throw ConfigError("learning-rate step must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return static_cast<float>(scale * std::pow(static_cast<double>(d_model), -0.5) *
                            std::min(std::pow(s, -0.5), s * std::pow(w, -1.5)));
}

void Adam::step(ParameterSet& params, float lr, const std::function<bool(const std::string&)>& filter) {
  for (const auto& [name, handle] : params.entries()) {
    Tensor tensor = handle;
    if (filter && !filter(name)) continue;
    auto& st = state_[name];
    if (st.m.empty()) {
      st.m.assign(tensor.size(), 0.0f);
      st.v.assign(tensor.size(), 0.0f);
    }
    ++st.steps;
    const double c1 = 1.0 - std::pow(static_cast<double>(beta1_), static_cast<double>(st.steps));
    const double c2 = 1.0 - std::pow(static_cast<double>(beta2_), static_cast<double>(st.steps));
    const float step_size = static_cast<float>(lr / c1);
    const float root_c2 = static_cast<float>(std::sqrt(c2));
    auto w = tensor.data();
    const std::vector<float> zeros = tensor.has_grad() ? std::vector<float>() : std::vector<float>(tensor.size());
    const std::vector<float>& g = tensor.has_grad() ? tensor.impl()->grad : zeros;
    for (std::size_t i = 0; i < w.size(); ++i) {
      st.m[i] = beta1_ * st.m[i] + (1.0f - beta1_) * g[i];
      st.v[i] = beta2_ * st.v[i] + (1.0f - beta2_) * g[i] * g[i];
      w[i] -= step_size * st.m[i] / (std::sqrt(st.v[i]) / root_c2 + eps_);
    }
  }
}

}  // namespace psyn
