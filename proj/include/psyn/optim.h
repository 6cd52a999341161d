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

#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "psyn/layers.h"

namespace psyn {

// d_model^-0.5 * min(step^-0.5, step * warmup^-1.5), times `scale`.
// Steps count from 1.
float noam_lr(long step, std::size_t d_model, int warmup, float scale);

struct AdamMoments {
  std::vector<float> m;
  std::vector<float> v;
  long steps = 0;
};

class Adam {
 public:
  Adam() = default;
  Adam(float beta1, float beta2, float eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // One update of every parameter accepted by `filter` from its gradient.
  // Moment buffers are created lazily per parameter name.
  void step(ParameterSet& params, float lr, const std::function<bool(const std::string&)>& filter = {});

  float beta1() const { return beta1_; }
  float beta2() const { return beta2_; }
  float eps() const { return eps_; }
  std::map<std::string, AdamMoments>& state() { return state_; }
  const std::map<std::string, AdamMoments>& state() const { return state_; }

 private:
  float beta1_ = 0.9f;
  float beta2_ = 0.98f;
  float eps_ = 1e-9f;
  std::map<std::string, AdamMoments> state_;
};

}  // namespace psyn
