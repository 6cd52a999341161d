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

#include <cstdint>
#include <string>
#include <vector>

namespace psyn::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckResult> checks;
  double seconds = 0.0;

  bool passed() const;
  std::size_t failures() const;
};

// Finite-difference checks of every differentiable op (tolerance 1e-3) and
// of the composed blocks (1e-2).
SuiteReport gradient_suite(std::uint64_t seed = 1);
// Band masking, softmax normalization, the tied-matrix reduction to plain
// scaled dot-product attention, banded vs dense agreement, long inputs.
SuiteReport attention_suite(std::uint64_t seed = 1);
// Forward-sum and Viterbi against exhaustive segmentation enumeration.
SuiteReport alignment_suite(std::uint64_t seed = 1);
// Closed-form NLL, temperature-0 sampling, Monte-Carlo moments.
SuiteReport mdn_suite(std::uint64_t seed = 1);

std::vector<std::string> suite_names();
// "gradients", "attention", "alignment", "mdn" or "all".
std::vector<SuiteReport> run_suites(const std::string& name, std::uint64_t seed = 1);

}  // namespace psyn::verify
