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

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include "psyn/config.h"
#include "psyn/model.h"
#include "psyn/optim.h"

namespace psyn {

inline constexpr std::string_view kCheckpointMagic = "PSYN0001";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::unique_ptr<TtsModel> model;
  Adam adam;
  TrainConfig train;
  long step = 0;
};

// Magic, u64 metadata length, JSON metadata (format version, stage, step,
// model and train settings, optimizer hyper-parameters and per-tensor step
// counts, tensor directory), then float32 payloads in directory order.
std::string serialize_checkpoint(const TtsModel& model, const Adam& adam, const TrainConfig& train, long step);
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const TtsModel& model, const Adam& adam,
                     const TrainConfig& train, long step);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace psyn
