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

#include "psyn/checkpoint.h"

#include <json.hpp>

#include "psyn/binary_io.h"

namespace psyn {
namespace {

using nlohmann::json;

json settings_to_json(const std::string& text) {
  json out = json::object();
  for (const auto& [k, v] : parse_settings(text)) out[k] = v;
  return out;
}

Settings json_to_settings(const json& j) {
  Settings out;
  for (const auto& [k, v] : j.items()) out[k] = v.get<std::string>();
  return out;
}

json directory_entry(const std::string& name, const std::string& kind, const Shape& shape) {
  return json{{"name", name}, {"kind", kind}, {"shape", shape}};
}

}  // namespace

std::string serialize_checkpoint(const TtsModel& model, const Adam& adam, const TrainConfig& train, long step) {
  json meta;
  meta["format_version"] = kCheckpointVersion;
  meta["stage"] = model.trained_stage();
  meta["step"] = step;
  meta["model"] = settings_to_json(model_config_to_settings(model.config()));
  meta["train"] = settings_to_json(train_config_to_settings(train));
  json steps = json::object();
  json directory = json::array();
  for (const auto& [name, t] : model.params().entries()) directory.push_back(directory_entry(name, "param", t.shape()));
  for (const auto& [name, st] : adam.state()) {
    steps[name] = st.steps;
    const Shape shape{st.m.size()};
    directory.push_back(directory_entry(name, "adam_m", shape));
    directory.push_back(directory_entry(name, "adam_v", shape));
  }
  meta["optimizer"] = json{{"beta1", adam.beta1()}, {"beta2", adam.beta2()}, {"eps", adam.eps()}, {"steps", steps}};
  meta["tensors"] = directory;

  const std::string text = meta.dump();
  ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u64(text.size());
  w.bytes(text);
  for (const auto& [name, t] : model.params().entries()) w.floats(t.data());
  for (const auto& [name, st] : adam.state()) {
    w.floats(st.m);
    w.floats(st.v);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  ByteReader r(bytes, "checkpoint");
  r.expect_magic(kCheckpointMagic);
  const std::uint64_t meta_len = r.u64();
  json meta;
  try {
    meta = json::parse(r.bytes(meta_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  try {
    if (meta.at("format_version").get<int>() != kCheckpointVersion)
      throw FormatError("checkpoint format version " + meta.at("format_version").dump() + " is not supported");
    ModelConfig mc;
    TrainConfig tc;
    apply_settings(json_to_settings(meta.at("model")), mc, tc);
    apply_settings(json_to_settings(meta.at("train")), mc, tc);

    Checkpoint ck;
    ck.model = std::make_unique<TtsModel>(mc);
    ck.model->set_trained_stage(meta.at("stage").get<int>());
    ck.step = meta.at("step").get<long>();
    ck.train = tc;
    const json& opt = meta.at("optimizer");
    ck.adam = Adam(opt.at("beta1").get<float>(), opt.at("beta2").get<float>(), opt.at("eps").get<float>());

    const json& directory = meta.at("tensors");
    const auto& params = ck.model->params();
    std::size_t param_index = 0;
    for (const json& entry : directory) {
      const auto name = entry.at("name").get<std::string>();
      const auto kind = entry.at("kind").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      if (kind == "param") {
        if (param_index >= params.size() || params.entries()[param_index].first != name)
          throw FormatError("checkpoint tensor '" + name + "' does not match the configured model");
        Tensor t = params.entries()[param_index].second;
        if (t.shape() != shape)
          throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_to_string(shape) + ", model expects " +
                            shape_to_string(t.shape()));
        r.floats(t.data());
        ++param_index;
      } else if (kind == "adam_m" || kind == "adam_v") {
        if (!params.contains(name)) throw FormatError("optimizer state for unknown tensor '" + name + "'");
        auto& st = ck.adam.state()[name];
        auto& buf = kind == "adam_m" ? st.m : st.v;
        buf.resize(shape_numel(shape));
        r.floats(buf);
        st.steps = opt.at("steps").at(name).get<long>();
      } else {
        throw FormatError("unknown checkpoint tensor kind '" + kind + "'");
      }
    }
    if (param_index != params.size())
      throw FormatError("checkpoint holds " + std::to_string(param_index) + " of " + std::to_string(params.size()) +
                        " parameters");
    r.expect_end();
    return ck;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const TtsModel& model, const Adam& adam,
                     const TrainConfig& train, long step) {
  write_file_bytes(path, serialize_checkpoint(model, adam, train, step));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  try {
    return deserialize_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace psyn
