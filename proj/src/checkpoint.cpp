// Copyright (c) the CVC Project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cvc/checkpoint.hpp"

#include <fstream>

#include "cvc/training.hpp"
#include "json.hpp"

namespace cvc {

namespace {

constexpr char kCkptMagic[4] = {'C', 'V', 'C', 'W'};
constexpr std::uint8_t kCkptVersion = 1;

nlohmann::json config_to_json(const CodecConfig& c) {
  return nlohmann::json{{"condition_mode", to_string(c.condition_mode)},
                        {"motion_mode", to_string(c.motion_mode)},
                        {"entropy_mode", to_string(c.entropy_mode)},
                        {"context_dim", c.context_dim},
                        {"lambda", c.lambda},
                        {"distortion_metric", to_string(c.distortion_metric)}};
}

CodecConfig config_from_json(const nlohmann::json& j) {
  CodecConfig c;
  c.condition_mode = condition_mode_from_string(j.at("condition_mode"));
  c.motion_mode = motion_mode_from_string(j.at("motion_mode"));
  c.entropy_mode = entropy_mode_from_string(j.at("entropy_mode"));
  c.context_dim = j.at("context_dim");
  c.lambda = j.at("lambda");
  c.distortion_metric = distortion_metric_from_string(j.at("distortion_metric"));
  c.validate();
  return c;
}

void write_tensor(std::ofstream& out, const Tensor& t) {
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

Tensor read_tensor(std::ifstream& in, const std::vector<int>& shape) {
  Tensor t(shape);
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.numel() * sizeof(double)));
  if (!in) throw DataError("truncated checkpoint tensor payload");
  return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const VideoCodecModel& model,
                     int stage, std::int64_t step, const Adam* opt) {
  const nn::ParamMap params = model.parameters();

  nlohmann::json j;
  j["config"] = config_to_json(model.config);
  j["schedule"] = {{"stage", stage}, {"step", step}};
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, p] : params) {
    tensors.push_back({{"name", name}, {"shape", p->value.shape()}});
  }
  j["tensors"] = tensors;
  j["opt"] = nlohmann::json{{"present", opt != nullptr}};
  if (opt != nullptr) {
    auto* mutable_opt = const_cast<Adam*>(opt);
    j["opt"]["t"] = opt->steps_taken();
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [name, m] : mutable_opt->moment1()) {
      entries.push_back({{"name", name}, {"shape", m.shape()}});
    }
    j["opt"]["entries"] = entries;
  }
  const std::string header = j.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write(kCkptMagic, 4);
  out.put(static_cast<char>(kCkptVersion));
  const std::uint32_t len = static_cast<std::uint32_t>(header.size());
  for (int i = 3; i >= 0; --i) out.put(static_cast<char>((len >> (8 * i)) & 0xff));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, p] : params) write_tensor(out, p->value);
  if (opt != nullptr) {
    auto* mutable_opt = const_cast<Adam*>(opt);
    for (const auto& [name, m] : mutable_opt->moment1()) {
      write_tensor(out, m);
      write_tensor(out, mutable_opt->moment2().at(name));
    }
  }
  if (!out) throw DataError("write failed: " + path);
}

CheckpointData load_checkpoint_data(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kCkptMagic)) {
    throw DataError("bad checkpoint magic: " + path);
  }
  const int version = in.get();
  if (version != kCkptVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len = (len << 8) | static_cast<std::uint8_t>(in.get());
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated checkpoint header");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint header: " + std::string(e.what()));
  }

  CheckpointData data;
  data.config = config_from_json(j.at("config"));
  data.schedule_stage = j.at("schedule").at("stage");
  data.schedule_step = j.at("schedule").at("step");
  for (const auto& t : j.at("tensors")) {
    const std::string name = t.at("name");
    const std::vector<int> shape = t.at("shape").get<std::vector<int>>();
    data.tensors.emplace(name, read_tensor(in, shape));
  }
  if (j.contains("opt") && j["opt"].value("present", false)) {
    data.has_opt = true;
    data.opt_t = j["opt"].at("t");
    for (const auto& t : j["opt"].at("entries")) {
      const std::string name = t.at("name");
      const std::vector<int> shape = t.at("shape").get<std::vector<int>>();
      data.opt_m.emplace(name, read_tensor(in, shape));
      data.opt_v.emplace(name, read_tensor(in, shape));
    }
  }
  return data;
}

void apply_checkpoint(VideoCodecModel& model, const CheckpointData& data,
                      bool strict) {
  nn::ParamMap params = model.parameters();
  for (auto& [name, p] : params) {
    const auto it = data.tensors.find(name);
    if (it == data.tensors.end()) {
      if (strict) throw DataError("checkpoint is missing tensor " + name);
      continue;
    }
    if (!(it->second.shape() == p->value.shape())) {
      if (strict) {
        throw DataError("checkpoint tensor " + name + " has shape " +
                        it->second.shape_str() + ", model expects " +
                        p->value.shape_str());
      }
      continue;  // architecture variant: keep the fresh initialization
    }
    p->value = it->second;
  }
}

VideoCodecModel load_model(const std::string& path) {
  const CheckpointData data = load_checkpoint_data(path);
  VideoCodecModel model = VideoCodecModel::init(data.config, 0);
  apply_checkpoint(model, data, /*strict=*/true);
  return model;
}

}  // namespace cvc
