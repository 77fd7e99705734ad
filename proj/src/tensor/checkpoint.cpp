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

#include "relocl/checkpoint.hpp"

#include <algorithm>

namespace relocl {

const CheckpointRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& record : records)
    if (record.name == name) return &record;
  return nullptr;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint) {
  ByteWriter out;
  out.magic("RLCK");
  out.u32(kCheckpointVersion);
  out.str(checkpoint.config.dump());
  out.u32(static_cast<std::uint32_t>(checkpoint.records.size()));
  for (const auto& record : checkpoint.records) {
    if (shape_numel(record.shape) != record.values.size()) {
      throw DimensionError("checkpoint record " + record.name + " has inconsistent shape");
    }
    out.str(record.name);
    out.u32(static_cast<std::uint32_t>(record.shape.size()));
    for (auto extent : record.shape) out.u32(static_cast<std::uint32_t>(extent));
    out.f32s(record.values);
  }
  return out.take();
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes, const std::string& what) {
  ByteReader in(bytes, what);
  in.expect_magic("RLCK");
  if (auto version = in.u32(); version != kCheckpointVersion) {
    throw DataError(what + ": unsupported version " + std::to_string(version));
  }
  Checkpoint checkpoint;
  try {
    checkpoint.config = nlohmann::json::parse(in.str());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(what + ": config is not valid JSON (" + e.what() + ")");
  }
  const std::uint32_t count = in.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointRecord record;
    record.name = in.str();
    const std::uint32_t rank = in.u32();
    if (rank > 8) throw DataError(what + ": implausible rank for " + record.name);
    for (std::uint32_t r = 0; r < rank; ++r) {
      const std::uint32_t extent = in.u32();
      if (extent == 0) throw DataError(what + ": zero extent in " + record.name);
      record.shape.push_back(extent);
    }
    const std::size_t n = shape_numel(record.shape);
    if (n * sizeof(float) > in.remaining()) throw DataError(what + ": truncated");
    record.values.resize(n);
    in.f32s(record.values);
    checkpoint.records.push_back(std::move(record));
  }
  if (!in.at_end()) throw DataError(what + ": trailing bytes");
  return checkpoint;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file_bytes(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file_bytes(path), path.string());
}

Digest checkpoint_fingerprint(const Checkpoint& checkpoint) {
  return sha256(serialize_checkpoint(checkpoint));
}

Checkpoint make_checkpoint(const nlohmann::json& config, const ParameterSet<float>& params) {
  Checkpoint checkpoint;
  checkpoint.config = config;
  for (const auto& item : params.items()) {
    auto values = item.tensor.data();
    checkpoint.records.push_back({item.name, item.tensor.shape(), {values.begin(), values.end()}});
  }
  return checkpoint;
}

void restore_parameters(const Checkpoint& checkpoint, ParameterSet<float>& params) {
  if (checkpoint.records.size() != params.items().size()) {
    throw ConfigError("checkpoint has " + std::to_string(checkpoint.records.size()) + " tensors, model expects " +
                      std::to_string(params.items().size()));
  }
  for (auto& item : params.items()) {
    const auto* record = checkpoint.find(item.name);
    if (!record) throw ConfigError("checkpoint is missing parameter " + item.name);
    if (record->shape != item.tensor.shape()) {
      throw ConfigError("checkpoint shape mismatch for " + item.name + ": " + shape_str(record->shape) + " vs " +
                        shape_str(item.tensor.shape()));
    }
    std::ranges::copy(record->values, item.tensor.mutable_data().begin());
  }
}

}  // namespace relocl
