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

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "relocl/byte_io.hpp"
#include "relocl/optim.hpp"

namespace relocl {

// Container layout (little-endian):
//   "RLCK" | u32 version=1 | u32 config_len | config JSON (UTF-8)
//   u32 record_count | record*
// record: u32 name_len | name | u32 rank | u32 extents[rank] | f32 payload
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  nlohmann::json config;
  std::vector<CheckpointRecord> records;

  const CheckpointRecord* find(const std::string& name) const;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes, const std::string& what = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// SHA-256 of the serialized container; ties indexes to the weights that
// produced them.
Digest checkpoint_fingerprint(const Checkpoint& checkpoint);

Checkpoint make_checkpoint(const nlohmann::json& config, const ParameterSet<float>& params);
// Copies every record into the same-named parameter; names and shapes must
// match exactly.
void restore_parameters(const Checkpoint& checkpoint, ParameterSet<float>& params);

}  // namespace relocl
