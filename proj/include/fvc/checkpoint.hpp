// Copyright 2026 The fvclab Authors
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

// Binary checkpoint container, all fields little-endian:
//
//   "FVCK" u32 version=1 u32 n_tensors
//     n_tensors x { u16 name_len, name bytes (UTF-8), u8 rank, rank x u32 dim, f64 values }
//   optional trailing section:
//   "OPTS" u32 version=1 u64 step u32 stage u32 n_tensors { same tensor records }
//
// Values are stored as raw IEEE-754 doubles, so save/load round-trips bit-exactly.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "fvc/parameters.hpp"

namespace fvc {

struct OptimizerSnapshot {
  std::uint64_t step = 0;
  std::uint32_t stage = 0;
  TensorMap tensors;
};

struct CheckpointFile {
  TensorMap tensors;
  std::optional<OptimizerSnapshot> optimizer;
};

std::string encode_checkpoint(const CheckpointFile& ckpt);
/// Throws FormatError on a bad magic, version, truncation, or trailing garbage.
CheckpointFile decode_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& ckpt);
CheckpointFile read_checkpoint(const std::filesystem::path& path);

}  // namespace fvc
