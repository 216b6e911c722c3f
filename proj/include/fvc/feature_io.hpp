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

// Frame-matrix container used for mel spectrograms ("MELS", 80 columns) and
// linguistic features ("LING", 256 columns):
//
//   magic[4] u32 version=1 u32 T u32 n_cols, then T * n_cols little-endian f32, row-major.

#include <filesystem>
#include <string>
#include <string_view>

#include "fvc/tensor.hpp"

namespace fvc {

inline constexpr std::string_view kMelMagic = "MELS";
inline constexpr std::string_view kLinguisticMagic = "LING";

std::string encode_frames(std::string_view magic, const Tensor& frames);
/// Throws FormatError on a wrong magic, version, column count or size.
Tensor decode_frames(std::string_view magic, std::size_t expected_cols, const std::string& bytes);

void write_frames(const std::filesystem::path& path, std::string_view magic, const Tensor& frames);
Tensor read_frames(const std::filesystem::path& path, std::string_view magic, std::size_t expected_cols);

}  // namespace fvc
