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

#include "fvc/feature_io.hpp"

#include "binary_io.hpp"
#include "fvc/errors.hpp"

namespace fvc {

namespace {
constexpr std::uint32_t kFrameVersion = 1;
}

std::string encode_frames(std::string_view magic, const Tensor& frames) {
  if (frames.rank() != 2) throw ShapeError("frame matrix must be 2-D, got " + shape_to_string(frames.shape()));
  detail::ByteWriter w;
  w.put_bytes(magic);
  w.put<std::uint32_t>(kFrameVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(frames.rows()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(frames.cols()));
  for (double v : frames.values()) w.put<float>(static_cast<float>(v));
  return std::move(w.str());
}

Tensor decode_frames(std::string_view magic, std::size_t expected_cols, const std::string& bytes) {
  const std::string what = std::string(magic) + " file";
  detail::ByteReader r(bytes, what);
  if (r.get_bytes(4) != magic) throw FormatError(what + ": bad magic");
  if (const auto v = r.get<std::uint32_t>(); v != kFrameVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(v));
  }
  const auto T = r.get<std::uint32_t>();
  const auto cols = r.get<std::uint32_t>();
  if (cols != expected_cols) {
    throw FormatError(what + ": n_cols = " + std::to_string(cols) + ", expected " + std::to_string(expected_cols));
  }
  if (T == 0) throw FormatError(what + ": zero frames");
  if (r.remaining() != static_cast<std::size_t>(T) * cols * sizeof(float)) {
    throw FormatError(what + ": payload size does not match T x n_cols");
  }
  Tensor out({T, cols});
  for (auto& v : out.values()) v = static_cast<double>(r.get<float>());
  return out;
}

void write_frames(const std::filesystem::path& path, std::string_view magic, const Tensor& frames) {
  detail::write_file_bytes(path, encode_frames(magic, frames));
}

Tensor read_frames(const std::filesystem::path& path, std::string_view magic, std::size_t expected_cols) {
  return decode_frames(magic, expected_cols, detail::read_file_bytes(path));
}

}  // namespace fvc
