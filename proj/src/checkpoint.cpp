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

#include "fvc/checkpoint.hpp"

#include <limits>

#include "binary_io.hpp"
#include "fvc/errors.hpp"

namespace fvc {

namespace {

constexpr std::string_view kTensorMagic = "FVCK";
constexpr std::string_view kOptimizerMagic = "OPTS";
constexpr std::uint32_t kVersion = 1;

void put_tensors(detail::ByteWriter& w, const TensorMap& tensors) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw FormatError("tensor name too long: " + name.substr(0, 32) + "...");
    }
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.put_bytes(name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (double v : t.values()) w.put<double>(v);
  }
}

TensorMap get_tensors(detail::ByteReader& r) {
  TensorMap out;
  const auto n = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto len = r.get<std::uint16_t>();
    std::string name(r.get_bytes(len));
    const auto rank = r.get<std::uint8_t>();
    if (rank < 1 || rank > 3) throw FormatError("checkpoint: tensor " + name + " has rank " + std::to_string(rank));
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = r.get<std::uint32_t>();
      if (d == 0) throw FormatError("checkpoint: tensor " + name + " has a zero extent");
      count *= d;
    }
    if (count > r.remaining() / sizeof(double)) throw FormatError("checkpoint: truncated values for " + name);
    std::vector<double> values(count);
    for (auto& v : values) v = r.get<double>();
    if (!out.emplace(name, Tensor(std::move(shape), std::move(values))).second) {
      throw FormatError("checkpoint: duplicate tensor " + name);
    }
  }
  return out;
}

}  // namespace

std::string encode_checkpoint(const CheckpointFile& ckpt) {
  detail::ByteWriter w;
  w.put_bytes(kTensorMagic);
  w.put<std::uint32_t>(kVersion);
  put_tensors(w, ckpt.tensors);
  if (ckpt.optimizer) {
    w.put_bytes(kOptimizerMagic);
    w.put<std::uint32_t>(kVersion);
    w.put<std::uint64_t>(ckpt.optimizer->step);
    w.put<std::uint32_t>(ckpt.optimizer->stage);
    put_tensors(w, ckpt.optimizer->tensors);
  }
  return std::move(w.str());
}

CheckpointFile decode_checkpoint(const std::string& bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  if (r.get_bytes(4) != kTensorMagic) throw FormatError("checkpoint: bad magic, expected FVCK");
  if (const auto v = r.get<std::uint32_t>(); v != kVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(v));
  }
  CheckpointFile ckpt;
  ckpt.tensors = get_tensors(r);
  if (!r.at_end()) {
    if (r.get_bytes(4) != kOptimizerMagic) throw FormatError("checkpoint: unexpected trailing data");
    if (const auto v = r.get<std::uint32_t>(); v != kVersion) {
      throw FormatError("checkpoint: unsupported optimizer section version " + std::to_string(v));
    }
    OptimizerSnapshot opt;
    opt.step = r.get<std::uint64_t>();
    opt.stage = r.get<std::uint32_t>();
    opt.tensors = get_tensors(r);
    ckpt.optimizer = std::move(opt);
    if (!r.at_end()) throw FormatError("checkpoint: trailing bytes after optimizer section");
  }
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& ckpt) {
  detail::write_file_bytes(path, encode_checkpoint(ckpt));
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file_bytes(path));
}

}  // namespace fvc
