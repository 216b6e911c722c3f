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

#include <algorithm>
#include <cmath>
#include <optional>

#include "binary_io.hpp"
#include "fvc/dsp.hpp"
#include "fvc/errors.hpp"

namespace fvc::dsp {

namespace {

struct FormatChunk {
  std::uint16_t audio_format;
  std::uint16_t channels;
  std::uint32_t sample_rate;
  std::uint16_t bits_per_sample;
};

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file_bytes(path);
  const std::string what = "wav " + path.string();
  detail::ByteReader r(bytes, what);
  if (r.get_bytes(4) != "RIFF") throw FormatError(what + ": missing RIFF tag");
  r.get<std::uint32_t>();  // riff size, not trusted
  if (r.get_bytes(4) != "WAVE") throw FormatError(what + ": missing WAVE tag");

  std::optional<FormatChunk> fmt;
  std::optional<std::string_view> data;
  while (r.remaining() >= 8 && !(fmt && data)) {
    const std::string_view id = r.get_bytes(4);
    const auto size = r.get<std::uint32_t>();
    if (size > r.remaining()) throw FormatError(what + ": chunk '" + std::string(id) + "' truncated");
    const std::string_view body = r.get_bytes(size);
    if (size % 2 == 1 && r.remaining() > 0) r.get_bytes(1);
    if (id == "fmt ") {
      if (size < 16) throw FormatError(what + ": fmt chunk too short");
      detail::ByteReader fr(body, what);
      FormatChunk f{};
      f.audio_format = fr.get<std::uint16_t>();
      f.channels = fr.get<std::uint16_t>();
      f.sample_rate = fr.get<std::uint32_t>();
      fr.get<std::uint32_t>();  // byte rate
      fr.get<std::uint16_t>();  // block align
      f.bits_per_sample = fr.get<std::uint16_t>();
      fmt = f;
    } else if (id == "data") {
      data = body;
    }
  }
  if (!fmt) throw FormatError(what + ": no fmt chunk");
  if (!data) throw FormatError(what + ": no data chunk");
  if (fmt->audio_format != 1) {
    throw FormatError(what + ": audio_format " + std::to_string(fmt->audio_format) + " is not PCM (1)");
  }
  if (fmt->channels != 1) {
    throw FormatError(what + ": channels = " + std::to_string(fmt->channels) + ", expected mono (1)");
  }
  if (fmt->sample_rate != static_cast<std::uint32_t>(kSampleRate)) {
    throw FormatError(what + ": sample_rate = " + std::to_string(fmt->sample_rate) + ", expected 16000");
  }
  if (fmt->bits_per_sample != 16) {
    throw FormatError(what + ": bits_per_sample = " + std::to_string(fmt->bits_per_sample) +
                      ", expected 16");
  }
  if (data->size() % 2 != 0) throw FormatError(what + ": data chunk has an odd byte count");

  Waveform w;
  detail::ByteReader dr(*data, what);
  w.samples.resize(data->size() / 2);
  for (auto& s : w.samples) s = static_cast<double>(dr.get<std::int16_t>()) / 32768.0;
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  if (w.sample_rate != kSampleRate) {
    throw FormatError("write_wav: sample_rate = " + std::to_string(w.sample_rate) + ", expected 16000");
  }
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  detail::ByteWriter out;
  out.put_bytes("RIFF");
  out.put<std::uint32_t>(36 + data_bytes);
  out.put_bytes("WAVE");
  out.put_bytes("fmt ");
  out.put<std::uint32_t>(16);
  out.put<std::uint16_t>(1);
  out.put<std::uint16_t>(1);
  out.put<std::uint32_t>(kSampleRate);
  out.put<std::uint32_t>(kSampleRate * 2);
  out.put<std::uint16_t>(2);
  out.put<std::uint16_t>(16);
  out.put_bytes("data");
  out.put<std::uint32_t>(data_bytes);
  for (double s : w.samples) {
    if (!std::isfinite(s)) throw NumericError("write_wav: non-finite sample");
    const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    out.put<std::int16_t>(static_cast<std::int16_t>(q));
  }
  detail::write_file_bytes(path, out.str());
}

}  // namespace fvc::dsp
