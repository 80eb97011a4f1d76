#pragma once

// 16-bit PCM mono WAV. Samples are exchanged as doubles in [-1, 1).

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ftfd/io/container.hpp"

namespace ftfd::io {

struct Audio {
  std::uint32_t sample_rate = 16000;
  std::vector<double> samples;
};

inline std::string encode_wav(const Audio& a) {
  const auto data_bytes = static_cast<std::uint32_t>(a.samples.size() * 2);
  std::string out = "RIFF";
  le::put<std::uint32_t>(out, 36 + data_bytes);
  out += "WAVEfmt ";
  le::put<std::uint32_t>(out, 16);
  le::put<std::uint16_t>(out, 1);  // PCM
  le::put<std::uint16_t>(out, 1);  // mono
  le::put<std::uint32_t>(out, a.sample_rate);
  le::put<std::uint32_t>(out, a.sample_rate * 2);
  le::put<std::uint16_t>(out, 2);
  le::put<std::uint16_t>(out, 16);
  out += "data";
  le::put<std::uint32_t>(out, data_bytes);
  for (double s : a.samples) {
    const long q = std::lround(std::clamp(s, -1.0, 1.0) * 32767.0);
    le::put<std::uint16_t>(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return out;
}

inline Audio decode_wav(std::string_view b, const std::string& origin = "wav") {
  auto fail = [&](const std::string& msg) -> void { throw FormatError(FormatError::Kind::malformed, origin + ": " + msg); };
  if (b.size() < 12 || b.substr(0, 4) != "RIFF" || b.substr(8, 4) != "WAVE") {
    throw FormatError(FormatError::Kind::bad_magic, origin + ": not a RIFF/WAVE file");
  }
  std::size_t at = 12;
  bool have_fmt = false;
  Audio a;
  while (at + 8 <= b.size()) {
    const std::string_view id = b.substr(at, 4);
    const std::uint32_t len = le::get<std::uint32_t>(b, at + 4);
    at += 8;
    if (b.size() - at < len) throw FormatError(FormatError::Kind::truncated, origin + ": truncated '" + std::string(id) + "' chunk");
    if (id == "fmt ") {
      if (len < 16) fail("short fmt chunk");
      const auto format = le::get<std::uint16_t>(b, at);
      const auto channels = le::get<std::uint16_t>(b, at + 2);
      a.sample_rate = le::get<std::uint32_t>(b, at + 4);
      const auto bits = le::get<std::uint16_t>(b, at + 14);
      if (format != 1 || bits != 16) fail("only 16-bit PCM is supported (format " + std::to_string(format) + ", " + std::to_string(bits) + " bits)");
      if (channels != 1) fail("expected mono audio, got " + std::to_string(channels) + " channels");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) fail("data chunk before fmt chunk");
      a.samples.resize(len / 2);
      for (std::size_t i = 0; i < a.samples.size(); ++i) {
        a.samples[i] = static_cast<std::int16_t>(le::get<std::uint16_t>(b, at + 2 * i)) / 32768.0;
      }
      return a;
    }
    at += len + (len & 1);
  }
  fail("no data chunk");
  return a;
}

inline void write_wav(const std::string& path, const Audio& a) { write_file(path, encode_wav(a)); }

/// Reads a WAV file and requires the given sample rate (no resampling).
inline Audio read_wav(const std::string& path, std::uint32_t expected_rate = 16000) {
  Audio a = decode_wav(read_file(path), path);
  if (expected_rate != 0 && a.sample_rate != expected_rate) {
    throw FormatError(FormatError::Kind::malformed, path + ": sample rate " + std::to_string(a.sample_rate) + " Hz, expected " +
                                                        std::to_string(expected_rate) + " Hz");
  }
  return a;
}

}  // namespace ftfd::io
