//
// Copyright 2026 The gradbroker Authors
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
//
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gradbroker {

inline constexpr std::size_t kMaxFrameBytes = 16 * 1024 * 1024;

class FramingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Minimal blocking byte stream; implemented by the TCP transport and by
/// in-memory test doubles.
class ByteStream {
 public:
  virtual ~ByteStream() = default;

  virtual void write_all(const unsigned char* data, std::size_t n) = 0;

  /// Reads up to n bytes into out; returns the count read, 0 on end of stream.
  virtual std::size_t read_some(unsigned char* out, std::size_t n) = 0;
};

/// 4-byte big-endian payload length followed by the payload. Zero-length and
/// oversize (> kMaxFrameBytes) frames are rejected.
std::string frame_payload(const std::string& payload);

void write_frame(ByteStream& stream, const std::string& payload);

/// Reads one full frame. Throws FramingError on a zero/oversize length or a
/// stream that ends mid-frame.
std::string read_frame(ByteStream& stream);

}  // namespace gradbroker
