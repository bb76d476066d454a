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
#include "framing.hpp"

#include <cstdint>

namespace gradbroker {

namespace {

void read_exact(ByteStream& stream, unsigned char* out, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const std::size_t r = stream.read_some(out + got, n - got);
    if (r == 0) throw FramingError("stream ended mid-frame");
    got += r;
  }
}

}  // namespace

std::string frame_payload(const std::string& payload) {
  if (payload.empty()) throw FramingError("refusing to frame empty payload");
  if (payload.size() > kMaxFrameBytes) throw FramingError("payload exceeds 16 MiB");
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(4 + payload.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out += payload;
  return out;
}

void write_frame(ByteStream& stream, const std::string& payload) {
  const std::string framed = frame_payload(payload);
  stream.write_all(reinterpret_cast<const unsigned char*>(framed.data()),
                   framed.size());
}

std::string read_frame(ByteStream& stream) {
  unsigned char header[4];
  read_exact(stream, header, 4);
  const std::uint32_t n = (static_cast<std::uint32_t>(header[0]) << 24) |
                          (static_cast<std::uint32_t>(header[1]) << 16) |
                          (static_cast<std::uint32_t>(header[2]) << 8) |
                          static_cast<std::uint32_t>(header[3]);
  if (n == 0) throw FramingError("zero-length frame");
  if (n > kMaxFrameBytes) throw FramingError("frame exceeds 16 MiB");
  std::string payload(n, '\0');
  read_exact(stream, reinterpret_cast<unsigned char*>(payload.data()), n);
  return payload;
}

}  // namespace gradbroker
