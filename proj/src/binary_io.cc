// Copyright (c) 2026 The psyn Authors
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

#include "psyn/binary_io.h"

#include <fstream>
#include <sstream>

namespace psyn {

void ByteWriter::floats(std::span<const float> values) {
  for (float f : values) u32(std::bit_cast<std::uint32_t>(f));
}

std::string_view ByteReader::bytes(std::size_t n) {
  if (n > remaining()) {
    throw FormatError(what_ + ": truncated at byte " + std::to_string(pos_) + " (need " + std::to_string(n) +
                      ", have " + std::to_string(remaining()) + ")");
  }
  auto out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

void ByteReader::floats(std::span<float> out) {
  for (auto& f : out) f = std::bit_cast<float>(u32());
}

void ByteReader::expect_magic(std::string_view magic) {
  if (remaining() < magic.size() || data_.substr(pos_, magic.size()) != magic)
    throw FormatError(what_ + ": bad magic, expected " + std::string(magic));
  pos_ += magic.size();
}

void ByteReader::expect_end() {
  if (remaining() != 0) throw FormatError(what_ + ": " + std::to_string(remaining()) + " trailing bytes");
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace psyn
