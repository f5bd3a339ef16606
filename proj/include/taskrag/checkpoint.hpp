/*
 * Copyright 2026 The taskrag Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "taskrag/params.hpp"

namespace taskrag {

inline constexpr std::string_view kCheckpointMagic = "TASKRAG1";

// On disk: the 8 magic bytes, a little-endian u64 manifest length, a JSON
// manifest (kind, metadata, array names/shapes/offsets, extra sections), then
// the payload: raw little-endian float32 arrays followed by opaque sections.
struct Checkpoint {
  std::string kind;
  std::map<std::string, std::string> meta;
  ParameterSet<float> arrays;
  std::vector<std::pair<std::string, std::string>> sections;

  const std::string& section(std::string_view name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

// Zigzag LEB128 integers for compact integer sections.
class VarintWriter {
 public:
  void put(std::int64_t v);
  const std::string& bytes() const { return out_; }

 private:
  std::string out_;
};

class VarintReader {
 public:
  explicit VarintReader(std::string_view in) : in_(in) {}
  std::int64_t get();
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace taskrag
