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

#include "taskrag/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "json.hpp"

namespace taskrag {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64_le(std::string_view in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[i])) << (8 * i);
  return v;
}

std::uint32_t get_u32_le(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

}  // namespace

const std::string& Checkpoint::section(std::string_view name) const {
  for (const auto& [n, bytes] : sections) {
    if (n == name) return bytes;
  }
  throw FormatError("checkpoint has no section '" + std::string(name) + "'");
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string payload;
  json arrays = json::array();
  for (const auto& e : ckpt.arrays) {
    arrays.push_back({{"name", e.name},
                      {"shape", {e.value.rows(), e.value.cols()}},
                      {"offset", payload.size()},
                      {"dtype", "f32le"}});
    for (Eigen::Index i = 0; i < e.value.size(); ++i) put_u32_le(payload, std::bit_cast<std::uint32_t>(e.value.data()[i]));
  }
  json sections = json::array();
  for (const auto& [name, bytes] : ckpt.sections) {
    sections.push_back({{"name", name}, {"offset", payload.size()}, {"bytes", bytes.size()}});
    payload += bytes;
  }
  const json manifest = {{"kind", ckpt.kind},
                         {"meta", ckpt.meta},
                         {"arrays", arrays},
                         {"sections", sections},
                         {"payload_bytes", payload.size()}};
  const std::string text = manifest.dump();
  std::string out(kCheckpointMagic);
  const std::uint64_t n = text.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
  out += text;
  out += payload;
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < kCheckpointMagic.size() || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw FormatError("checkpoint: bad magic bytes (expected " + std::string(kCheckpointMagic) + ")");
  }
  std::size_t pos = kCheckpointMagic.size();
  if (bytes.size() < pos + 8) throw FormatError("checkpoint: truncated at offset " + std::to_string(bytes.size()));
  const std::uint64_t manifest_len = get_u64_le(bytes.substr(pos, 8));
  pos += 8;
  if (bytes.size() - pos < manifest_len) {
    throw FormatError("checkpoint: manifest truncated at offset " + std::to_string(bytes.size()));
  }
  json manifest;
  try {
    manifest = json::parse(bytes.substr(pos, manifest_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed manifest: ") + e.what());
  }
  pos += manifest_len;
  const std::string_view payload = bytes.substr(pos);
  const auto payload_bytes = manifest.at("payload_bytes").get<std::size_t>();
  if (payload.size() < payload_bytes) {
    throw FormatError("checkpoint: payload truncated at offset " + std::to_string(bytes.size()) + ", expected " +
                      std::to_string(pos + payload_bytes) + " bytes");
  }

  Checkpoint ckpt;
  ckpt.kind = manifest.at("kind").get<std::string>();
  ckpt.meta = manifest.at("meta").get<std::map<std::string, std::string>>();
  for (const auto& a : manifest.at("arrays")) {
    const auto rows = a.at("shape").at(0).get<Eigen::Index>();
    const auto cols = a.at("shape").at(1).get<Eigen::Index>();
    const auto offset = a.at("offset").get<std::size_t>();
    const std::size_t need = static_cast<std::size_t>(rows * cols) * 4;
    if (offset + need > payload_bytes) {
      throw FormatError("checkpoint: array '" + a.at("name").get<std::string>() + "' truncated at offset " +
                        std::to_string(pos + offset));
    }
    MatrixXf m(rows, cols);
    const char* p = payload.data() + offset;
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::bit_cast<float>(get_u32_le(p + 4 * i));
    ckpt.arrays.add(a.at("name").get<std::string>(), std::move(m));
  }
  for (const auto& s : manifest.at("sections")) {
    const auto offset = s.at("offset").get<std::size_t>();
    const auto n = s.at("bytes").get<std::size_t>();
    if (offset + n > payload_bytes) {
      throw FormatError("checkpoint: section '" + s.at("name").get<std::string>() + "' truncated at offset " +
                        std::to_string(pos + offset));
    }
    ckpt.sections.emplace_back(s.at("name").get<std::string>(), std::string(payload.substr(offset, n)));
  }
  return ckpt;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

void VarintWriter::put(std::int64_t v) {
  auto u = (static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63);
  while (u >= 0x80) {
    out_.push_back(static_cast<char>((u & 0x7f) | 0x80));
    u >>= 7;
  }
  out_.push_back(static_cast<char>(u));
}

std::int64_t VarintReader::get() {
  std::uint64_t u = 0;
  for (int shift = 0;; shift += 7) {
    if (pos_ >= in_.size() || shift > 63) throw FormatError("varint section truncated at byte " + std::to_string(pos_));
    const auto b = static_cast<unsigned char>(in_[pos_++]);
    u |= static_cast<std::uint64_t>(b & 0x7f) << shift;
    if (!(b & 0x80)) break;
  }
  return static_cast<std::int64_t>(u >> 1) ^ -static_cast<std::int64_t>(u & 1);
}

}  // namespace taskrag
