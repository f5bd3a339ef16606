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

#include "taskrag/synthetic.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "taskrag/checkpoint.hpp"
#include "taskrag/rng.hpp"

namespace taskrag {

void SyntheticSpec::validate() const {
  if (blocks < 1) throw std::invalid_argument("synthetic: blocks must be >= 1");
  if (users < blocks || items < blocks) throw std::invalid_argument("synthetic: user and item counts must be >= blocks");
  if (!(within_prob >= 0.0 && within_prob <= 1.0)) throw std::invalid_argument("synthetic: within_prob outside [0, 1]");
  if (!(active_prob >= 0.0 && active_prob <= 1.0)) throw std::invalid_argument("synthetic: active_prob outside [0, 1]");
  if (interactions_per_user < 1) throw std::invalid_argument("synthetic: interactions_per_user must be >= 1");
  if (snapshots < 1) throw std::invalid_argument("synthetic: snapshots must be >= 1");
  if (drift_every < 1) throw std::invalid_argument("synthetic: drift_every must be >= 1");
  if (drift_start < 0 || drift_step < 0) throw std::invalid_argument("synthetic: negative drift schedule");
  if (granularity < 1) throw std::invalid_argument("synthetic: granularity must be >= 1");
}

std::int32_t SyntheticSpec::rotation(std::int32_t snapshot) const {
  if (snapshot < drift_start) return 0;
  return ((snapshot - drift_start) / drift_every + 1) * drift_step % blocks;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticData data;
  data.user_block.resize(static_cast<std::size_t>(spec.users));
  data.item_block.resize(static_cast<std::size_t>(spec.items));
  std::vector<std::vector<std::int32_t>> items_of_block(static_cast<std::size_t>(spec.blocks));
  for (std::int32_t u = 0; u < spec.users; ++u) {
    data.user_block[u] = static_cast<std::int32_t>(static_cast<std::int64_t>(u) * spec.blocks / spec.users);
  }
  for (std::int32_t i = 0; i < spec.items; ++i) {
    data.item_block[i] = static_cast<std::int32_t>(static_cast<std::int64_t>(i) * spec.blocks / spec.items);
    items_of_block[data.item_block[i]].push_back(i);
  }

  Rng rng(derive_seed(spec.seed, "synthetic"));
  for (std::int32_t t = 0; t < spec.snapshots; ++t) {
    const std::int64_t base = static_cast<std::int64_t>(t) * spec.granularity;
    for (std::int32_t u = 0; u < spec.users; ++u) {
      if (!rng.bernoulli(spec.active_prob)) continue;
      const std::int32_t preferred = (data.user_block[u] + spec.rotation(t)) % spec.blocks;
      for (std::int32_t k = 0; k < spec.interactions_per_user; ++k) {
        std::int32_t item;
        if (rng.bernoulli(spec.within_prob)) {
          const auto& pool = items_of_block[preferred];
          item = pool[rng.below(pool.size())];
        } else {
          item = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(spec.items)));
        }
        const auto offset = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(spec.granularity)));
        data.interactions.push_back({u, item, base + offset});
      }
    }
  }
  std::stable_sort(data.interactions.begin(), data.interactions.end(),
                   [](const Interaction& a, const Interaction& b) { return a.timestamp < b.timestamp; });
  return data;
}

void write_interactions(const std::vector<Interaction>& interactions, const std::filesystem::path& path) {
  std::string out;
  for (const auto& x : interactions) {
    out += std::to_string(x.user) + ',' + std::to_string(x.item) + ',' + std::to_string(x.timestamp) + '\n';
  }
  write_file(path, out);
}

namespace {

std::int64_t parse_field(std::string_view field, std::size_t line) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw FormatError("interactions line " + std::to_string(line) + ": invalid integer '" + std::string(field) + "'");
  }
  return v;
}

}  // namespace

std::vector<Interaction> read_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<Interaction> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string_view rest(line);
    std::int64_t fields[3];
    for (int f = 0; f < 3; ++f) {
      const auto comma = rest.find(',');
      if ((f < 2) == (comma == std::string_view::npos)) {
        throw FormatError("interactions line " + std::to_string(number) + ": expected user_id,item_id,timestamp");
      }
      fields[f] = parse_field(rest.substr(0, comma), number);
      if (comma != std::string_view::npos) rest.remove_prefix(comma + 1);
    }
    if (fields[2] < 0) throw FormatError("interactions line " + std::to_string(number) + ": negative timestamp");
    out.push_back({fields[0], fields[1], fields[2]});
  }
  if (out.empty()) throw FormatError("interactions file " + path.string() + " is empty");
  return out;
}

void write_blocks(const SyntheticData& data, const std::filesystem::path& path) {
  std::string out;
  for (std::size_t u = 0; u < data.user_block.size(); ++u) {
    out += "user," + std::to_string(u) + ',' + std::to_string(data.user_block[u]) + '\n';
  }
  for (std::size_t i = 0; i < data.item_block.size(); ++i) {
    out += "item," + std::to_string(i) + ',' + std::to_string(data.item_block[i]) + '\n';
  }
  write_file(path, out);
}

}  // namespace taskrag
