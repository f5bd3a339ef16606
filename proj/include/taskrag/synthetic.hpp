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
#include <vector>

#include "taskrag/graph.hpp"

namespace taskrag {

// Block-structured interaction generator with scheduled drift. Users and items
// are split into `blocks` contiguous groups. In snapshot t a user of block b
// picks an item from block (b + rotation(t)) mod blocks with probability
// within_prob, otherwise an item uniformly from the whole catalogue.
struct SyntheticSpec {
  std::int32_t users = 20;
  std::int32_t items = 20;
  std::int32_t blocks = 2;
  double within_prob = 0.9;
  std::int32_t interactions_per_user = 4;  // draws per active user per snapshot
  double active_prob = 1.0;                // chance a user is active in a snapshot
  std::int32_t snapshots = 6;
  std::int32_t drift_start = 0;  // first snapshot with a nonzero rotation
  std::int32_t drift_every = 1;  // snapshots per rotation step
  std::int32_t drift_step = 0;   // blocks rotated per step
  std::int64_t granularity = 86400;
  std::uint64_t seed = 0;

  void validate() const;
  // Blocks added to a user's own block when choosing its preferred block at t.
  std::int32_t rotation(std::int32_t snapshot) const;
};

struct SyntheticData {
  std::vector<Interaction> interactions;  // ascending timestamp
  std::vector<std::int32_t> user_block;
  std::vector<std::int32_t> item_block;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

// `user_id,item_id,timestamp` lines.
void write_interactions(const std::vector<Interaction>& interactions, const std::filesystem::path& path);
std::vector<Interaction> read_interactions(const std::filesystem::path& path);

// `kind,id,block` lines with kind user or item.
void write_blocks(const SyntheticData& data, const std::filesystem::path& path);

}  // namespace taskrag
