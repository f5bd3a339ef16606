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
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "taskrag/checkpoint.hpp"
#include "taskrag/encoder.hpp"
#include "taskrag/graph.hpp"
#include "taskrag/subgraph.hpp"

namespace taskrag {

inline constexpr int kDefaultTopK = 5;

struct LibraryConfig {
  int hops = kDefaultHops;
  int cap = kDefaultSubgraphCap;
  std::size_t max_entries = 0;  // 0 = unlimited; otherwise the most connected centers win
  std::uint64_t seed = 0;
};

struct Neighbor {
  std::size_t index;
  double distance;  // squared L2
  bool operator==(const Neighbor&) const = default;
};

// Subgraph values keyed by their encodings, one entry per center node.
class SubgraphLibrary {
 public:
  SubgraphLibrary() = default;
  SubgraphLibrary(MatrixXf keys, std::vector<Subgraph> values, std::string source_hash);

  const MatrixXf& keys() const { return keys_; }
  const std::vector<Subgraph>& values() const { return values_; }
  const Subgraph& value(std::size_t i) const { return values_.at(i); }
  const std::string& source_hash() const { return source_hash_; }
  std::size_t size() const { return values_.size(); }
  int dim() const { return static_cast<int>(keys_.cols()); }
  double squared_norm(std::size_t i) const { return squared_norms_[i]; }

  std::optional<std::size_t> find(NodeId center) const;

  Checkpoint to_checkpoint() const;
  static SubgraphLibrary from_checkpoint(const Checkpoint& ckpt);

 private:
  MatrixXf keys_;
  std::vector<Subgraph> values_;
  std::string source_hash_;
  std::vector<double> squared_norms_;
  std::unordered_map<NodeId, std::size_t> by_center_;
};

// Every node with at least one edge in `horizon` becomes a center (ascending
// node id); its k-hop subgraph is the value and encode_subgraph the key.
SubgraphLibrary build_library(const SnapshotGraph& horizon, const EmbeddingTable& table, const LibraryConfig& config,
                              std::string source_hash);

// The K entries with the smallest squared L2 distance to `query`, ascending,
// ties by index. Entries listed in `exclude` are skipped.
std::vector<Neighbor> l2_topk(const SubgraphLibrary& library, const RowVector<float>& query, std::size_t k,
                              std::span<const std::size_t> exclude = {});

}  // namespace taskrag
