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
#include <utility>
#include <vector>

#include "taskrag/graph.hpp"
#include "taskrag/types.hpp"

namespace taskrag {

inline constexpr int kDefaultHops = 2;
inline constexpr int kDefaultSubgraphCap = 256;

// Central node plus its k-hop neighborhood. Local id 0 is always the center;
// edges are local, undirected, stored once with first < second, sorted.
struct Subgraph {
  NodeId central = 0;
  std::vector<NodeId> nodes;
  std::vector<std::pair<std::int32_t, std::int32_t>> edges;
  int hop = 0;

  std::size_t size() const { return nodes.size(); }
  std::optional<std::int32_t> local_index(NodeId global) const;

  template <typename Scalar>
  SparseMatrix<Scalar> adjacency() const {
    std::vector<Eigen::Triplet<Scalar>> triplets;
    triplets.reserve(2 * edges.size());
    for (const auto& [a, b] : edges) {
      triplets.emplace_back(a, b, Scalar(1));
      triplets.emplace_back(b, a, Scalar(1));
    }
    const auto n = static_cast<Eigen::Index>(nodes.size());
    SparseMatrix<Scalar> m(n, n);
    m.setFromTriplets(triplets.begin(), triplets.end());
    return m;
  }

  bool operator==(const Subgraph&) const = default;
};

// BFS closure of `center` within k hops, with induced edges. When a level would
// push the node count past `cap`, that level is sampled uniformly (seeded by
// seed and center) and expansion stops. An isolated center yields a singleton.
Subgraph extract_khop(const SnapshotGraph& graph, NodeId center, int k, int cap, std::uint64_t seed);

// Node union of q and r (q's order first) with one extra undirected edge linking
// the two centers. Shared nodes and edges are deduplicated; no self-loop is
// added when the centers coincide. The result is centered at q.central.
Subgraph fuse_subgraphs(const Subgraph& q, const Subgraph& r);

}  // namespace taskrag
