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

#include "taskrag/subgraph.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

#include "taskrag/rng.hpp"

namespace taskrag {

std::optional<std::int32_t> Subgraph::local_index(NodeId global) const {
  auto it = std::find(nodes.begin(), nodes.end(), global);
  if (it == nodes.end()) return std::nullopt;
  return static_cast<std::int32_t>(it - nodes.begin());
}

namespace {

// Induced, sorted local edge list over `nodes`.
std::vector<std::pair<std::int32_t, std::int32_t>> induced_edges(const SnapshotGraph& graph,
                                                                 const std::vector<NodeId>& nodes) {
  std::unordered_map<NodeId, std::int32_t> local;
  local.reserve(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) local.emplace(nodes[i], static_cast<std::int32_t>(i));
  std::vector<std::pair<std::int32_t, std::int32_t>> edges;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (NodeId nb : graph.neighbors(nodes[i])) {
      auto it = local.find(nb);
      if (it != local.end() && static_cast<std::int32_t>(i) < it->second) {
        edges.emplace_back(static_cast<std::int32_t>(i), it->second);
      }
    }
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

}  // namespace

Subgraph extract_khop(const SnapshotGraph& graph, NodeId center, int k, int cap, std::uint64_t seed) {
  if (center < 0 || center >= graph.node_count()) {
    throw std::out_of_range("extract_khop: center " + std::to_string(center) + " outside " +
                            std::to_string(graph.node_count()) + " nodes");
  }
  if (k < 1) throw std::invalid_argument("extract_khop: k must be >= 1");
  if (cap < 1) throw std::invalid_argument("extract_khop: cap must be >= 1");

  Subgraph sg;
  sg.central = center;
  sg.hop = k;
  sg.nodes.push_back(center);
  std::vector<char> seen(static_cast<std::size_t>(graph.node_count()), 0);
  seen[center] = 1;
  std::vector<NodeId> frontier{center};
  Rng rng(derive_seed(seed, "khop", static_cast<std::uint64_t>(center)));

  for (int level = 0; level < k && !frontier.empty(); ++level) {
    std::vector<NodeId> next;
    for (NodeId u : frontier) {
      for (NodeId v : graph.neighbors(u)) {
        if (!seen[v]) {
          seen[v] = 1;
          next.push_back(v);
        }
      }
    }
    std::sort(next.begin(), next.end());
    const std::size_t room = static_cast<std::size_t>(cap) - sg.nodes.size();
    if (next.size() > room) {
      // Partial Fisher-Yates: first `room` entries become a uniform sample.
      for (std::size_t i = 0; i < room; ++i) {
        std::swap(next[i], next[i + rng.below(next.size() - i)]);
      }
      next.resize(room);
      std::sort(next.begin(), next.end());
      sg.nodes.insert(sg.nodes.end(), next.begin(), next.end());
      break;
    }
    sg.nodes.insert(sg.nodes.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  sg.edges = induced_edges(graph, sg.nodes);
  return sg;
}

Subgraph fuse_subgraphs(const Subgraph& q, const Subgraph& r) {
  Subgraph out;
  out.central = q.central;
  out.hop = std::max(q.hop, r.hop);
  out.nodes = q.nodes;
  std::unordered_map<NodeId, std::int32_t> local;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) local.emplace(q.nodes[i], static_cast<std::int32_t>(i));
  for (NodeId n : r.nodes) {
    if (local.emplace(n, static_cast<std::int32_t>(out.nodes.size())).second) out.nodes.push_back(n);
  }
  auto ordered = [](std::int32_t a, std::int32_t b) { return a < b ? std::pair{a, b} : std::pair{b, a}; };
  out.edges = q.edges;
  for (const auto& [a, b] : r.edges) {
    out.edges.push_back(ordered(local.at(r.nodes[a]), local.at(r.nodes[b])));
  }
  if (q.central != r.central) out.edges.push_back(ordered(0, local.at(r.central)));
  std::sort(out.edges.begin(), out.edges.end());
  out.edges.erase(std::unique(out.edges.begin(), out.edges.end()), out.edges.end());
  return out;
}

}  // namespace taskrag
