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

#include "taskrag/graph.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "taskrag/rng.hpp"

namespace taskrag {

SnapshotGraph::SnapshotGraph(std::int64_t time_index, std::int32_t user_count, std::int32_t item_count,
                             std::vector<Edge> edges)
    : time_index_(time_index), user_count_(user_count), item_count_(item_count), edges_(std::move(edges)) {
  if (user_count < 0 || item_count < 0) throw std::invalid_argument("SnapshotGraph: negative node count");
  for (const auto& e : edges_) {
    if (e.user < 0 || e.user >= user_count || e.item < 0 || e.item >= item_count) {
      throw std::out_of_range("SnapshotGraph: edge (" + std::to_string(e.user) + "," + std::to_string(e.item) +
                              ") outside " + std::to_string(user_count) + " users x " +
                              std::to_string(item_count) + " items");
    }
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

  const std::int32_t n = node_count();
  offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
  for (const auto& e : edges_) {
    ++offsets_[user_node(e.user) + 1];
    ++offsets_[item_node(e.item) + 1];
  }
  for (std::int32_t i = 0; i < n; ++i) offsets_[i + 1] += offsets_[i];
  adjacency_.resize(2 * edges_.size());
  std::vector<std::int32_t> fill(offsets_.begin(), offsets_.end() - 1);
  // Edges are sorted by (user, item), so both directions come out sorted.
  for (const auto& e : edges_) adjacency_[fill[user_node(e.user)]++] = item_node(e.item);
  for (const auto& e : edges_) adjacency_[fill[item_node(e.item)]++] = user_node(e.user);
  for (std::int32_t i = user_count_; i < n; ++i) {
    std::sort(adjacency_.begin() + offsets_[i], adjacency_.begin() + offsets_[i + 1]);
  }
}

bool SnapshotGraph::has_edge(std::int32_t user, std::int32_t item) const {
  return std::binary_search(edges_.begin(), edges_.end(), Edge{user, item});
}

SnapshotGraph accumulate(std::span<const SnapshotGraph> snapshots) {
  if (snapshots.empty()) return {};
  std::vector<Edge> edges;
  for (const auto& s : snapshots) edges.insert(edges.end(), s.edges().begin(), s.edges().end());
  const auto& last = snapshots.back();
  return SnapshotGraph(last.time_index(), last.user_count(), last.item_count(), std::move(edges));
}

SnapshotGraph DynamicGraph::history(std::size_t end) const {
  if (end == 0 || end > snapshots.size()) {
    throw std::out_of_range("DynamicGraph::history: end " + std::to_string(end) + " outside 1.." +
                            std::to_string(snapshots.size()));
  }
  return accumulate(std::span<const SnapshotGraph>(snapshots.data(), end));
}

SnapshotGraph DynamicGraph::window(std::size_t end, KhopScope scope) const {
  if (scope == KhopScope::history) return history(end);
  if (end == 0 || end > snapshots.size()) {
    throw std::out_of_range("DynamicGraph::window: end " + std::to_string(end) + " outside 1.." +
                            std::to_string(snapshots.size()));
  }
  return snapshots[end - 1];
}

std::string_view to_string(KhopScope scope) {
  return scope == KhopScope::history ? "history" : "snapshot";
}

KhopScope parse_khop_scope(std::string_view name) {
  if (name == "history") return KhopScope::history;
  if (name == "snapshot") return KhopScope::snapshot;
  throw std::invalid_argument("unknown k-hop scope '" + std::string(name) + "' (expected history or snapshot)");
}

void DynamicGraph::validate() const {
  for (std::size_t i = 1; i < snapshots.size(); ++i) {
    if (snapshots[i].time_index() <= snapshots[i - 1].time_index()) {
      throw std::invalid_argument("DynamicGraph: snapshot time indices not strictly increasing");
    }
  }
  if (pretrain_split == 0 || pretrain_split > snapshots.size()) {
    throw std::invalid_argument("DynamicGraph: split " + std::to_string(pretrain_split) +
                                " must lie in 1.." + std::to_string(snapshots.size()) + " for " +
                                std::to_string(snapshots.size()) + " snapshots");
  }
}

DynamicGraph build_dynamic(std::vector<Interaction> interactions, std::int64_t granularity, std::size_t split) {
  if (interactions.empty()) throw std::invalid_argument("build_dynamic: empty interaction stream");
  if (granularity <= 0) throw std::invalid_argument("build_dynamic: granularity must be positive");
  std::stable_sort(interactions.begin(), interactions.end(),
                   [](const Interaction& a, const Interaction& b) { return a.timestamp < b.timestamp; });

  DynamicGraph g;
  g.granularity = granularity;
  for (const auto& x : interactions) {
    g.user_ids.push_back(x.user);
    g.item_ids.push_back(x.item);
  }
  for (auto* ids : {&g.user_ids, &g.item_ids}) {
    std::sort(ids->begin(), ids->end());
    ids->erase(std::unique(ids->begin(), ids->end()), ids->end());
  }
  auto compact = [](const std::vector<std::int64_t>& ids, std::int64_t id) {
    return static_cast<std::int32_t>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
  };

  auto bucket_of = [granularity](std::int64_t ts) {
    // floor division, also for negative timestamps
    return ts >= 0 ? ts / granularity : -((-ts + granularity - 1) / granularity);
  };
  std::map<std::int64_t, std::vector<Edge>> buckets;
  for (const auto& x : interactions) {
    buckets[bucket_of(x.timestamp)].push_back(Edge{compact(g.user_ids, x.user), compact(g.item_ids, x.item)});
  }
  for (auto& [bucket, edges] : buckets) {
    g.snapshots.emplace_back(bucket, g.user_count(), g.item_count(), std::move(edges));
  }
  g.pretrain_split = split;
  g.validate();
  return g;
}

SnapshotGraph edge_perturb(const SnapshotGraph& graph, double drop_rate, std::uint64_t seed) {
  if (drop_rate < 0.0 || drop_rate > 1.0) throw std::invalid_argument("edge_perturb: drop_rate outside [0, 1]");
  Rng rng(seed);
  std::vector<Edge> kept;
  kept.reserve(graph.edge_count());
  for (const auto& e : graph.edges()) {
    if (!rng.bernoulli(drop_rate)) kept.push_back(e);
  }
  return SnapshotGraph(graph.time_index(), graph.user_count(), graph.item_count(), std::move(kept));
}

}  // namespace taskrag
