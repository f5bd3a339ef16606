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

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>
#include <set>

#include "doctest.h"
#include "taskrag/graph.hpp"
#include "taskrag/rng.hpp"
#include "taskrag/subgraph.hpp"

using namespace taskrag;

namespace {

SnapshotGraph random_graph(std::uint64_t seed, std::int32_t users, std::int32_t items, std::size_t edges) {
  Rng rng(seed);
  std::vector<Edge> es;
  for (std::size_t i = 0; i < edges; ++i) {
    es.push_back(Edge{static_cast<std::int32_t>(rng.below(users)), static_cast<std::int32_t>(rng.below(items))});
  }
  return SnapshotGraph(0, users, items, es);
}

// Reachability within k hops via powers of the dense (I + A) matrix.
std::set<NodeId> reachable_oracle(const SnapshotGraph& g, NodeId center, int k) {
  const int n = g.node_count();
  Eigen::MatrixXi a = Eigen::MatrixXi::Identity(n, n);
  for (const auto& e : g.edges()) {
    a(g.user_node(e.user), g.item_node(e.item)) = 1;
    a(g.item_node(e.item), g.user_node(e.user)) = 1;
  }
  Eigen::RowVectorXi v = Eigen::RowVectorXi::Zero(n);
  v(center) = 1;
  for (int i = 0; i < k; ++i) v = ((v * a).array() > 0).cast<int>().matrix();
  std::set<NodeId> out;
  for (int i = 0; i < n; ++i)
    if (v(i)) out.insert(i);
  return out;
}

Subgraph make_subgraph(NodeId center, std::vector<NodeId> nodes, std::vector<std::pair<NodeId, NodeId>> global_edges) {
  Subgraph s;
  s.central = center;
  s.hop = 1;
  s.nodes = std::move(nodes);
  for (auto [a, b] : global_edges) {
    auto la = *s.local_index(a), lb = *s.local_index(b);
    s.edges.emplace_back(std::min(la, lb), std::max(la, lb));
  }
  std::sort(s.edges.begin(), s.edges.end());
  return s;
}

std::set<std::pair<NodeId, NodeId>> global_edge_set(const Subgraph& s) {
  std::set<std::pair<NodeId, NodeId>> out;
  for (auto [a, b] : s.edges) {
    NodeId x = s.nodes[a], y = s.nodes[b];
    out.emplace(std::min(x, y), std::max(x, y));
  }
  return out;
}

}  // namespace

TEST_CASE("snapshot rejects out-of-range ids and collapses duplicates") {
  CHECK_THROWS_AS(SnapshotGraph(0, 2, 2, {{2, 0}}), std::out_of_range);
  SnapshotGraph g(0, 2, 2, {{0, 1}, {0, 1}, {1, 0}});
  CHECK(g.edge_count() == 2);
  CHECK(g.degree(g.user_node(0)) == 1);
  CHECK(g.has_edge(1, 0));
  CHECK_FALSE(g.has_edge(1, 1));
}

TEST_CASE("k-hop on a path graph") {
  // u0 - i0 - u1
  SnapshotGraph g(0, 2, 1, {{0, 0}, {1, 0}});
  const auto sg = extract_khop(g, g.user_node(0), 2, 256, 1);
  CHECK(std::set<NodeId>(sg.nodes.begin(), sg.nodes.end()) == std::set<NodeId>{0, 1, 2});
  CHECK(sg.nodes.front() == 0);
  CHECK(sg.edges.size() == 2);
  const auto one = extract_khop(g, g.user_node(0), 1, 256, 1);
  CHECK(one.size() == 2);
}

TEST_CASE("isolated center yields a singleton") {
  SnapshotGraph g(0, 3, 2, {{0, 0}});
  for (int k = 1; k <= 3; ++k) {
    const auto sg = extract_khop(g, g.user_node(2), k, 256, 1);
    CHECK(sg.size() == 1);
    CHECK(sg.edges.empty());
  }
  CHECK_THROWS_AS(extract_khop(g, 99, 2, 256, 1), std::out_of_range);
  CHECK_THROWS_AS(extract_khop(g, 0, 0, 256, 1), std::invalid_argument);
}

TEST_CASE("k-hop closure equals a BFS oracle") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    Rng rng(seed + 100);
    const auto users = static_cast<std::int32_t>(20 + rng.below(300));
    const auto items = static_cast<std::int32_t>(20 + rng.below(300));
    const auto g = random_graph(seed, users, items, 1 + rng.below(2 * (users + items)));
    for (int k = 1; k <= 3; ++k) {
      for (int trial = 0; trial < 5; ++trial) {
        const auto center = static_cast<NodeId>(rng.below(g.node_count()));
        const auto sg = extract_khop(g, center, k, g.node_count() + 1, seed);
        CHECK(std::set<NodeId>(sg.nodes.begin(), sg.nodes.end()) == reachable_oracle(g, center, k));
        // induced edges
        std::set<std::pair<NodeId, NodeId>> expected;
        std::set<NodeId> members(sg.nodes.begin(), sg.nodes.end());
        for (const auto& e : g.edges()) {
          NodeId a = g.user_node(e.user), b = g.item_node(e.item);
          if (members.count(a) && members.count(b)) expected.emplace(std::min(a, b), std::max(a, b));
        }
        CHECK(global_edge_set(sg) == expected);
      }
    }
  }
}

TEST_CASE("capped extraction samples deterministically and stays connected") {
  const auto g = random_graph(7, 200, 200, 3000);
  const auto a = extract_khop(g, 0, 2, 32, 99);
  const auto b = extract_khop(g, 0, 2, 32, 99);
  CHECK(a == b);
  CHECK(a.size() == 32);
  const auto c = extract_khop(g, 0, 2, 32, 100);
  CHECK(c.size() == 32);
  // every node reachable from the center inside the subgraph
  std::vector<std::vector<int>> adj(a.size());
  for (auto [x, y] : a.edges) {
    adj[x].push_back(y);
    adj[y].push_back(x);
  }
  std::vector<int> dist(a.size(), -1);
  std::queue<int> q;
  dist[0] = 0;
  q.push(0);
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : adj[u])
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
  }
  for (int d : dist) {
    CHECK(d >= 0);
    CHECK(d <= 2);
  }
}

TEST_CASE("row-stochastic propagation fixes the all-ones column") {
  const auto g = random_graph(3, 50, 40, 300);
  const auto a = g.adjacency<float>();
  const MatrixXf ones = MatrixXf::Ones(g.node_count(), 1);
  const MatrixXf out = normalized_propagate(a, ones, Normalization::row_stochastic);
  CHECK((out.array() == 1.0f).all());
}

TEST_CASE("symmetric propagation on a single edge swaps features") {
  SnapshotGraph g(0, 1, 1, {{0, 0}});
  MatrixXd x(2, 1);
  x << 1, 0;
  const MatrixXd out = normalized_propagate(g.adjacency<double>(), x, Normalization::symmetric);
  CHECK(out(0, 0) == 0.0);
  CHECK(out(1, 0) == 1.0);
}

TEST_CASE("symmetric propagation of an empty graph is zero") {
  SnapshotGraph g(0, 3, 3, {});
  const MatrixXd out = normalized_propagate<double>(g.adjacency<double>(), MatrixXd::Ones(6, 2), Normalization::symmetric);
  CHECK(out.isZero());
  CHECK_THROWS_AS(normalized_propagate<double>(g.adjacency<double>(), MatrixXd::Ones(5, 2), Normalization::symmetric),
                  ShapeError);
}

TEST_CASE("fusing two disjoint singletons links the centers") {
  const auto q = make_subgraph(0, {0}, {});
  const auto r = make_subgraph(5, {5}, {});
  const auto f = fuse_subgraphs(q, r);
  CHECK(f.size() == 2);
  CHECK(f.edges.size() == 1);
  CHECK(f.central == 0);
}

TEST_CASE("self-fusion is idempotent") {
  SnapshotGraph g(0, 3, 3, {{0, 0}, {1, 0}, {1, 2}, {2, 1}});
  const auto q = extract_khop(g, 1, 2, 256, 0);
  CHECK(fuse_subgraphs(q, q) == q);
}

TEST_CASE("fusing subgraphs sharing a node") {
  // a - b, b - c; centers a and c
  const auto q = make_subgraph(0, {0, 1}, {{0, 1}});
  const auto r = make_subgraph(2, {2, 1}, {{1, 2}});
  const auto f = fuse_subgraphs(q, r);
  CHECK(f.size() == 3);
  CHECK(f.edges.size() == 3);
}

TEST_CASE("fusion node and edge counts follow set union") {
  const auto g = random_graph(21, 60, 60, 250);
  Rng rng(5);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto qc = static_cast<NodeId>(rng.below(g.node_count()));
    const auto rc = static_cast<NodeId>(rng.below(g.node_count()));
    const auto q = extract_khop(g, qc, 1 + static_cast<int>(rng.below(2)), 256, 0);
    const auto r = extract_khop(g, rc, 1 + static_cast<int>(rng.below(2)), 256, 0);
    auto eq = global_edge_set(q), er = global_edge_set(r);
    std::set<std::pair<NodeId, NodeId>> eu = eq;
    eu.insert(er.begin(), er.end());
    const auto link = std::pair{std::min(qc, rc), std::max(qc, rc)};
    if (eu.count(link)) continue;  // centers already adjacent: the link is not a new edge
    const auto f = fuse_subgraphs(q, r);
    std::set<NodeId> nu(q.nodes.begin(), q.nodes.end());
    nu.insert(r.nodes.begin(), r.nodes.end());
    CHECK(std::set<NodeId>(f.nodes.begin(), f.nodes.end()) == nu);
    CHECK(f.nodes.size() == nu.size());
    CHECK(f.edges.size() == eu.size() + (qc != rc ? 1u : 0u));
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("edge_perturb extremes and determinism") {
  const auto g = random_graph(1, 100, 100, 2000);
  CHECK(edge_perturb(g, 0.0, 3).edge_count() == g.edge_count());
  CHECK(edge_perturb(g, 1.0, 3).edge_count() == 0);
  const auto a = edge_perturb(g, 0.5, 3);
  const auto b = edge_perturb(g, 0.5, 3);
  CHECK(std::equal(a.edges().begin(), a.edges().end(), b.edges().begin(), b.edges().end()));
  CHECK_THROWS_AS(edge_perturb(g, 1.5, 3), std::invalid_argument);
}

TEST_CASE("edge_perturb keep fraction is binomial") {
  std::vector<Edge> es;
  for (std::int32_t u = 0; u < 100; ++u)
    for (std::int32_t i = 0; i < 100; ++i) es.push_back({u, i});
  SnapshotGraph g(0, 100, 100, es);
  REQUIRE(g.edge_count() == 10000);
  for (double drop : {0.1, 0.5, 0.8}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const double kept = static_cast<double>(edge_perturb(g, drop, seed).edge_count());
      const double p = 1.0 - drop;
      const double sigma = std::sqrt(10000.0 * p * (1.0 - p));
      CHECK(std::abs(kept - 10000.0 * p) <= 3.0 * sigma);
    }
  }
}

TEST_CASE("build_dynamic buckets by granularity") {
  std::vector<Interaction> xs;
  for (int i = 0; i < 10; ++i) xs.push_back({i % 3, 100 + i % 4, (i < 6 ? 0 : 86400) + 60 * i});
  const auto g = build_dynamic(xs, 86400, 1);
  CHECK(g.snapshots.size() == 2);
  CHECK(g.pretrain_split == 1);
  CHECK(g.user_count() == 3);
  CHECK(g.item_count() == 4);
  CHECK(g.snapshots[0].time_index() < g.snapshots[1].time_index());
  CHECK(g.item_ids.front() == 100);
}

TEST_CASE("weekly split with four pretraining snapshots") {
  std::vector<Interaction> xs;
  const std::int64_t week = 7 * 86400;
  for (int w = 0; w < 9; ++w) xs.push_back({w, w, w * week + 5});
  const auto g = build_dynamic(xs, week, 4);
  CHECK(g.snapshots.size() == 9);
  CHECK(g.pretrain_graph().edge_count() == 4);
  CHECK(g.history(9).edge_count() == 9);
}

TEST_CASE("window scope: accumulated history or the latest snapshot alone") {
  std::vector<Interaction> xs;
  for (int d = 0; d < 4; ++d) xs.push_back({d, d, d * 86400 + 1});
  xs.push_back({0, 3, 2 * 86400 + 7});
  const auto g = build_dynamic(xs, 86400, 2);
  CHECK(g.window(3, KhopScope::history).edge_count() == 4);
  const auto latest = g.window(3, KhopScope::snapshot);
  CHECK(latest.edge_count() == 2);
  CHECK(latest.has_edge(2, 2));
  CHECK(latest.has_edge(0, 3));
  CHECK_FALSE(latest.has_edge(0, 0));
  CHECK(parse_khop_scope(to_string(KhopScope::snapshot)) == KhopScope::snapshot);
  CHECK_THROWS_AS(parse_khop_scope("week"), std::invalid_argument);
}

TEST_CASE("build_dynamic collapses duplicates and rejects bad input") {
  std::vector<Interaction> xs = {{1, 1, 10}, {1, 1, 20}, {1, 2, 30}, {2, 1, 90000}};
  const auto g = build_dynamic(xs, 86400, 1);
  CHECK(g.snapshots[0].edge_count() == 2);
  CHECK_THROWS_AS(build_dynamic({}, 86400, 1), std::invalid_argument);
  CHECK(build_dynamic(xs, 86400, 2).pretrain_split == 2);
  CHECK_THROWS_AS(build_dynamic(xs, 86400, 3), std::invalid_argument);
  CHECK_THROWS_AS(build_dynamic(xs, 86400, 0), std::invalid_argument);
}
