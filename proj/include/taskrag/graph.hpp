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

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "taskrag/types.hpp"

namespace taskrag {

struct Edge {
  std::int32_t user;
  std::int32_t item;
  auto operator<=>(const Edge&) const = default;
};

// Bipartite user-item interaction graph of one time step. Edges are sorted and
// unique; adjacency is kept in CSR form over global node ids in both directions.
class SnapshotGraph {
 public:
  SnapshotGraph() = default;
  SnapshotGraph(std::int64_t time_index, std::int32_t user_count, std::int32_t item_count,
                std::vector<Edge> edges);

  std::int64_t time_index() const { return time_index_; }
  std::int32_t user_count() const { return user_count_; }
  std::int32_t item_count() const { return item_count_; }
  std::int32_t node_count() const { return user_count_ + item_count_; }
  std::span<const Edge> edges() const { return edges_; }
  std::size_t edge_count() const { return edges_.size(); }

  NodeId user_node(std::int32_t user) const { return user; }
  NodeId item_node(std::int32_t item) const { return user_count_ + item; }
  bool is_user(NodeId n) const { return n < user_count_; }
  std::int32_t item_of(NodeId n) const { return n - user_count_; }

  std::span<const NodeId> neighbors(NodeId n) const {
    return {adjacency_.data() + offsets_[n], adjacency_.data() + offsets_[n + 1]};
  }
  std::int32_t degree(NodeId n) const { return offsets_[n + 1] - offsets_[n]; }
  bool has_edge(std::int32_t user, std::int32_t item) const;

  // Symmetric 0/1 adjacency over global node ids.
  template <typename Scalar>
  SparseMatrix<Scalar> adjacency() const {
    std::vector<Eigen::Triplet<Scalar>> triplets;
    triplets.reserve(2 * edges_.size());
    for (const auto& e : edges_) {
      triplets.emplace_back(user_node(e.user), item_node(e.item), Scalar(1));
      triplets.emplace_back(item_node(e.item), user_node(e.user), Scalar(1));
    }
    SparseMatrix<Scalar> a(node_count(), node_count());
    a.setFromTriplets(triplets.begin(), triplets.end());
    return a;
  }

 private:
  std::int64_t time_index_ = 0;
  std::int32_t user_count_ = 0;
  std::int32_t item_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::int32_t> offsets_{0};
  std::vector<NodeId> adjacency_;
};

// Union of several snapshots over the same id space; time index of the last.
SnapshotGraph accumulate(std::span<const SnapshotGraph> snapshots);

struct Interaction {
  std::int64_t user;
  std::int64_t item;
  std::int64_t timestamp;
};

// Which interactions a k-hop neighborhood sees at a time step: everything so
// far, or the latest snapshot alone.
enum class KhopScope { history, snapshot };

std::string_view to_string(KhopScope scope);
KhopScope parse_khop_scope(std::string_view name);

// Time-ordered snapshots sharing one compacted id space.
struct DynamicGraph {
  std::vector<SnapshotGraph> snapshots;
  std::size_t pretrain_split = 0;
  std::int64_t granularity = 0;
  std::vector<std::int64_t> user_ids;  // compact -> external
  std::vector<std::int64_t> item_ids;

  std::int32_t user_count() const { return static_cast<std::int32_t>(user_ids.size()); }
  std::int32_t item_count() const { return static_cast<std::int32_t>(item_ids.size()); }

  // Accumulated graph of snapshots [0, end).
  SnapshotGraph history(std::size_t end) const;
  SnapshotGraph pretrain_graph() const { return history(pretrain_split); }
  // history(end), or snapshot end - 1 alone under KhopScope::snapshot.
  SnapshotGraph window(std::size_t end, KhopScope scope) const;
  void validate() const;
};

// Buckets a time-stamped stream into snapshots of `granularity` seconds and
// compacts ids (ascending external id order). Duplicate (user, item) events in
// one bucket collapse to one edge. Empty buckets produce no snapshot.
DynamicGraph build_dynamic(std::vector<Interaction> interactions, std::int64_t granularity,
                           std::size_t split);

// Keeps each edge independently with probability 1 - drop_rate.
SnapshotGraph edge_perturb(const SnapshotGraph& graph, double drop_rate, std::uint64_t seed);

enum class Normalization { row_stochastic, symmetric };

// row_stochastic: D^-1 (A + I) with D the degree matrix of A + I.
// symmetric:      D^-1/2 A D^-1/2; zero-degree rows stay zero.
template <typename Scalar>
SparseMatrix<Scalar> normalize_adjacency(const SparseMatrix<Scalar>& a, Normalization mode) {
  const Eigen::Index n = a.rows();
  Eigen::VectorXd degree = Eigen::VectorXd::Zero(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (typename SparseMatrix<Scalar>::InnerIterator it(a, r); it; ++it) degree(r) += static_cast<double>(it.value());
  }
  std::vector<Eigen::Triplet<Scalar>> triplets;
  triplets.reserve(static_cast<std::size_t>(a.nonZeros() + n));
  for (Eigen::Index r = 0; r < n; ++r) {
    if (mode == Normalization::row_stochastic) {
      const double d = degree(r) + 1.0;
      triplets.emplace_back(r, r, static_cast<Scalar>(1.0 / d));
      for (typename SparseMatrix<Scalar>::InnerIterator it(a, r); it; ++it) {
        triplets.emplace_back(r, it.col(), static_cast<Scalar>(static_cast<double>(it.value()) / d));
      }
    } else {
      for (typename SparseMatrix<Scalar>::InnerIterator it(a, r); it; ++it) {
        const double dr = degree(r), dc = degree(it.col());
        if (dr == 0.0 || dc == 0.0) continue;
        triplets.emplace_back(r, it.col(),
                              static_cast<Scalar>(static_cast<double>(it.value()) / std::sqrt(dr * dc)));
      }
    }
  }
  SparseMatrix<Scalar> out(n, n);
  out.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

template <typename Scalar>
Matrix<Scalar> normalized_propagate(const SparseMatrix<Scalar>& a, const Matrix<Scalar>& features,
                                    Normalization mode) {
  if (features.rows() != a.rows()) {
    throw ShapeError("normalized_propagate: " + std::to_string(features.rows()) +
                     " feature rows for " + std::to_string(a.rows()) + " nodes");
  }
  if (mode == Normalization::symmetric) {
    return normalize_adjacency(a, mode) * features;
  }
  // Sum first, divide once: keeps the all-ones vector a fixed point exactly.
  Matrix<Scalar> out = features + a * features;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    Scalar d = Scalar(1);
    for (typename SparseMatrix<Scalar>::InnerIterator it(a, r); it; ++it) d += it.value();
    out.row(r) /= d;
  }
  return out;
}

}  // namespace taskrag
