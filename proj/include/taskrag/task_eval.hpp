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
#include <string>
#include <string_view>
#include <vector>

#include "taskrag/encoder.hpp"
#include "taskrag/library.hpp"

namespace taskrag {

inline constexpr double kDefaultEpsilon = 1e-3;
inline constexpr int kDefaultPositives = 8;

enum class Relevance { beneficial, irrelevant, harmful };

std::string_view to_string(Relevance r);
Relevance parse_relevance(std::string_view s);

// C > eps beneficial, C < -eps harmful, otherwise irrelevant.
Relevance classify(double shift, double epsilon);

struct TaskTriple {
  NodeId query_center;
  NodeId candidate_center;
  double shift;  // C_r
  Relevance label;
  bool operator==(const TaskTriple&) const = default;
};

// Mean cosine similarity of `emb` to each row of `positives`. A zero-norm
// operand contributes 0; `zero_norm` (if given) counts such pairs.
double sim_to_positives(const RowVector<double>& emb, const Matrix<double>& positives,
                        std::size_t* zero_norm = nullptr);

// Sim_after - Sim_before for already-encoded query and fused query.
double similarity_shift(const RowVector<double>& query, const RowVector<double>& fused,
                        const Matrix<double>& positives);

// Encodes q and fuse_subgraphs(q, r) at q's center and scores the shift
// against the encoded positives.
TaskTriple delta_rel(const Subgraph& q, const Subgraph& r, const Matrix<double>& positives,
                     const Matrix<double>& features, int layers, double epsilon);

// Library entries of the other side of the query's interactions in
// `interactions` (items for a user query, users for an item query), at most
// n_pos of them, sampled uniformly when there are more. Sorted by index.
std::vector<std::size_t> positive_entries(const SnapshotGraph& interactions, const SubgraphLibrary& library,
                                          NodeId center, int n_pos, Rng& rng);

// Snapshots [0, h) whose history the query subgraphs are drawn from: all but
// the last pretraining snapshot, or the whole window if it has one snapshot.
std::size_t query_horizon(const DynamicGraph& graph);

enum class QueryNodes { users, all };

struct TaskDatasetConfig {
  std::size_t queries = 64;                // N_Q
  std::size_t candidates_per_query = 16;   // R_sample
  int n_pos = kDefaultPositives;
  double epsilon = kDefaultEpsilon;
  bool include_positives = false;  // allow positives in the candidate pool
  QueryNodes query_nodes = QueryNodes::users;
  KhopScope scope = KhopScope::history;
  int hops = kDefaultHops;
  int cap = kDefaultSubgraphCap;
  std::uint64_t seed = 0;
};

struct TaskDataset {
  std::uint64_t seed = 0;
  double epsilon = kDefaultEpsilon;
  int n_pos = kDefaultPositives;
  std::string checkpoint_hash;
  std::string library_hash;  // set by the caller; empty when unknown
  std::size_t query_horizon = 0;
  KhopScope scope = KhopScope::history;
  std::vector<TaskTriple> rows;
  std::size_t skipped_queries = 0;
  std::size_t zero_norm_pairs = 0;

  std::string to_text() const;
  static TaskDataset parse(std::string_view text);
  void write(const std::filesystem::path& path) const;
  static TaskDataset read(const std::filesystem::path& path);
};

// Query subgraph of `center` as the labeler and the relevance model see it.
Subgraph query_subgraph(const DynamicGraph& graph, std::size_t horizon, NodeId center, int hops, int cap,
                        std::uint64_t seed, KhopScope scope = KhopScope::history);

// Samples query centers active in the last pretraining snapshot, takes their
// positives from that snapshot and their query subgraphs from the history
// before it, draws stratified candidates (half nearest by key, half uniform)
// and labels each by delta_rel. Rows are ordered by query center, then by
// candidate order of drawing.
TaskDataset build_task_dataset(const DynamicGraph& graph, const SubgraphLibrary& library,
                               const EmbeddingTable& table, std::string_view table_hash,
                               const TaskDatasetConfig& config);

}  // namespace taskrag
