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
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "taskrag/graph.hpp"

namespace taskrag {

inline constexpr std::size_t kDefaultCutoff = 20;

using ItemList = std::vector<std::int32_t>;

struct MetricValue {
  double mean = 0.0;           // over evaluated users; 0 when none
  std::size_t users = 0;       // users with nonempty ground truth
  std::size_t excluded = 0;    // users skipped for empty ground truth
};

// Per user: |top-k ∩ truth| / |truth|, averaged. Predictions are ranked lists
// (best first); ground truth entries are item sets without duplicates.
MetricValue recall_at_k(std::span<const ItemList> predictions, std::span<const ItemList> ground_truth,
                        std::size_t k);

// Per user: DCG@k / IDCG@k with binary relevance and log2(rank + 1) discount;
// IDCG places min(k, |truth|) hits at the top.
MetricValue ndcg_at_k(std::span<const ItemList> predictions, std::span<const ItemList> ground_truth,
                      std::size_t k);

// Spearman rank correlation with average ranks for ties. 0 if either side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

struct SnapshotMetrics {
  std::int64_t time_index = 0;
  double recall = 0.0;
  double ndcg = 0.0;
  std::size_t users = 0;
};

struct EvalReport {
  std::string label;
  std::size_t k = kDefaultCutoff;
  std::uint64_t seed = 0;
  std::vector<SnapshotMetrics> snapshots;
  std::vector<std::int64_t> skipped_snapshots;  // no evaluable users
  double mean_recall = 0.0;
  double mean_ndcg = 0.0;
  std::vector<std::pair<std::string, std::string>> metadata;  // lineage and run settings

  std::string to_text() const;
  static EvalReport parse(std::string_view content);
  void write(const std::filesystem::path& path) const;
  static EvalReport read(const std::filesystem::path& path);

  // Fills the means as the unweighted average over `snapshots`.
  void finalize();
};

// Ranked top-k items for `user` when evaluating test snapshot `snapshot_index`.
using Ranker = std::function<ItemList(std::int32_t user, std::size_t snapshot_index, std::size_t k)>;

// Metrics over the test snapshots [first_test, graph.snapshots.size()). Ground
// truth is each snapshot's edges for the user; every user with at least one edge
// in the snapshot is evaluated.
EvalReport evaluate_snapshots(const DynamicGraph& graph, std::size_t first_test, const Ranker& ranker,
                              std::size_t k = kDefaultCutoff);

}  // namespace taskrag
