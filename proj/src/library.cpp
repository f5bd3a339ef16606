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

#include "taskrag/library.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace taskrag {

namespace {

constexpr const char* kLibraryKind = "subgraph_library";

double row_squared_norm(const float* row, Eigen::Index n) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) s += static_cast<double>(row[j]) * static_cast<double>(row[j]);
  return s;
}

std::string encode_subgraphs(const std::vector<Subgraph>& values) {
  VarintWriter w;
  w.put(static_cast<std::int64_t>(values.size()));
  for (const auto& sg : values) {
    w.put(sg.central);
    w.put(sg.hop);
    w.put(static_cast<std::int64_t>(sg.nodes.size()));
    std::int64_t prev = 0;
    for (NodeId n : sg.nodes) {
      w.put(n - prev);
      prev = n;
    }
    w.put(static_cast<std::int64_t>(sg.edges.size()));
    std::int64_t prev_a = 0;
    for (const auto& [a, b] : sg.edges) {
      w.put(a - prev_a);
      w.put(b - a);
      prev_a = a;
    }
  }
  return w.bytes();
}

std::vector<Subgraph> decode_subgraphs(std::string_view bytes) {
  VarintReader r(bytes);
  const auto count = r.get();
  if (count < 0) throw FormatError("subgraph section: negative entry count");
  std::vector<Subgraph> out(static_cast<std::size_t>(count));
  for (auto& sg : out) {
    sg.central = static_cast<NodeId>(r.get());
    sg.hop = static_cast<int>(r.get());
    const auto nodes = r.get();
    if (nodes < 1) throw FormatError("subgraph section: entry without nodes");
    std::int64_t prev = 0;
    for (std::int64_t i = 0; i < nodes; ++i) {
      prev += r.get();
      sg.nodes.push_back(static_cast<NodeId>(prev));
    }
    const auto edges = r.get();
    std::int64_t prev_a = 0;
    for (std::int64_t i = 0; i < edges; ++i) {
      prev_a += r.get();
      const std::int64_t b = prev_a + r.get();
      if (prev_a < 0 || b <= prev_a || b >= nodes) throw FormatError("subgraph section: edge outside its entry");
      sg.edges.emplace_back(static_cast<std::int32_t>(prev_a), static_cast<std::int32_t>(b));
    }
    if (sg.nodes.front() != sg.central) throw FormatError("subgraph section: center is not local node 0");
  }
  if (!r.done()) throw FormatError("subgraph section: trailing bytes");
  return out;
}

}  // namespace

SubgraphLibrary::SubgraphLibrary(MatrixXf keys, std::vector<Subgraph> values, std::string source_hash)
    : keys_(std::move(keys)), values_(std::move(values)), source_hash_(std::move(source_hash)) {
  if (keys_.rows() != static_cast<Eigen::Index>(values_.size())) {
    throw ShapeError("SubgraphLibrary: " + std::to_string(keys_.rows()) + " keys for " +
                     std::to_string(values_.size()) + " values");
  }
  squared_norms_.resize(values_.size());
  for (std::size_t i = 0; i < values_.size(); ++i) {
    squared_norms_[i] = row_squared_norm(keys_.row(static_cast<Eigen::Index>(i)).data(), keys_.cols());
    if (!by_center_.emplace(values_[i].central, i).second) {
      throw std::invalid_argument("SubgraphLibrary: duplicate center " + std::to_string(values_[i].central));
    }
  }
}

std::optional<std::size_t> SubgraphLibrary::find(NodeId center) const {
  auto it = by_center_.find(center);
  if (it == by_center_.end()) return std::nullopt;
  return it->second;
}

Checkpoint SubgraphLibrary::to_checkpoint() const {
  Checkpoint c;
  c.kind = kLibraryKind;
  c.meta["source_hash"] = source_hash_;
  c.meta["entries"] = std::to_string(values_.size());
  c.arrays.add("keys", keys_);
  c.sections.emplace_back("subgraphs", encode_subgraphs(values_));
  return c;
}

SubgraphLibrary SubgraphLibrary::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != kLibraryKind) {
    throw FormatError("expected a '" + std::string(kLibraryKind) + "' checkpoint, got '" + ckpt.kind + "'");
  }
  return SubgraphLibrary(ckpt.arrays.at("keys"), decode_subgraphs(ckpt.section("subgraphs")),
                         ckpt.meta.at("source_hash"));
}

SubgraphLibrary build_library(const SnapshotGraph& horizon, const EmbeddingTable& table, const LibraryConfig& config,
                              std::string source_hash) {
  if (horizon.edge_count() == 0) throw std::invalid_argument("build_library: empty pretraining window");
  if (horizon.node_count() != table.node_count()) {
    throw ShapeError("build_library: graph has " + std::to_string(horizon.node_count()) + " nodes, table " +
                     std::to_string(table.node_count()));
  }
  std::vector<NodeId> centers;
  for (NodeId n = 0; n < horizon.node_count(); ++n) {
    if (horizon.degree(n) > 0) centers.push_back(n);
  }
  if (config.max_entries > 0 && centers.size() > config.max_entries) {
    std::stable_sort(centers.begin(), centers.end(),
                     [&](NodeId a, NodeId b) { return horizon.degree(a) > horizon.degree(b); });
    centers.resize(config.max_entries);
    std::sort(centers.begin(), centers.end());
  }

  std::vector<Subgraph> values;
  values.reserve(centers.size());
  MatrixXf keys(static_cast<Eigen::Index>(centers.size()), table.dim());
  for (std::size_t i = 0; i < centers.size(); ++i) {
    values.push_back(extract_khop(horizon, centers[i], config.hops, config.cap, config.seed));
    keys.row(static_cast<Eigen::Index>(i)) = encode_subgraph(table, values.back());
  }
  return SubgraphLibrary(std::move(keys), std::move(values), std::move(source_hash));
}

std::vector<Neighbor> l2_topk(const SubgraphLibrary& library, const RowVector<float>& query, std::size_t k,
                              std::span<const std::size_t> exclude) {
  if (query.size() != library.dim()) {
    throw ShapeError("l2_topk: query width " + std::to_string(query.size()) + " vs key width " +
                     std::to_string(library.dim()));
  }
  std::vector<char> skip(library.size(), 0);
  for (std::size_t i : exclude) {
    if (i < skip.size()) skip[i] = 1;
  }
  const auto available = static_cast<std::size_t>(std::count(skip.begin(), skip.end(), 0));
  if (k > available) {
    throw std::invalid_argument("l2_topk: K = " + std::to_string(k) + " exceeds library size " +
                                std::to_string(available));
  }
  const auto& keys = library.keys();
  const double qq = row_squared_norm(query.data(), query.size());
  std::vector<Neighbor> all;
  all.reserve(available);
  for (std::size_t i = 0; i < library.size(); ++i) {
    if (skip[i]) continue;
    const float* row = keys.row(static_cast<Eigen::Index>(i)).data();
    double dot = 0.0;
    for (Eigen::Index j = 0; j < keys.cols(); ++j) dot += static_cast<double>(query[j]) * static_cast<double>(row[j]);
    all.push_back({i, std::max(0.0, qq + library.squared_norm(i) - 2.0 * dot)});
  }
  const auto less = [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), less);
  all.resize(k);
  return all;
}

}  // namespace taskrag
