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

#include "taskrag/task_eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "taskrag/checkpoint.hpp"
#include "taskrag/text.hpp"

namespace taskrag {

namespace {

double cosine(const RowVector<double>& a, const RowVector<double>& b, std::size_t* zero_norm) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    if (zero_norm) ++*zero_norm;
    return 0.0;
  }
  return a.dot(b) / (na * nb);
}

constexpr std::string_view kHeaderRow = "query_center,candidate_center,C_r,label";

}  // namespace

std::string_view to_string(Relevance r) {
  switch (r) {
    case Relevance::beneficial:
      return "beneficial";
    case Relevance::irrelevant:
      return "irrelevant";
    case Relevance::harmful:
      return "harmful";
  }
  return "irrelevant";
}

Relevance parse_relevance(std::string_view s) {
  if (s == "beneficial") return Relevance::beneficial;
  if (s == "irrelevant") return Relevance::irrelevant;
  if (s == "harmful") return Relevance::harmful;
  throw FormatError("unknown relevance label '" + std::string(s) + "'");
}

Relevance classify(double shift, double epsilon) {
  if (shift > epsilon) return Relevance::beneficial;
  if (shift < -epsilon) return Relevance::harmful;
  return Relevance::irrelevant;
}

double sim_to_positives(const RowVector<double>& emb, const Matrix<double>& positives, std::size_t* zero_norm) {
  if (positives.rows() == 0) throw std::invalid_argument("sim_to_positives: empty positive set");
  if (positives.cols() != emb.size()) {
    throw ShapeError("sim_to_positives: width " + std::to_string(emb.size()) + " vs " +
                     std::to_string(positives.cols()));
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < positives.rows(); ++i) total += cosine(emb, positives.row(i), zero_norm);
  return total / static_cast<double>(positives.rows());
}

double similarity_shift(const RowVector<double>& query, const RowVector<double>& fused,
                        const Matrix<double>& positives) {
  return sim_to_positives(fused, positives) - sim_to_positives(query, positives);
}

TaskTriple delta_rel(const Subgraph& q, const Subgraph& r, const Matrix<double>& positives,
                     const Matrix<double>& features, int layers, double epsilon) {
  const RowVector<double> before = encode_subgraph(features, q, layers);
  const RowVector<double> after = encode_subgraph(features, fuse_subgraphs(q, r), layers);
  const double shift = similarity_shift(before, after, positives);
  return {q.central, r.central, shift, classify(shift, epsilon)};
}

std::vector<std::size_t> positive_entries(const SnapshotGraph& interactions, const SubgraphLibrary& library,
                                          NodeId center, int n_pos, Rng& rng) {
  std::vector<std::size_t> out;
  for (NodeId other : interactions.neighbors(center)) {
    if (auto idx = library.find(other)) out.push_back(*idx);
  }
  if (n_pos > 0 && out.size() > static_cast<std::size_t>(n_pos)) {
    rng.shuffle(std::span<std::size_t>(out));
    out.resize(static_cast<std::size_t>(n_pos));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t query_horizon(const DynamicGraph& graph) {
  return graph.pretrain_split >= 2 ? graph.pretrain_split - 1 : graph.pretrain_split;
}

Subgraph query_subgraph(const DynamicGraph& graph, std::size_t horizon, NodeId center, int hops, int cap,
                        std::uint64_t seed, KhopScope scope) {
  return extract_khop(graph.window(horizon, scope), center, hops, cap, seed);
}

TaskDataset build_task_dataset(const DynamicGraph& graph, const SubgraphLibrary& library,
                               const EmbeddingTable& table, std::string_view table_hash,
                               const TaskDatasetConfig& config) {
  if (library.source_hash() != table_hash) {
    throw LineageError("library was built from encoder " + library.source_hash() + ", expected " +
                       std::string(table_hash));
  }
  if (config.n_pos < 1) throw std::invalid_argument("build_task_dataset: n_pos must be >= 1");
  graph.validate();
  const Matrix<double> features = table.embeddings().cast<double>();
  const SnapshotGraph& target = graph.snapshots[graph.pretrain_split - 1];
  const std::size_t horizon = query_horizon(graph);
  const SnapshotGraph history = graph.window(horizon, config.scope);

  TaskDataset out;
  out.seed = config.seed;
  out.epsilon = config.epsilon;
  out.n_pos = config.n_pos;
  out.checkpoint_hash = std::string(table_hash);
  out.query_horizon = horizon;
  out.scope = config.scope;

  std::vector<NodeId> eligible;
  for (NodeId n = 0; n < target.node_count(); ++n) {
    if (target.degree(n) == 0) continue;
    if (config.query_nodes == QueryNodes::all || target.is_user(n)) eligible.push_back(n);
  }
  Rng query_rng(derive_seed(config.seed, "queries"));
  query_rng.shuffle(std::span<NodeId>(eligible));
  eligible.resize(std::min(eligible.size(), config.queries));
  std::sort(eligible.begin(), eligible.end());

  for (NodeId center : eligible) {
    Rng rng(derive_seed(config.seed, "label", static_cast<std::uint64_t>(center)));
    const std::vector<std::size_t> positives = positive_entries(target, library, center, config.n_pos, rng);
    if (positives.empty()) {
      ++out.skipped_queries;
      continue;
    }
    const Subgraph q = extract_khop(history, center, config.hops, config.cap, config.seed);
    const RowVector<double> before = encode_subgraph(features, q, table.layers());
    Matrix<double> pos_enc(static_cast<Eigen::Index>(positives.size()), features.cols());
    for (std::size_t i = 0; i < positives.size(); ++i) {
      pos_enc.row(static_cast<Eigen::Index>(i)) = encode_subgraph(features, library.value(positives[i]), table.layers());
    }
    const double sim_before = sim_to_positives(before, pos_enc, &out.zero_norm_pairs);

    std::vector<std::size_t> excluded;
    if (auto self = library.find(center)) excluded.push_back(*self);
    if (!config.include_positives) excluded.insert(excluded.end(), positives.begin(), positives.end());
    std::vector<char> taken(library.size(), 0);
    for (std::size_t e : excluded) taken[e] = 1;
    const auto open = static_cast<std::size_t>(std::count(taken.begin(), taken.end(), 0));
    const std::size_t wanted = std::min(config.candidates_per_query, open);
    const std::size_t near_count = wanted / 2;

    std::vector<std::size_t> candidates;
    for (const auto& n : l2_topk(library, before.cast<float>(), near_count, excluded)) {
      candidates.push_back(n.index);
      taken[n.index] = 1;
    }
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < library.size(); ++i) {
      if (!taken[i]) pool.push_back(i);
    }
    for (std::size_t i = 0; candidates.size() < wanted; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
      candidates.push_back(pool[i]);
    }

    for (std::size_t ci : candidates) {
      const Subgraph& r = library.value(ci);
      const RowVector<double> after = encode_subgraph(features, fuse_subgraphs(q, r), table.layers());
      const double shift = sim_to_positives(after, pos_enc, &out.zero_norm_pairs) - sim_before;
      out.rows.push_back({center, r.central, shift, classify(shift, config.epsilon)});
    }
  }
  return out;
}

std::string TaskDataset::to_text() const {
  std::string s;
  s += "# seed=" + std::to_string(seed) + "\n";
  s += "# epsilon=" + text::format_double(epsilon) + "\n";
  s += "# n_pos=" + std::to_string(n_pos) + "\n";
  s += "# checkpoint=" + checkpoint_hash + "\n";
  s += "# library=" + library_hash + "\n";
  s += "# query_horizon=" + std::to_string(query_horizon) + "\n";
  s += "# scope=" + std::string(to_string(scope)) + "\n";
  s += std::string(kHeaderRow) + "\n";
  for (const auto& r : rows) {
    s += std::to_string(r.query_center) + ',' + std::to_string(r.candidate_center) + ',' + text::format_double(r.shift) +
         ',' + std::string(to_string(r.label)) + '\n';
  }
  return s;
}

TaskDataset TaskDataset::parse(std::string_view content) {
  TaskDataset d;
  bool header_seen = false;
  std::size_t line_no = 0;
  for (std::string_view line : text::split(content, '\n')) {
    ++line_no;
    if (line.empty()) continue;
    if (line.starts_with("# ")) {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw FormatError("D_aware line " + std::to_string(line_no) + ": bad header");
      const auto key = line.substr(2, eq - 2);
      const auto value = line.substr(eq + 1);
      if (key == "seed") d.seed = text::parse_number<std::uint64_t>(value, "D_aware seed");
      else if (key == "epsilon") d.epsilon = text::parse_number<double>(value, "D_aware epsilon");
      else if (key == "n_pos") d.n_pos = text::parse_number<int>(value, "D_aware n_pos");
      else if (key == "checkpoint") d.checkpoint_hash = std::string(value);
      else if (key == "library") d.library_hash = std::string(value);
      else if (key == "scope") d.scope = parse_khop_scope(value);
      else if (key == "query_horizon") d.query_horizon = text::parse_number<std::size_t>(value, "D_aware query_horizon");
      continue;
    }
    if (!header_seen) {
      if (line != kHeaderRow) throw FormatError("D_aware line " + std::to_string(line_no) + ": missing column header");
      header_seen = true;
      continue;
    }
    const auto f = text::split(line, ',');
    if (f.size() != 4) throw FormatError("D_aware line " + std::to_string(line_no) + ": expected 4 fields");
    TaskTriple t{text::parse_number<NodeId>(f[0], "D_aware query_center"), text::parse_number<NodeId>(f[1], "D_aware candidate_center"),
                 text::parse_number<double>(f[2], "D_aware C_r"), parse_relevance(f[3])};
    if (t.label != classify(t.shift, d.epsilon)) {
      throw FormatError("D_aware line " + std::to_string(line_no) + ": label inconsistent with C_r");
    }
    d.rows.push_back(t);
  }
  if (!header_seen) throw FormatError("D_aware: missing column header");
  return d;
}

void TaskDataset::write(const std::filesystem::path& path) const { write_file(path, to_text()); }

TaskDataset TaskDataset::read(const std::filesystem::path& path) { return parse(read_file(path)); }

}  // namespace taskrag
