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

#include "taskrag/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "taskrag/checkpoint.hpp"
#include "taskrag/text.hpp"

namespace taskrag {

namespace {

constexpr std::string_view kColumns = "time_index,recall,ndcg,users";

void check_sizes(std::span<const ItemList> predictions, std::span<const ItemList> ground_truth, std::size_t k) {
  if (predictions.size() != ground_truth.size()) {
    throw std::invalid_argument("metrics: " + std::to_string(predictions.size()) + " prediction lists for " +
                                std::to_string(ground_truth.size()) + " users");
  }
  if (k == 0) throw std::invalid_argument("metrics: k must be positive");
}

template <typename PerUser>
MetricValue average(std::span<const ItemList> predictions, std::span<const ItemList> ground_truth, std::size_t k,
                    PerUser per_user) {
  check_sizes(predictions, ground_truth, k);
  MetricValue out;
  double total = 0.0;
  for (std::size_t u = 0; u < predictions.size(); ++u) {
    if (ground_truth[u].empty()) {
      ++out.excluded;
      continue;
    }
    const std::unordered_set<std::int32_t> truth(ground_truth[u].begin(), ground_truth[u].end());
    const std::size_t depth = std::min(k, predictions[u].size());
    total += per_user(std::span<const std::int32_t>(predictions[u].data(), depth), truth);
    ++out.users;
  }
  if (out.users > 0) out.mean = total / static_cast<double>(out.users);
  return out;
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j);
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

MetricValue recall_at_k(std::span<const ItemList> predictions, std::span<const ItemList> ground_truth,
                        std::size_t k) {
  return average(predictions, ground_truth, k,
                 [](std::span<const std::int32_t> top, const std::unordered_set<std::int32_t>& truth) {
                   std::size_t hits = 0;
                   for (auto item : top) hits += truth.count(item);
                   return static_cast<double>(hits) / static_cast<double>(truth.size());
                 });
}

MetricValue ndcg_at_k(std::span<const ItemList> predictions, std::span<const ItemList> ground_truth,
                      std::size_t k) {
  return average(predictions, ground_truth, k,
                 [k](std::span<const std::int32_t> top, const std::unordered_set<std::int32_t>& truth) {
                   double dcg = 0.0;
                   for (std::size_t j = 0; j < top.size(); ++j) {
                     if (truth.count(top[j])) dcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
                   }
                   double idcg = 0.0;
                   const std::size_t ideal = std::min(k, truth.size());
                   for (std::size_t j = 0; j < ideal; ++j) idcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
                   return dcg / idcg;
                 });
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
  if (a.size() < 2) return 0.0;
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

void EvalReport::finalize() {
  mean_recall = 0.0;
  mean_ndcg = 0.0;
  for (const auto& s : snapshots) {
    mean_recall += s.recall;
    mean_ndcg += s.ndcg;
  }
  if (!snapshots.empty()) {
    mean_recall /= static_cast<double>(snapshots.size());
    mean_ndcg /= static_cast<double>(snapshots.size());
  }
}

std::string EvalReport::to_text() const {
  std::string s = "# label=" + label + "\n# k=" + std::to_string(k) + "\n# seed=" + std::to_string(seed) + "\n";
  for (const auto& [key, value] : metadata) s += "# meta." + key + "=" + value + "\n";
  s += "# skipped=";
  for (std::size_t i = 0; i < skipped_snapshots.size(); ++i) {
    s += (i ? ";" : "") + std::to_string(skipped_snapshots[i]);
  }
  s += "\n";
  s += kColumns;
  s += '\n';
  std::size_t users = 0;
  for (const auto& r : snapshots) {
    s += std::to_string(r.time_index) + ',' + text::format_double(r.recall) + ',' + text::format_double(r.ndcg) +
         ',' + std::to_string(r.users) + '\n';
    users += r.users;
  }
  s += "mean," + text::format_double(mean_recall) + ',' + text::format_double(mean_ndcg) + ',' +
       std::to_string(users) + '\n';
  return s;
}

EvalReport EvalReport::parse(std::string_view content) {
  EvalReport r;
  bool columns_seen = false, mean_seen = false;
  std::size_t line_no = 0;
  for (std::string_view line : text::split(content, '\n')) {
    ++line_no;
    const std::string where = "report line " + std::to_string(line_no);
    if (line.empty()) continue;
    if (line.starts_with("# ")) {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw FormatError(where + ": bad header");
      const auto key = line.substr(2, eq - 2);
      const auto value = line.substr(eq + 1);
      if (key == "label") {
        r.label = std::string(value);
      } else if (key == "k") {
        r.k = text::parse_number<std::size_t>(value, where);
      } else if (key == "seed") {
        r.seed = text::parse_number<std::uint64_t>(value, where);
      } else if (key == "skipped") {
        if (!value.empty()) {
          for (auto v : text::split(value, ';')) r.skipped_snapshots.push_back(text::parse_number<std::int64_t>(v, where));
        }
      } else if (key.starts_with("meta.")) {
        r.metadata.emplace_back(std::string(key.substr(5)), std::string(value));
      } else {
        throw FormatError(where + ": unknown header '" + std::string(key) + "'");
      }
      continue;
    }
    if (!columns_seen) {
      if (line != kColumns) throw FormatError(where + ": missing column header");
      columns_seen = true;
      continue;
    }
    const auto f = text::split(line, ',');
    if (f.size() != 4) throw FormatError(where + ": expected 4 fields");
    if (f[0] == "mean") {
      r.mean_recall = text::parse_number<double>(f[1], where);
      r.mean_ndcg = text::parse_number<double>(f[2], where);
      mean_seen = true;
      continue;
    }
    r.snapshots.push_back({text::parse_number<std::int64_t>(f[0], where), text::parse_number<double>(f[1], where),
                           text::parse_number<double>(f[2], where), text::parse_number<std::size_t>(f[3], where)});
  }
  if (!mean_seen) throw FormatError("report: missing mean row");
  return r;
}

void EvalReport::write(const std::filesystem::path& path) const { write_file(path, to_text()); }

EvalReport EvalReport::read(const std::filesystem::path& path) { return parse(read_file(path)); }

EvalReport evaluate_snapshots(const DynamicGraph& graph, std::size_t first_test, const Ranker& ranker,
                              std::size_t k) {
  if (first_test >= graph.snapshots.size()) {
    throw std::invalid_argument("evaluate_snapshots: no test snapshots after index " + std::to_string(first_test));
  }
  EvalReport report;
  report.k = k;
  for (std::size_t t = first_test; t < graph.snapshots.size(); ++t) {
    const SnapshotGraph& snap = graph.snapshots[t];
    std::vector<ItemList> predictions, truth;
    for (std::int32_t u = 0; u < snap.user_count(); ++u) {
      const auto nbrs = snap.neighbors(snap.user_node(u));
      if (nbrs.empty()) continue;
      ItemList items;
      items.reserve(nbrs.size());
      for (NodeId n : nbrs) items.push_back(snap.item_of(n));
      truth.push_back(std::move(items));
      predictions.push_back(ranker(u, t, k));
    }
    if (truth.empty()) {
      report.skipped_snapshots.push_back(snap.time_index());
      continue;
    }
    const auto recall = recall_at_k(predictions, truth, k);
    const auto ndcg = ndcg_at_k(predictions, truth, k);
    report.snapshots.push_back({snap.time_index(), recall.mean, ndcg.mean, recall.users});
  }
  report.finalize();
  return report;
}

}  // namespace taskrag
