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

#include "taskrag/encoder.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace taskrag {

namespace {

constexpr const char* kTableKind = "embedding_table";

}  // namespace

EmbeddingTable::EmbeddingTable(std::int32_t users, std::int32_t items, MatrixXf embeddings, int layers)
    : users_(users), items_(items), embeddings_(std::move(embeddings)), layers_(layers) {
  if (users < 0 || items < 0 || embeddings_.rows() != users + items) {
    throw ShapeError("EmbeddingTable: " + std::to_string(embeddings_.rows()) + " rows for " +
                     std::to_string(users) + " users and " + std::to_string(items) + " items");
  }
  if (layers < 0) throw std::invalid_argument("EmbeddingTable: negative layer count");
  if (!embeddings_.allFinite()) throw NumericError("EmbeddingTable: non-finite embedding");
}

EmbeddingTable EmbeddingTable::random(std::int32_t users, std::int32_t items, int dim, int layers,
                                      std::uint64_t seed, double range) {
  Rng rng(seed);
  MatrixXf e(users + items, dim);
  for (Eigen::Index r = 0; r < e.rows(); ++r) {
    for (Eigen::Index c = 0; c < e.cols(); ++c) e(r, c) = static_cast<float>(rng.uniform(-range, range));
  }
  return EmbeddingTable(users, items, std::move(e), layers);
}

Checkpoint EmbeddingTable::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.kind = kTableKind;
  ckpt.meta["dim"] = std::to_string(dim());
  ckpt.meta["layers"] = std::to_string(layers_);
  ckpt.arrays.add("user_embeddings", embeddings_.topRows(users_));
  ckpt.arrays.add("item_embeddings", embeddings_.bottomRows(items_));
  return ckpt;
}

EmbeddingTable EmbeddingTable::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != kTableKind) {
    throw FormatError("expected a '" + std::string(kTableKind) + "' checkpoint, got '" + ckpt.kind + "'");
  }
  const MatrixXf& users = ckpt.arrays.at("user_embeddings");
  const MatrixXf& items = ckpt.arrays.at("item_embeddings");
  if (users.cols() != items.cols()) throw FormatError("embedding table: user/item width mismatch");
  MatrixXf e(users.rows() + items.rows(), users.cols());
  e << users, items;
  return EmbeddingTable(static_cast<std::int32_t>(users.rows()), static_cast<std::int32_t>(items.rows()),
                        std::move(e), std::stoi(ckpt.meta.at("layers")));
}

EmbeddingTable temporal_forward(const EmbeddingTable& table, const SnapshotGraph& prev) {
  if (prev.user_count() != table.user_count() || prev.item_count() != table.item_count()) {
    throw ShapeError("temporal_forward: graph has " + std::to_string(prev.user_count()) + "+" +
                     std::to_string(prev.item_count()) + " nodes, table " + std::to_string(table.user_count()) +
                     "+" + std::to_string(table.item_count()));
  }
  const auto a_hat = gconv_operator(prev.adjacency<float>());
  return EmbeddingTable(table.user_count(), table.item_count(),
                        propagate_layer_mean(a_hat, table.embeddings(), table.layers()), table.layers());
}

Eigen::VectorXd layer_coefficients(const Subgraph& sg, int layers, int first_layer) {
  const auto a_hat = gconv_operator(sg.adjacency<double>());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sg.size()));
  v(0) = 1.0;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(v.size());
  for (int l = 0; l <= layers; ++l) {
    if (l >= first_layer) c += v;
    if (l < layers) v = a_hat * v;
  }
  return c;
}

std::vector<BprSample> sample_bpr_epoch(const SnapshotGraph& window, Rng& rng) {
  std::vector<Edge> edges(window.edges().begin(), window.edges().end());
  rng.shuffle(std::span<Edge>(edges));
  std::vector<BprSample> out;
  out.reserve(edges.size());
  const auto items = static_cast<std::uint64_t>(window.item_count());
  for (const auto& e : edges) {
    if (window.degree(window.user_node(e.user)) >= window.item_count()) continue;
    std::int32_t neg;
    do {
      neg = static_cast<std::int32_t>(rng.below(items));
    } while (window.has_edge(e.user, neg));
    out.push_back({e.user, e.item, neg});
  }
  return out;
}

BprStepResult bpr_step(ParameterSet<float>& params, Optimizer<float>& opt, const SparseMatrix<float>& a_hat,
                       int layers, std::int32_t user_count, std::span<const BprSample> batch, double reg_weight,
                       const BprHooks& hooks) {
  if (batch.empty()) throw std::invalid_argument("bpr_step: empty batch");
  Tape<float> tape;
  BoundParams<float> bound(tape, params, hooks.trainable);
  const auto objective = bpr_objective(tape, bound, a_hat, layers, user_count, batch, reg_weight, hooks);
  tape.backward(objective.total);
  opt.step(params, bound.gradients());
  return {static_cast<double>(objective.bpr.value()(0, 0)), static_cast<double>(objective.total.value()(0, 0))};
}

double run_bpr_epoch(ParameterSet<float>& params, Optimizer<float>& opt, const SnapshotGraph& propagation_graph,
                     const SnapshotGraph& window, int layers, int batch_size, double reg_weight, Rng& rng,
                     const BprHooks& hooks) {
  if (batch_size < 1) throw std::invalid_argument("run_bpr_epoch: batch_size must be positive");
  const auto a_hat = gconv_operator(propagation_graph.adjacency<float>());
  const std::vector<BprSample> samples = sample_bpr_epoch(window, rng);
  if (samples.empty()) return 0.0;
  double weighted = 0.0;
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min(samples.size() - start, static_cast<std::size_t>(batch_size));
    const auto batch = std::span<const BprSample>(samples).subspan(start, n);
    weighted += bpr_step(params, opt, a_hat, layers, window.user_count(), batch, reg_weight, hooks).bpr *
                static_cast<double>(n);
  }
  return weighted / static_cast<double>(samples.size());
}

PretrainResult pretrain_bpr(const DynamicGraph& graph, const EncoderConfig& config) {
  graph.validate();
  const SnapshotGraph window = graph.pretrain_graph();
  if (window.edge_count() == 0) throw std::invalid_argument("pretrain_bpr: pretraining window has no edges");

  EmbeddingTable init = EmbeddingTable::random(graph.user_count(), graph.item_count(), config.dim, config.layers,
                                               derive_seed(config.seed, "init"), config.init_range);
  ParameterSet<float> params;
  params.add("embeddings", init.embeddings());
  Optimizer<float> opt(config.optimizer, config.lr, 0.0);
  Rng rng(derive_seed(config.seed, "sampling"));

  PretrainResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    result.epoch_loss.push_back(
        run_bpr_epoch(params, opt, window, window, config.layers, config.batch_size, config.reg_weight, rng));
  }
  result.table = EmbeddingTable(graph.user_count(), graph.item_count(), params.at("embeddings"), config.layers);
  return result;
}

}  // namespace taskrag
