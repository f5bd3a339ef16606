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
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "taskrag/checkpoint.hpp"
#include "taskrag/graph.hpp"
#include "taskrag/ops.hpp"
#include "taskrag/params.hpp"
#include "taskrag/rng.hpp"
#include "taskrag/subgraph.hpp"

namespace taskrag {

inline constexpr int kDefaultEmbeddingDim = 64;
inline constexpr int kDefaultLayers = 3;
inline constexpr double kDefaultLearningRate = 1e-3;
inline constexpr double kDefaultRegWeight = 1e-4;

// Node embeddings stacked as [users; items] x d, plus the propagation depth L.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::int32_t users, std::int32_t items, MatrixXf embeddings, int layers);

  // uniform(-range, range) initialization.
  static EmbeddingTable random(std::int32_t users, std::int32_t items, int dim, int layers, std::uint64_t seed,
                               double range = 0.1);

  const MatrixXf& embeddings() const { return embeddings_; }
  MatrixXf& embeddings() { return embeddings_; }
  auto user_embeddings() const { return embeddings_.topRows(users_); }
  auto item_embeddings() const { return embeddings_.bottomRows(items_); }

  std::int32_t user_count() const { return users_; }
  std::int32_t item_count() const { return items_; }
  std::int32_t node_count() const { return users_ + items_; }
  int dim() const { return static_cast<int>(embeddings_.cols()); }
  int layers() const { return layers_; }

  Checkpoint to_checkpoint() const;
  static EmbeddingTable from_checkpoint(const Checkpoint& ckpt);

 private:
  std::int32_t users_ = 0;
  std::int32_t items_ = 0;
  MatrixXf embeddings_;
  int layers_ = kDefaultLayers;
};

// GConv operator: D^-1/2 A D^-1/2, with isolated nodes mapped to themselves so
// that a node without edges keeps its embedding through every layer.
template <typename Scalar>
SparseMatrix<Scalar> gconv_operator(const SparseMatrix<Scalar>& adjacency) {
  SparseMatrix<Scalar> a_hat = normalize_adjacency(adjacency, Normalization::symmetric);
  std::vector<Eigen::Triplet<Scalar>> isolated;
  for (Eigen::Index r = 0; r < adjacency.rows(); ++r) {
    if (adjacency.row(r).nonZeros() == 0) isolated.emplace_back(r, r, Scalar(1));
  }
  if (isolated.empty()) return a_hat;
  SparseMatrix<Scalar> self(adjacency.rows(), adjacency.cols());
  self.setFromTriplets(isolated.begin(), isolated.end());
  return a_hat + self;
}

// Mean over l = 0..L of Ahat^l E.
template <typename Scalar>
Matrix<Scalar> propagate_layer_mean(const SparseMatrix<Scalar>& a_hat, const Matrix<Scalar>& e, int layers) {
  Matrix<Scalar> acc = e;
  Matrix<Scalar> cur = e;
  for (int l = 0; l < layers; ++l) {
    cur = a_hat * cur;
    acc += cur;
  }
  return acc / static_cast<Scalar>(layers + 1);
}

// Recorded version of propagate_layer_mean.
template <typename Scalar>
Var<Scalar> propagate_layer_mean(const SparseMatrix<Scalar>& a_hat, const Var<Scalar>& e, int layers) {
  Var<Scalar> acc = e;
  Var<Scalar> cur = e;
  for (int l = 0; l < layers; ++l) {
    cur = spmm(a_hat, cur);
    acc = add(acc, cur);
  }
  return scale(acc, 1.0 / (layers + 1));
}

// h_t = forward(h_{t-1}; G_{t-1}): L gconv_operator steps over `prev`, layer
// outputs (including layer 0) averaged.
EmbeddingTable temporal_forward(const EmbeddingTable& table, const SnapshotGraph& prev);

// Per-local-node weights c with  sum_{l=first..L} (Ahat^l X)[center] = c^T X,
// Ahat the gconv_operator of the subgraph's local adjacency.
Eigen::VectorXd layer_coefficients(const Subgraph& sg, int layers, int first_layer);

// sum_{l=0..L} of the center's row after l propagation steps on the subgraph,
// features taken from `features` (rows indexed by global node id).
template <typename Scalar>
RowVector<Scalar> encode_subgraph(const Matrix<Scalar>& features, const Subgraph& sg, int layers) {
  Matrix<Scalar> x(static_cast<Eigen::Index>(sg.nodes.size()), features.cols());
  for (std::size_t i = 0; i < sg.nodes.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = features.row(sg.nodes[i]);
  const SparseMatrix<Scalar> a_hat = gconv_operator(sg.adjacency<Scalar>());
  RowVector<Scalar> out = x.row(0);
  for (int l = 0; l < layers; ++l) {
    x = a_hat * x;
    out += x.row(0);
  }
  return out;
}

inline RowVector<float> encode_subgraph(const EmbeddingTable& table, const Subgraph& sg) {
  return encode_subgraph(table.embeddings(), sg, table.layers());
}

struct BprSample {
  std::int32_t user;
  std::int32_t pos;
  std::int32_t neg;
};

// One shuffled pass over the window's edges with a uniform negative per edge
// drawn from items the user has not interacted with in the window. Users who
// interacted with every item are skipped.
std::vector<BprSample> sample_bpr_epoch(const SnapshotGraph& window, Rng& rng);

// Mean over the batch of -log sigmoid(h_u.h_i+ - h_u.h_i-).
template <typename Scalar>
Var<Scalar> bpr_loss(const Var<Scalar>& user, const Var<Scalar>& pos, const Var<Scalar>& neg) {
  return scale(mean(log_sigmoid(sub(row_dot(user, pos), row_dot(user, neg)))), -1.0);
}

// (1 / 2N) (sum ||u||^2 + sum ||i+||^2 + sum ||i-||^2), N the batch size.
template <typename Scalar>
Var<Scalar> embedding_reg(const Var<Scalar>& user, const Var<Scalar>& pos, const Var<Scalar>& neg) {
  const double n = static_cast<double>(user.rows());
  return scale(add(add(sum(mul(user, user)), sum(mul(pos, pos))), sum(mul(neg, neg))), 1.0 / (2.0 * n));
}

struct BprStepResult {
  double bpr = 0.0;
  double total = 0.0;
};

// Hooks let fine-tuning fuse the user rows and add terms while sharing the
// plain BPR path. Parameters other than "embeddings" live in the same set.
template <typename Scalar>
struct BasicBprHooks {
  // (tape, bound params, propagated embeddings H, batch, user rows of H) -> fused user rows
  std::function<Var<Scalar>(Tape<Scalar>&, const BoundParams<Scalar>&, const Var<Scalar>&,
                            std::span<const BprSample>, const Var<Scalar>&)>
      fuse_users;
  // (tape, bound params, fused users, pos rows, neg rows) -> scalar added to the loss
  std::function<Var<Scalar>(Tape<Scalar>&, const BoundParams<Scalar>&, const Var<Scalar>&, const Var<Scalar>&,
                            const Var<Scalar>&)>
      extra_loss;
  typename BoundParams<Scalar>::Predicate trainable;
};

using BprHooks = BasicBprHooks<float>;

template <typename Scalar>
struct BprObjective {
  Var<Scalar> bpr;
  Var<Scalar> total;
};

// L = L_bpr + mu * L_reg (+ hooks) on embeddings propagated by `a_hat`;
// `bound` must hold "embeddings" [nodes x d].
template <typename Scalar>
BprObjective<Scalar> bpr_objective(Tape<Scalar>& tape, const BoundParams<Scalar>& bound,
                                   const SparseMatrix<Scalar>& a_hat, int layers, std::int32_t user_count,
                                   std::span<const BprSample> batch, double reg_weight,
                                   const BasicBprHooks<Scalar>& hooks = {}) {
  if (batch.empty()) throw std::invalid_argument("bpr_objective: empty batch");
  const Var<Scalar>& ego = bound["embeddings"];
  const Var<Scalar> h = propagate_layer_mean(a_hat, ego, layers);

  std::vector<Eigen::Index> users, pos, neg;
  users.reserve(batch.size());
  pos.reserve(batch.size());
  neg.reserve(batch.size());
  for (const auto& s : batch) {
    users.push_back(s.user);
    pos.push_back(user_count + s.pos);
    neg.push_back(user_count + s.neg);
  }
  Var<Scalar> hu = gather_rows(h, users);
  if (hooks.fuse_users) hu = hooks.fuse_users(tape, bound, h, batch, hu);
  const Var<Scalar> hp = gather_rows(h, pos);
  const Var<Scalar> hn = gather_rows(h, neg);

  const Var<Scalar> bpr = bpr_loss(hu, hp, hn);
  Var<Scalar> total =
      add(bpr, scale(embedding_reg(gather_rows(ego, users), gather_rows(ego, pos), gather_rows(ego, neg)),
                     reg_weight));
  if (hooks.extra_loss) total = add(total, hooks.extra_loss(tape, bound, hu, hp, hn));
  return {bpr, total};
}

// One optimizer step on bpr_objective.
BprStepResult bpr_step(ParameterSet<float>& params, Optimizer<float>& opt, const SparseMatrix<float>& a_hat,
                       int layers, std::int32_t user_count, std::span<const BprSample> batch, double reg_weight,
                       const BprHooks& hooks = {});

struct EncoderConfig {
  int dim = kDefaultEmbeddingDim;
  int layers = kDefaultLayers;
  int epochs = 100;
  int batch_size = 256;
  double lr = kDefaultLearningRate;
  double reg_weight = kDefaultRegWeight;
  double init_range = 0.1;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  EmbeddingTable table;
  std::vector<double> epoch_loss;  // mean per-triplet BPR loss
};

// BPR pretraining over the accumulated pretraining snapshots.
PretrainResult pretrain_bpr(const DynamicGraph& graph, const EncoderConfig& config);

// The per-epoch loop shared by pretraining and fine-tuning. Returns the mean
// per-triplet BPR loss of the epoch.
double run_bpr_epoch(ParameterSet<float>& params, Optimizer<float>& opt, const SnapshotGraph& propagation_graph,
                     const SnapshotGraph& window, int layers, int batch_size, double reg_weight, Rng& rng,
                     const BprHooks& hooks = {});

}  // namespace taskrag
