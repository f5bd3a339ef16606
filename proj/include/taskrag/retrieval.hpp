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

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "taskrag/encoder.hpp"
#include "taskrag/library.hpp"
#include "taskrag/tam.hpp"

namespace taskrag {

inline constexpr int kDefaultTopM = 3;
inline constexpr double kDefaultMargin = 1.0;
inline constexpr double kDefaultLambda = 0.1;
inline constexpr double kDefaultDropRate = 0.5;
inline constexpr std::size_t kDefaultRecommendations = 20;

enum class AlphaMode { uniform, softmax };

std::string_view to_string(AlphaMode mode);
AlphaMode parse_alpha_mode(std::string_view s);

struct FusionConfig {
  int top_k = kDefaultTopK;        // K, coarse candidates
  int top_m = kDefaultTopM;        // M, fused subgraphs; 0 turns retrieval off
  AlphaMode alpha_mode = AlphaMode::softmax;
  double temperature = 1.0;
  double beta_init = 0.0;          // pre-sigmoid gate
  double margin = kDefaultMargin;  // gamma
  double lambda = kDefaultLambda;  // weight of L_mrl
  double mu = kDefaultRegWeight;   // weight of L_reg

  void validate() const;
};

struct Ranked {
  std::size_t index;  // position in the scored list
  double score;
};

// Top-m positions by descending score, ties by ascending position.
std::vector<Ranked> rerank_topm(std::span<const double> scores, std::size_t m);

// Nonnegative weights summing to one: 1/m each, or softmax(scores / temperature).
std::vector<double> alpha_weights(std::span<const double> scores, AlphaMode mode, double temperature);

// h_m: sum over l = 1..L of the center row of Ahat^l X on the subgraph.
RowVector<double> retrieved_representation(const MatrixXf& features, const Subgraph& sg, int layers);

// H_rag = sum_i alpha_i h_m^i with `representations` holding one h_m per row.
RowVector<double> aggregate_retrieved(const Matrix<double>& representations, std::span<const double> scores,
                                      const FusionConfig& config);

inline double beta_gate(double beta_param) { return 1.0 / (1.0 + std::exp(-beta_param)); }

// beta h_q + (1 - beta) H_rag with beta = sigmoid(beta_param).
RowVector<double> fuse_query(const RowVector<double>& h_q, const RowVector<double>& h_rag, double beta_param);

struct RetrievalResult {
  std::vector<Neighbor> coarse;       // K nearest library entries
  std::vector<double> coarse_scores;  // relevance of each coarse entry
  std::vector<Ranked> selected;       // top-M, indices into `coarse`
  std::vector<double> alpha;          // one per selected entry
};

// Coarse L2 retrieval of K entries, relevance re-ranking, top-M and alpha.
// K shrinks to the number of eligible entries when the library is smaller.
RetrievalResult retrieve(const RowVector<float>& query_key, const SubgraphLibrary& library,
                         const ParameterSet<float>& tam, const TamConfig& tam_config, const FusionConfig& fusion,
                         std::span<const std::size_t> exclude = {});

// Node weights w with H_rag = sum_j w_j X[j], X indexed by global node id.
using NodeWeights = std::vector<std::pair<NodeId, double>>;
NodeWeights retrieval_weights(const RetrievalResult& result, const SubgraphLibrary& library, int layers);

// Rows of H_rag for a list of users as a sparse [users x nodes] operator, each
// row scaled by `factor`. Users without weights get an empty row.
template <typename Scalar>
SparseMatrix<Scalar> fusion_operator(std::span<const NodeWeights* const> rows, Eigen::Index node_count,
                                     double factor) {
  std::vector<Eigen::Triplet<Scalar>> triplets;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!rows[r]) continue;
    for (const auto& [node, w] : *rows[r]) {
      triplets.emplace_back(static_cast<Eigen::Index>(r), node, static_cast<Scalar>(w * factor));
    }
  }
  SparseMatrix<Scalar> out(static_cast<Eigen::Index>(rows.size()), node_count);
  out.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

// Recorded fusion of user rows: rows with mask 1 become
// beta h_u + (1 - beta) H_rag with H_rag = op * ego, others pass through.
template <typename Scalar>
Var<Scalar> fuse_user_rows(const Var<Scalar>& user_rows, const Var<Scalar>& ego, const SparseMatrix<Scalar>& op,
                           const Matrix<Scalar>& mask, const Var<Scalar>& beta_param) {
  Tape<Scalar>& tape = user_rows.tape();
  const Var<Scalar> h_rag = spmm(op, ego);
  const Var<Scalar> one_minus_beta = shift(scale(sigmoid(beta_param), -1.0), 1.0);
  const Var<Scalar> gate = matmul(tape.constant(mask), one_minus_beta);
  return add(user_rows, scale_rows(sub(h_rag, user_rows), gate));
}

// L_mrl: mean over the batch of max(0, gamma - (s+ - s-)) with s+- the
// relevance of [h_u || h_i+-]. Representations are scaled by `token_scale`
// to the subgraph-encoding scale the relevance model was trained on.
template <typename Scalar>
Var<Scalar> margin_ranking_loss(const BoundParams<Scalar>& tam, const TamConfig& config, const Var<Scalar>& users,
                                const Var<Scalar>& pos, const Var<Scalar>& neg, double margin, double token_scale) {
  const Var<Scalar> u = scale(users, token_scale);
  const Var<Scalar> s_pos = tam_score(PairTokens<Scalar>{u, scale(pos, token_scale)}, tam, config);
  const Var<Scalar> s_neg = tam_score(PairTokens<Scalar>{u, scale(neg, token_scale)}, tam, config);
  return mean(relu(shift(sub(s_neg, s_pos), margin)));
}

struct FinetuneConfig {
  FusionConfig fusion;
  int epochs = 20;
  int batch_size = 256;
  double lr = kDefaultLearningRate;
  double drop_rate = kDefaultDropRate;  // edge_perturb drop rate per epoch
  bool train_tam = false;               // unfreeze every relevance-model weight, not only the score head
  int hops = kDefaultHops;
  int cap = kDefaultSubgraphCap;
  KhopScope scope = KhopScope::history;  // window the query keys are taken over
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t seed = 0;

  void validate() const;
};

// Mutable state carried from one fine-tune snapshot to the next.
struct FinetuneState {
  EmbeddingTable table;
  ParameterSet<float> tam;
  TamConfig tam_config;
  double beta_param = 0.0;
};

struct FinetuneEpochLog {
  int epoch;
  double bpr;
  double beta;
};

// Retrieval context of one fine-tune snapshot: per-user query keys computed
// with the table the library was built from, and the library itself.
struct QueryKeys {
  std::vector<std::optional<RowVector<float>>> keys;  // per user; empty when the user has no history
  std::vector<std::optional<std::size_t>> own_entry;  // the user's own library entry, excluded at retrieval
};

// Keys for every user with at least one edge in graph.window(horizon, scope).
QueryKeys compute_query_keys(const DynamicGraph& graph, std::size_t horizon, const SubgraphLibrary& library,
                             const EmbeddingTable& key_table, int hops, int cap, std::uint64_t seed,
                             KhopScope scope = KhopScope::history);

// Per-user node weights for H_rag under the current relevance model (empty
// when retrieval is off or the user has no key).
std::vector<std::optional<NodeWeights>> user_retrievals(const QueryKeys& keys, const SubgraphLibrary& library,
                                                        const ParameterSet<float>& tam, const TamConfig& tam_config,
                                                        const FusionConfig& fusion, int layers);

// Fine-tunes `state` on one snapshot with L_bpr + lambda L_mrl + mu L_reg.
// Each epoch perturbs the window's edges, re-scores retrieval with the current
// relevance head, then runs one shuffled BPR pass.
std::vector<FinetuneEpochLog> finetune_snapshot(FinetuneState& state, const SnapshotGraph& window,
                                                const QueryKeys& keys, const SubgraphLibrary& library,
                                                const FinetuneConfig& config, std::uint64_t step_seed);

struct Recommendation {
  std::int32_t user = 0;
  std::vector<std::pair<std::int32_t, double>> items;  // (item, score), best first
  bool popularity_fallback = false;
};

// Scores items for users of one evaluation step: propagated table over the
// window, fused user rows for users with retrieval, window items excluded.
class Recommender {
 public:
  Recommender(const EmbeddingTable& table, const SnapshotGraph& window, const SnapshotGraph& history,
              std::vector<std::optional<NodeWeights>> retrievals, double beta_param);

  // Throws std::out_of_range for an unknown user.
  Recommendation recommend(std::int32_t user, std::size_t top_k = kDefaultRecommendations) const;

  RowVector<double> user_representation(std::int32_t user) const;

 private:
  const SnapshotGraph* window_;
  const SnapshotGraph* history_;
  MatrixXf ego_;
  Matrix<double> propagated_;
  std::vector<std::optional<NodeWeights>> retrievals_;
  double beta_param_;
  int layers_;
  std::vector<std::int32_t> popularity_order_;
};

// `user_id,rank,item_id,score` rows under a `# key=value` metadata block,
// external ids taken from the id maps.
std::string format_recommendations(std::span<const Recommendation> recs, std::span<const std::int64_t> user_ids,
                                   std::span<const std::int64_t> item_ids,
                                   std::span<const std::pair<std::string, std::string>> metadata);

}  // namespace taskrag
