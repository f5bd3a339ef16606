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

#include "taskrag/retrieval.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

#include "taskrag/text.hpp"

namespace taskrag {

std::string_view to_string(AlphaMode mode) { return mode == AlphaMode::uniform ? "uniform" : "softmax"; }

AlphaMode parse_alpha_mode(std::string_view s) {
  if (s == "uniform") return AlphaMode::uniform;
  if (s == "softmax") return AlphaMode::softmax;
  throw std::invalid_argument("unknown alpha mode '" + std::string(s) + "'");
}

void FusionConfig::validate() const {
  if (top_k < 1) throw std::invalid_argument("fusion: K must be >= 1");
  if (top_m < 0 || top_m > top_k) {
    throw std::invalid_argument("fusion: M = " + std::to_string(top_m) + " outside [0, K = " + std::to_string(top_k) +
                                "]");
  }
  if (!(temperature > 0.0)) throw std::invalid_argument("fusion: temperature must be > 0");
  if (lambda < 0.0 || mu < 0.0) throw std::invalid_argument("fusion: lambda and mu must be >= 0");
  if (!std::isfinite(beta_init) || !std::isfinite(margin)) throw std::invalid_argument("fusion: non-finite setting");
}

std::vector<Ranked> rerank_topm(std::span<const double> scores, std::size_t m) {
  if (m > scores.size()) {
    throw std::invalid_argument("rerank_topm: M = " + std::to_string(m) + " exceeds " +
                                std::to_string(scores.size()) + " candidates");
  }
  std::vector<Ranked> all(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) all[i] = {i, scores[i]};
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m), all.end(),
                    [](const Ranked& a, const Ranked& b) {
                      return a.score != b.score ? a.score > b.score : a.index < b.index;
                    });
  all.resize(m);
  return all;
}

std::vector<double> alpha_weights(std::span<const double> scores, AlphaMode mode, double temperature) {
  if (scores.empty()) throw std::invalid_argument("alpha_weights: no scores");
  const auto n = static_cast<double>(scores.size());
  std::vector<double> alpha(scores.size(), 1.0 / n);
  if (mode == AlphaMode::uniform) return alpha;
  if (!(temperature > 0.0)) throw std::invalid_argument("alpha_weights: temperature must be > 0");
  const double top = *std::max_element(scores.begin(), scores.end());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    alpha[i] = std::exp((scores[i] - top) / temperature);
    total += alpha[i];
  }
  for (auto& a : alpha) a /= total;
  return alpha;
}

RowVector<double> retrieved_representation(const MatrixXf& features, const Subgraph& sg, int layers) {
  const Eigen::VectorXd c = layer_coefficients(sg, layers, 1);
  RowVector<double> out = RowVector<double>::Zero(features.cols());
  for (std::size_t i = 0; i < sg.nodes.size(); ++i) {
    out += c(static_cast<Eigen::Index>(i)) * features.row(sg.nodes[i]).cast<double>();
  }
  return out;
}

RowVector<double> aggregate_retrieved(const Matrix<double>& representations, std::span<const double> scores,
                                      const FusionConfig& config) {
  if (representations.rows() == 0) throw std::invalid_argument("aggregate_retrieved: nothing retrieved");
  if (static_cast<std::size_t>(representations.rows()) != scores.size()) {
    throw ShapeError("aggregate_retrieved: " + std::to_string(representations.rows()) + " representations, " +
                     std::to_string(scores.size()) + " scores");
  }
  const auto alpha = alpha_weights(scores, config.alpha_mode, config.temperature);
  RowVector<double> out = RowVector<double>::Zero(representations.cols());
  for (std::size_t i = 0; i < alpha.size(); ++i) out += alpha[i] * representations.row(static_cast<Eigen::Index>(i));
  return out;
}

RowVector<double> fuse_query(const RowVector<double>& h_q, const RowVector<double>& h_rag, double beta_param) {
  if (h_q.cols() != h_rag.cols()) throw ShapeError("fuse_query: width mismatch");
  const double beta = beta_gate(beta_param);
  return beta * h_q + (1.0 - beta) * h_rag;
}

RetrievalResult retrieve(const RowVector<float>& query_key, const SubgraphLibrary& library,
                         const ParameterSet<float>& tam, const TamConfig& tam_config, const FusionConfig& fusion,
                         std::span<const std::size_t> exclude) {
  fusion.validate();
  std::vector<std::size_t> excluded;
  for (auto e : exclude) {
    if (e < library.size()) excluded.push_back(e);
  }
  std::sort(excluded.begin(), excluded.end());
  excluded.erase(std::unique(excluded.begin(), excluded.end()), excluded.end());
  const std::size_t k = std::min(static_cast<std::size_t>(fusion.top_k), library.size() - excluded.size());
  RetrievalResult out;
  if (k == 0 || fusion.top_m == 0) return out;

  out.coarse = l2_topk(library, query_key, k, excluded);
  MatrixXf queries = query_key.replicate(static_cast<Eigen::Index>(k), 1);
  MatrixXf candidates(static_cast<Eigen::Index>(k), library.dim());
  for (std::size_t i = 0; i < k; ++i) {
    candidates.row(static_cast<Eigen::Index>(i)) = library.keys().row(static_cast<Eigen::Index>(out.coarse[i].index));
  }
  const auto scores = score_pairs(tam, tam_config, queries, candidates);
  out.coarse_scores.assign(scores.begin(), scores.end());
  out.selected = rerank_topm(out.coarse_scores, std::min(static_cast<std::size_t>(fusion.top_m), k));
  std::vector<double> selected_scores;
  for (const auto& s : out.selected) selected_scores.push_back(s.score);
  out.alpha = alpha_weights(selected_scores, fusion.alpha_mode, fusion.temperature);
  return out;
}

NodeWeights retrieval_weights(const RetrievalResult& result, const SubgraphLibrary& library, int layers) {
  std::map<NodeId, double> merged;
  for (std::size_t j = 0; j < result.selected.size(); ++j) {
    const Subgraph& sg = library.value(result.coarse[result.selected[j].index].index);
    const Eigen::VectorXd c = layer_coefficients(sg, layers, 1);
    for (std::size_t i = 0; i < sg.nodes.size(); ++i) {
      const double w = result.alpha[j] * c(static_cast<Eigen::Index>(i));
      if (w != 0.0) merged[sg.nodes[i]] += w;
    }
  }
  return {merged.begin(), merged.end()};
}

void FinetuneConfig::validate() const {
  fusion.validate();
  if (epochs < 0) throw std::invalid_argument("finetune: epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("finetune: batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("finetune: lr must be > 0");
  if (drop_rate < 0.0 || drop_rate >= 1.0) throw std::invalid_argument("finetune: drop_rate must be in [0, 1)");
}

QueryKeys compute_query_keys(const DynamicGraph& graph, std::size_t horizon, const SubgraphLibrary& library,
                             const EmbeddingTable& key_table, int hops, int cap, std::uint64_t seed,
                             KhopScope scope) {
  const SnapshotGraph history = graph.window(horizon, scope);
  QueryKeys out;
  out.keys.resize(static_cast<std::size_t>(graph.user_count()));
  out.own_entry.resize(out.keys.size());
  for (std::int32_t u = 0; u < graph.user_count(); ++u) {
    const auto slot = static_cast<std::size_t>(u);
    out.own_entry[slot] = library.find(history.user_node(u));
    if (history.degree(history.user_node(u)) == 0) continue;
    out.keys[slot] = encode_subgraph(key_table, extract_khop(history, history.user_node(u), hops, cap, seed));
  }
  return out;
}

std::vector<std::optional<NodeWeights>> user_retrievals(const QueryKeys& keys, const SubgraphLibrary& library,
                                                        const ParameterSet<float>& tam, const TamConfig& tam_config,
                                                        const FusionConfig& fusion, int layers) {
  std::vector<std::optional<NodeWeights>> out(keys.keys.size());
  if (fusion.top_m == 0) return out;
  for (std::size_t u = 0; u < keys.keys.size(); ++u) {
    if (!keys.keys[u]) continue;
    std::vector<std::size_t> exclude;
    if (keys.own_entry[u]) exclude.push_back(*keys.own_entry[u]);
    const RetrievalResult r = retrieve(*keys.keys[u], library, tam, tam_config, fusion, exclude);
    if (!r.selected.empty()) out[u] = retrieval_weights(r, library, layers);
  }
  return out;
}

namespace {

constexpr const char* kEmbeddings = "embeddings";
constexpr const char* kBeta = "beta";

ParameterSet<float> tam_subset(const ParameterSet<float>& params, const ParameterSet<float>& names) {
  ParameterSet<float> out;
  for (const auto& e : names) out.add(e.name, params.at(e.name));
  return out;
}

}  // namespace

std::vector<FinetuneEpochLog> finetune_snapshot(FinetuneState& state, const SnapshotGraph& window,
                                                const QueryKeys& keys, const SubgraphLibrary& library,
                                                const FinetuneConfig& config, std::uint64_t step_seed) {
  config.validate();
  const FusionConfig& fusion = config.fusion;
  const int layers = state.table.layers();
  const Eigen::Index nodes = state.table.node_count();
  const bool retrieval = fusion.top_m > 0;
  const bool margin = fusion.lambda > 0.0;

  ParameterSet<float> params;
  params.add(kEmbeddings, state.table.embeddings());
  params.add(kBeta, MatrixXf::Constant(1, 1, static_cast<float>(state.beta_param)));
  for (const auto& e : state.tam) params.add(e.name, e.value);

  BprHooks hooks;
  hooks.trainable = [&](std::string_view name) {
    if (name == kEmbeddings) return true;
    if (name == kBeta) return retrieval;
    return margin && (config.train_tam || name.starts_with("score."));
  };

  std::vector<std::optional<NodeWeights>> retrievals;
  if (retrieval) {
    hooks.fuse_users = [&](Tape<float>&, const BoundParams<float>& bound, const Var<float>&,
                           std::span<const BprSample> batch, const Var<float>& hu) {
      std::vector<const NodeWeights*> rows(batch.size(), nullptr);
      MatrixXf mask = MatrixXf::Zero(static_cast<Eigen::Index>(batch.size()), 1);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& r = retrievals[static_cast<std::size_t>(batch[i].user)];
        if (!r) continue;
        rows[i] = &*r;
        mask(static_cast<Eigen::Index>(i), 0) = 1.0f;
      }
      const auto op = fusion_operator<float>(rows, nodes, 1.0 / (layers + 1));
      return fuse_user_rows(hu, bound[kEmbeddings], op, mask, bound[kBeta]);
    };
  }
  if (margin) {
    hooks.extra_loss = [&](Tape<float>&, const BoundParams<float>& bound, const Var<float>& users,
                           const Var<float>& pos, const Var<float>& neg) {
      return scale(margin_ranking_loss(bound, state.tam_config, users, pos, neg, fusion.margin, layers + 1.0),
                   fusion.lambda);
    };
  }

  Optimizer<float> opt(config.optimizer, config.lr, 0.0);
  Rng rng(derive_seed(step_seed, "sampling"));
  std::vector<FinetuneEpochLog> log;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const SnapshotGraph perturbed =
        config.drop_rate > 0.0
            ? edge_perturb(window, config.drop_rate, derive_seed(step_seed, "dropout", static_cast<std::uint64_t>(epoch)))
            : window;
    if (retrieval) {
      retrievals = user_retrievals(keys, library, tam_subset(params, state.tam), state.tam_config, fusion, layers);
    }
    const double bpr =
        run_bpr_epoch(params, opt, perturbed, window, layers, config.batch_size, fusion.mu, rng, hooks);
    log.push_back({epoch, bpr, beta_gate(params.at(kBeta)(0, 0))});
  }

  state.table = EmbeddingTable(state.table.user_count(), state.table.item_count(), params.at(kEmbeddings), layers);
  state.beta_param = params.at(kBeta)(0, 0);
  state.tam = tam_subset(params, state.tam);
  return log;
}

Recommender::Recommender(const EmbeddingTable& table, const SnapshotGraph& window, const SnapshotGraph& history,
                         std::vector<std::optional<NodeWeights>> retrievals, double beta_param)
    : window_(&window),
      history_(&history),
      ego_(table.embeddings()),
      retrievals_(std::move(retrievals)),
      beta_param_(beta_param),
      layers_(table.layers()) {
  if (window.node_count() != table.node_count() || history.node_count() != table.node_count()) {
    throw ShapeError("Recommender: graph and table id spaces differ");
  }
  retrievals_.resize(static_cast<std::size_t>(table.user_count()));
  propagated_ = propagate_layer_mean(gconv_operator(window.adjacency<double>()), ego_.cast<double>().eval(), layers_);
  popularity_order_.resize(static_cast<std::size_t>(window.item_count()));
  std::iota(popularity_order_.begin(), popularity_order_.end(), 0);
  std::stable_sort(popularity_order_.begin(), popularity_order_.end(), [&](std::int32_t a, std::int32_t b) {
    return window.degree(window.item_node(a)) > window.degree(window.item_node(b));
  });
}

RowVector<double> Recommender::user_representation(std::int32_t user) const {
  if (user < 0 || user >= window_->user_count()) {
    throw std::out_of_range("unknown user " + std::to_string(user));
  }
  RowVector<double> h = propagated_.row(user);
  const auto& r = retrievals_[static_cast<std::size_t>(user)];
  if (!r) return h;
  RowVector<double> h_rag = RowVector<double>::Zero(h.cols());
  for (const auto& [node, w] : *r) h_rag += w * ego_.row(node).cast<double>();
  return fuse_query(h, h_rag / (layers_ + 1.0), beta_param_);
}

Recommendation Recommender::recommend(std::int32_t user, std::size_t top_k) const {
  const RowVector<double> h = user_representation(user);
  Recommendation rec;
  rec.user = user;
  const NodeId node = window_->user_node(user);
  if (history_->degree(node) == 0) {
    rec.popularity_fallback = true;
    for (std::size_t i = 0; i < std::min(top_k, popularity_order_.size()); ++i) {
      const std::int32_t item = popularity_order_[i];
      rec.items.emplace_back(item, static_cast<double>(window_->degree(window_->item_node(item))));
    }
    return rec;
  }
  const std::int32_t items = window_->item_count();
  const Eigen::VectorXd scores = propagated_.bottomRows(items) * h.transpose();
  std::vector<std::int32_t> candidates;
  candidates.reserve(static_cast<std::size_t>(items));
  for (std::int32_t i = 0; i < items; ++i) {
    if (!window_->has_edge(user, i)) candidates.push_back(i);
  }
  const std::size_t n = std::min(top_k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n), candidates.end(),
                    [&](std::int32_t a, std::int32_t b) { return scores(a) != scores(b) ? scores(a) > scores(b) : a < b; });
  for (std::size_t i = 0; i < n; ++i) rec.items.emplace_back(candidates[i], scores(candidates[i]));
  return rec;
}

std::string format_recommendations(std::span<const Recommendation> recs, std::span<const std::int64_t> user_ids,
                                   std::span<const std::int64_t> item_ids,
                                   std::span<const std::pair<std::string, std::string>> metadata) {
  std::string s;
  for (const auto& [key, value] : metadata) s += "# " + key + "=" + value + "\n";
  s += "# popularity_fallback=";
  bool first = true;
  for (const auto& r : recs) {
    if (!r.popularity_fallback) continue;
    s += (first ? "" : ";") + std::to_string(user_ids[static_cast<std::size_t>(r.user)]);
    first = false;
  }
  s += "\nuser_id,rank,item_id,score\n";
  for (const auto& r : recs) {
    for (std::size_t i = 0; i < r.items.size(); ++i) {
      s += std::to_string(user_ids[static_cast<std::size_t>(r.user)]) + ',' + std::to_string(i + 1) + ',' +
           std::to_string(item_ids[static_cast<std::size_t>(r.items[i].first)]) + ',' +
           text::format_double(r.items[i].second) + '\n';
    }
  }
  return s;
}

}  // namespace taskrag
