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

#include "taskrag/stages.hpp"

#include <map>
#include <optional>
#include <stdexcept>

#include "json.hpp"
#include "taskrag/encoder.hpp"
#include "taskrag/library.hpp"
#include "taskrag/metrics.hpp"
#include "taskrag/retrieval.hpp"
#include "taskrag/synthetic.hpp"
#include "taskrag/tam.hpp"
#include "taskrag/task_eval.hpp"
#include "taskrag/text.hpp"

namespace taskrag {

namespace fs = std::filesystem;

namespace {

constexpr const char* kGraphKind = "dynamic_graph";
constexpr const char* kFinetuneKind = "finetune_state";

void emit(std::ostream* log, Stage stage, const std::string& fields) {
  if (log) *log << "stage=" << to_string(stage) << ' ' << fields << '\n';
}

// The artifact must exist; if `expected` is non-empty its hash must match.
std::string verified_hash(const fs::path& artifact, std::string_view expected, std::string_view what) {
  if (!fs::exists(artifact)) {
    throw LineageError("missing prerequisite " + std::string(what) + " at " + artifact.string() +
                       (expected.empty() ? std::string() : ", expected sha256 " + std::string(expected)));
  }
  const std::string actual = file_sha256(artifact);
  if (!expected.empty() && actual != expected) {
    throw LineageError(std::string(what) + " at " + artifact.string() + " does not match lineage: expected sha256 " +
                       std::string(expected) + ", found " + actual);
  }
  return actual;
}

const std::string& meta_at(const Checkpoint& ckpt, const std::string& key) {
  auto it = ckpt.meta.find(key);
  if (it == ckpt.meta.end()) throw FormatError(ckpt.kind + " checkpoint: missing metadata '" + key + "'");
  return it->second;
}

// Loaded shared artifacts with their lineage checked pairwise.
struct Upstream {
  DynamicGraph graph;
  std::string graph_hash;
  EmbeddingTable table;
  std::string encoder_hash;
  SubgraphLibrary library;
  std::string library_hash;
  KhopScope library_scope = KhopScope::history;
};

Upstream load_graph(const ArtifactPaths& paths) {
  Upstream up;
  up.graph_hash = verified_hash(paths.graph, "", "graph (run ingest)");
  up.graph = graph_from_checkpoint(read_checkpoint(paths.graph));
  return up;
}

Upstream load_encoder(const ArtifactPaths& paths) {
  Upstream up = load_graph(paths);
  up.encoder_hash = verified_hash(paths.encoder, "", "encoder (run pretrain)");
  const Checkpoint ckpt = read_checkpoint(paths.encoder);
  verified_hash(paths.graph, meta_at(ckpt, "graph"), "graph");
  up.table = EmbeddingTable::from_checkpoint(ckpt);
  return up;
}

Upstream load_library(const ArtifactPaths& paths) {
  Upstream up = load_encoder(paths);
  up.library_hash = verified_hash(paths.library, "", "library (run build-library)");
  const Checkpoint ckpt = read_checkpoint(paths.library);
  up.library = SubgraphLibrary::from_checkpoint(ckpt);
  verified_hash(paths.encoder, up.library.source_hash(), "encoder");
  up.library_scope = parse_khop_scope(meta_at(ckpt, "scope"));
  return up;
}

void require_scope(const Upstream& up, KhopScope wanted) {
  if (up.library_scope != wanted) {
    throw ConfigError("library was built with khop_scope=" + std::string(to_string(up.library_scope)) +
                      " but the run asks for " + std::string(to_string(wanted)));
  }
}

std::string tam_flags(const TamConfig& c) {
  return std::string("disable_semantic=") + (c.disable_semantic ? "true" : "false") +
         " disable_structure=" + (c.disable_structure ? "true" : "false");
}

std::string step_prefix(std::size_t step) { return "step" + std::to_string(step) + "."; }

// Fine-tuned state of each test step, keyed by fine-tune snapshot index.
struct StepStates {
  std::map<std::size_t, FinetuneState> steps;
  bool retrieval = false;
};

StepStates states_from_checkpoint(const Checkpoint& ckpt, const EmbeddingTable& like, const TamConfig& tam_config) {
  StepStates out;
  out.retrieval = meta_at(ckpt, "retrieval") == "true";
  for (auto step_text : text::split(meta_at(ckpt, "steps"), ';')) {
    const auto step = text::parse_number<std::size_t>(step_text, "finetune steps");
    const std::string prefix = step_prefix(step);
    FinetuneState s;
    s.table = EmbeddingTable(like.user_count(), like.item_count(), ckpt.arrays.at(prefix + "embeddings"), like.layers());
    s.beta_param = text::parse_number<double>(meta_at(ckpt, prefix + "beta"), "finetune beta");
    s.tam_config = tam_config;
    for (const auto& e : ckpt.arrays) {
      if (e.name.starts_with(prefix + "tam.")) s.tam.add(e.name.substr(prefix.size() + 4), e.value);
    }
    out.steps.emplace(step, std::move(s));
  }
  return out;
}

void require_test_snapshots(const DynamicGraph& graph) {
  if (graph.snapshots.size() < graph.pretrain_split + 2) {
    throw std::invalid_argument("fine-tuning needs at least two snapshots after the pretraining split (found " +
                                std::to_string(graph.snapshots.size()) + " snapshots, split " +
                                std::to_string(graph.pretrain_split) + ")");
  }
}

StageOutcome finish(Stage stage, const fs::path& artifact, std::ostream* log) {
  StageOutcome out{stage, artifact, file_sha256(artifact)};
  emit(log, stage, "artifact=" + artifact.string() + " sha256=" + out.sha256);
  return out;
}

StageOutcome ingest(const RunConfig& config, const ArtifactPaths& paths, std::ostream* log) {
  if (config.interactions.empty()) throw ConfigError("ingest: no interactions file configured");
  const std::string input_hash = verified_hash(config.interactions, "", "interactions file");
  const DynamicGraph graph =
      build_dynamic(read_interactions(config.interactions), config.granularity, config.split);
  Checkpoint ckpt = graph_to_checkpoint(graph);
  ckpt.meta["input_sha256"] = input_hash;
  write_checkpoint(ckpt, paths.graph);

  std::string users = "compact_id,external_id\n", items = users;
  for (std::size_t i = 0; i < graph.user_ids.size(); ++i) users += std::to_string(i) + ',' + std::to_string(graph.user_ids[i]) + '\n';
  for (std::size_t i = 0; i < graph.item_ids.size(); ++i) items += std::to_string(i) + ',' + std::to_string(graph.item_ids[i]) + '\n';
  write_file(paths.user_ids, users);
  write_file(paths.item_ids, items);

  nlohmann::ordered_json manifest;
  manifest["input"] = config.interactions.filename().string();
  manifest["input_sha256"] = input_hash;
  manifest["granularity"] = graph.granularity;
  manifest["pretrain_split"] = graph.pretrain_split;
  manifest["users"] = graph.user_count();
  manifest["items"] = graph.item_count();
  manifest["graph_sha256"] = file_sha256(paths.graph);
  manifest["user_ids_sha256"] = file_sha256(paths.user_ids);
  manifest["item_ids_sha256"] = file_sha256(paths.item_ids);
  auto snaps = nlohmann::ordered_json::array();
  for (const auto& s : graph.snapshots) snaps.push_back({{"time_index", s.time_index()}, {"edges", s.edge_count()}});
  manifest["snapshots"] = snaps;
  write_file(paths.manifest, manifest.dump(2) + "\n");
  emit(log, Stage::ingest,
       "snapshots=" + std::to_string(graph.snapshots.size()) + " users=" + std::to_string(graph.user_count()) +
           " items=" + std::to_string(graph.item_count()));
  return finish(Stage::ingest, paths.manifest, log);
}

StageOutcome pretrain(const RunConfig& config, const ArtifactPaths& paths, std::ostream* log) {
  const Upstream up = load_graph(paths);
  const PretrainResult result = pretrain_bpr(up.graph, config.encoder());
  Checkpoint ckpt = result.table.to_checkpoint();
  ckpt.meta["graph"] = up.graph_hash;
  write_checkpoint(ckpt, paths.encoder);
  std::string csv = "epoch,L_bpr\n";
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    csv += std::to_string(e) + ',' + text::format_double(result.epoch_loss[e]) + '\n';
  }
  write_file(paths.pretrain_log, csv);
  emit(log, Stage::pretrain, "epochs=" + std::to_string(result.epoch_loss.size()) +
                                 " final_loss=" + text::format_double(result.epoch_loss.back()));
  return finish(Stage::pretrain, paths.encoder, log);
}

StageOutcome build_library_stage(const RunConfig& config, const ArtifactPaths& paths, std::ostream* log) {
  const Upstream up = load_encoder(paths);
  const SubgraphLibrary library = build_library(up.graph.window(up.graph.pretrain_split, config.khop_scope), up.table,
                                                config.library(), up.encoder_hash);
  Checkpoint ckpt = library.to_checkpoint();
  ckpt.meta["graph"] = up.graph_hash;
  ckpt.meta["scope"] = std::string(to_string(config.khop_scope));
  write_checkpoint(ckpt, paths.library);
  emit(log, Stage::build_library, "entries=" + std::to_string(library.size()));
  return finish(Stage::build_library, paths.library, log);
}

StageOutcome label(const RunConfig& config, const ArtifactPaths& paths, std::ostream* log) {
  const Upstream up = load_library(paths);
  require_scope(up, config.khop_scope);
  TaskDataset d = build_task_dataset(up.graph, up.library, up.table, up.encoder_hash, config.labeling());
  d.library_hash = up.library_hash;
  d.write(paths.task_dataset);
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& r : d.rows) ++counts[static_cast<int>(r.label)];
  emit(log, Stage::label,
       "rows=" + std::to_string(d.rows.size()) + " beneficial=" + std::to_string(counts[0]) +
           " irrelevant=" + std::to_string(counts[1]) + " harmful=" + std::to_string(counts[2]) +
           " skipped_queries=" + std::to_string(d.skipped_queries));
  return finish(Stage::label, paths.task_dataset, log);
}

StageOutcome train_tam(const RunConfig& config, const ArtifactPaths& paths, std::ostream* log) {
  const Upstream up = load_library(paths);
  const std::string d_hash = verified_hash(paths.task_dataset, "", "task dataset (run label)");
  const TaskDataset d = TaskDataset::read(paths.task_dataset);
  verified_hash(paths.encoder, d.checkpoint_hash, "encoder");
  verified_hash(paths.library, d.library_hash, "library");

  std::map<NodeId, RowVector<float>> query_keys;
  std::vector<Eigen::Index> rows_kept;
  std::vector<std::size_t> entries;
  std::vector<double> targets;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < d.rows.size(); ++i) {
    const auto entry = up.library.find(d.rows[i].candidate_center);
    if (!entry || d.rows[i].query_center < 0 || d.rows[i].query_center >= up.table.node_count()) {
      ++skipped;
      continue;
    }
    if (!query_keys.count(d.rows[i].query_center)) {
      const Subgraph sg = query_subgraph(up.graph, d.query_horizon, d.rows[i].query_center, config.hops, config.cap,
                                         d.seed, d.scope);
      query_keys.emplace(d.rows[i].query_center, encode_subgraph(up.table, sg));
    }
    entries.push_back(*entry);
    targets.push_back(d.rows[i].shift);
    rows_kept.push_back(static_cast<Eigen::Index>(i));
  }
  if (targets.empty()) throw std::invalid_argument("train-tam: no resolvable rows in the task dataset");
  MatrixXf query(static_cast<Eigen::Index>(targets.size()), up.table.dim());
  MatrixXf candidate(query.rows(), up.table.dim());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    query.row(r) = query_keys.at(d.rows[static_cast<std::size_t>(rows_kept[i])].query_center);
    candidate.row(r) = up.library.keys().row(static_cast<Eigen::Index>(entries[i]));
  }
  const TamConfig tc = config.tam();
  const TamTrainResult result = pretrain_tam(query, candidate, targets, tc, config.tam_training());
  Checkpoint ckpt = tam_to_checkpoint(result.params, tc);
  ckpt.meta["task_dataset"] = d_hash;
  ckpt.meta["encoder"] = up.encoder_hash;
  ckpt.meta["library"] = up.library_hash;
  ckpt.meta["skipped_rows"] = std::to_string(skipped);
  fs::create_directories(paths.tam.parent_path());
  write_checkpoint(ckpt, paths.tam);
  write_file(paths.tam_log, format_tam_log(result.log));
  emit(log, Stage::train_tam, "rows=" + std::to_string(targets.size()) + " skipped_rows=" + std::to_string(skipped) +
                                  " final_loss=" + text::format_double(result.log.back().total) + " " + tam_flags(tc));
  return finish(Stage::train_tam, paths.tam, log);
}

struct LoadedTam {
  ParameterSet<float> params;
  TamConfig config;
  std::string hash;
};

LoadedTam load_tam(const RunConfig& config, const ArtifactPaths& paths, const Upstream& up) {
  LoadedTam t;
  t.hash = verified_hash(paths.tam, "", "relevance model (run train-tam)");
  const Checkpoint ckpt = read_checkpoint(paths.tam);
  verified_hash(paths.encoder, meta_at(ckpt, "encoder"), "encoder");
  verified_hash(paths.library, meta_at(ckpt, "library"), "library");
  verified_hash(paths.task_dataset, meta_at(ckpt, "task_dataset"), "task dataset");
  std::tie(t.params, t.config) = tam_from_checkpoint(ckpt);
  if (t.config.disable_semantic != config.disable_semantic || t.config.disable_structure != config.disable_structure) {
    throw ConfigError("relevance model was trained with " + tam_flags(t.config) + " but the run asks for " +
                      tam_flags(config.tam()));
  }
  if (t.config.dim != up.table.dim()) throw ShapeError("relevance model width differs from the encoder");
  return t;
}

StageOutcome finetune(const RunConfig& config, const ArtifactPaths& paths, std::ostream* log) {
  const FinetuneConfig fc = config.finetune();
  const bool retrieval = fc.fusion.top_m > 0;
  const Upstream up = retrieval ? load_library(paths) : load_encoder(paths);
  require_test_snapshots(up.graph);
  LoadedTam tam;
  if (retrieval) {
    require_scope(up, fc.scope);
    tam = load_tam(config, paths, up);
  }

  FinetuneState state{up.table, tam.params, tam.config, fc.fusion.beta_init};
  Checkpoint out;
  out.kind = kFinetuneKind;
  out.meta["graph"] = up.graph_hash;
  out.meta["encoder"] = up.encoder_hash;
  out.meta["retrieval"] = retrieval ? "true" : "false";
  out.meta["top_k"] = std::to_string(fc.fusion.top_k);
  out.meta["top_m"] = std::to_string(fc.fusion.top_m);
  if (retrieval) {
    out.meta["library"] = up.library_hash;
    out.meta["tam"] = tam.hash;
  }
  std::string steps, csv = "step,epoch,L_bpr,beta\n";
  const std::size_t split = up.graph.pretrain_split;
  for (std::size_t t = split; t + 1 < up.graph.snapshots.size(); ++t) {
    state.table = temporal_forward(state.table, up.graph.snapshots[t - 1]);
    QueryKeys keys;
    if (retrieval) keys = compute_query_keys(up.graph, t + 1, up.library, up.table, fc.hops, fc.cap, fc.seed, fc.scope);
    const auto epochs = finetune_snapshot(state, up.graph.snapshots[t], keys, up.library, fc, derive_seed(fc.seed, "step", t));
    for (const auto& e : epochs) {
      csv += std::to_string(t) + ',' + std::to_string(e.epoch) + ',' + text::format_double(e.bpr) + ',' +
             text::format_double(e.beta) + '\n';
    }
    const std::string prefix = step_prefix(t);
    out.arrays.add(prefix + "embeddings", state.table.embeddings());
    for (const auto& e : state.tam) out.arrays.add(prefix + "tam." + e.name, e.value);
    out.meta[prefix + "beta"] = text::format_double(state.beta_param);
    steps += (steps.empty() ? "" : ";") + std::to_string(t);
    emit(log, Stage::finetune,
         "step=" + std::to_string(t) + " final_bpr=" + (epochs.empty() ? "nan" : text::format_double(epochs.back().bpr)) +
             " beta=" + text::format_double(beta_gate(state.beta_param)));
  }
  out.meta["steps"] = steps;
  fs::create_directories(paths.finetune.parent_path());
  write_checkpoint(out, paths.finetune);
  write_file(paths.finetune_log, csv);
  return finish(Stage::finetune, paths.finetune, log);
}

StageOutcome evaluate(const RunConfig& config, const ArtifactPaths& paths, std::ostream* log) {
  const std::string ft_hash = verified_hash(paths.finetune, "", "fine-tuned state (run finetune)");
  const Checkpoint ft = read_checkpoint(paths.finetune);
  if (ft.kind != kFinetuneKind) throw FormatError("evaluate: " + paths.finetune.string() + " is not a fine-tune state");
  const bool retrieval = meta_at(ft, "retrieval") == "true";
  const Upstream up = retrieval ? load_library(paths) : load_encoder(paths);
  verified_hash(paths.graph, meta_at(ft, "graph"), "graph");
  verified_hash(paths.encoder, meta_at(ft, "encoder"), "encoder");
  TamConfig tam_config;
  if (retrieval) {
    verified_hash(paths.library, meta_at(ft, "library"), "library");
    verified_hash(paths.tam, meta_at(ft, "tam"), "relevance model");
    tam_config = tam_from_checkpoint(read_checkpoint(paths.tam)).second;
  }
  const FinetuneConfig fc = config.finetune();
  const StepStates states = states_from_checkpoint(ft, up.table, tam_config);

  std::map<std::size_t, std::unique_ptr<Recommender>> recommenders;
  std::map<std::size_t, SnapshotGraph> histories;
  const auto recommender_for = [&](std::size_t test_index) -> const Recommender& {
    const std::size_t step = test_index - 1;
    auto it = recommenders.find(step);
    if (it != recommenders.end()) return *it->second;
    const FinetuneState& s = states.steps.at(step);
    std::vector<std::optional<NodeWeights>> retrievals;
    if (retrieval) {
      const QueryKeys keys = compute_query_keys(up.graph, step + 1, up.library, up.table, fc.hops, fc.cap, fc.seed,
                                                 up.library_scope);
      retrievals = user_retrievals(keys, up.library, s.tam, s.tam_config, fc.fusion, up.table.layers());
    }
    const SnapshotGraph& history = histories.emplace(step, up.graph.history(step + 1)).first->second;
    return *recommenders
                .emplace(step, std::make_unique<Recommender>(s.table, up.graph.snapshots[step], history,
                                                             std::move(retrievals), s.beta_param))
                .first->second;
  };

  const std::size_t first_test = up.graph.pretrain_split + 1;
  EvalReport report = evaluate_snapshots(
      up.graph, first_test,
      [&](std::int32_t user, std::size_t snapshot_index, std::size_t k) {
        ItemList items;
        for (const auto& [item, score] : recommender_for(snapshot_index).recommend(user, k).items) items.push_back(item);
        return items;
      },
      config.eval_k);
  report.label = config.variant_label();
  report.seed = config.seed;
  const std::size_t last_step = states.steps.rbegin()->first;
  const double beta = beta_gate(states.steps.rbegin()->second.beta_param);
  report.metadata = {{"finetune", ft_hash}, {"graph", up.graph_hash}, {"encoder", up.encoder_hash},
                     {"K", std::to_string(fc.fusion.top_k)}, {"M", std::to_string(fc.fusion.top_m)},
                     {"beta", retrieval ? text::format_double(beta) : "none"}};
  fs::create_directories(paths.report.parent_path());
  report.write(paths.report);

  // Rankings for every user of the last test snapshot.
  const SnapshotGraph& last = up.graph.snapshots[last_step + 1];
  std::vector<Recommendation> recs;
  for (std::int32_t u = 0; u < last.user_count(); ++u) {
    if (last.degree(last.user_node(u)) > 0) recs.push_back(recommender_for(last_step + 1).recommend(u, config.eval_k));
  }
  std::vector<std::pair<std::string, std::string>> meta = {
      {"seed", std::to_string(config.seed)}, {"snapshot", std::to_string(last.time_index())}};
  meta.insert(meta.end(), report.metadata.begin(), report.metadata.end());
  write_file(paths.recommendations, format_recommendations(recs, up.graph.user_ids, up.graph.item_ids, meta));
  emit(log, Stage::evaluate,
       "label=\"" + report.label + "\" recall@" + std::to_string(report.k) + "=" + text::format_double(report.mean_recall) +
           " ndcg@" + std::to_string(report.k) + "=" + text::format_double(report.mean_ndcg));
  return finish(Stage::evaluate, paths.report, log);
}

}  // namespace

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::ingest: return "ingest";
    case Stage::pretrain: return "pretrain";
    case Stage::build_library: return "build-library";
    case Stage::label: return "label";
    case Stage::train_tam: return "train-tam";
    case Stage::finetune: return "finetune";
    case Stage::evaluate: return "evaluate";
  }
  return "unknown";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : kAllStages) {
    if (to_string(s) == name) return s;
  }
  throw std::invalid_argument("unknown stage '" + std::string(name) + "'");
}

ArtifactPaths ArtifactPaths::of(const RunConfig& config) {
  const fs::path out = config.output_dir(), run = config.run_dir();
  ArtifactPaths p;
  p.manifest = out / "manifest.json";
  p.user_ids = out / "user_ids.csv";
  p.item_ids = out / "item_ids.csv";
  p.graph = out / "graph.ckpt";
  p.encoder = out / "encoder.ckpt";
  p.pretrain_log = out / "pretrain_log.csv";
  p.library = out / "library.ckpt";
  p.task_dataset = out / "d_aware.csv";
  p.tam = run / "tam.ckpt";
  p.tam_log = run / "tam_log.csv";
  p.finetune = run / "finetune.ckpt";
  p.finetune_log = run / "finetune_log.csv";
  p.report = run / "report.txt";
  p.recommendations = run / "recommendations.csv";
  return p;
}

Checkpoint graph_to_checkpoint(const DynamicGraph& graph) {
  Checkpoint ckpt;
  ckpt.kind = kGraphKind;
  ckpt.meta["granularity"] = std::to_string(graph.granularity);
  ckpt.meta["pretrain_split"] = std::to_string(graph.pretrain_split);
  VarintWriter ids;
  ids.put(static_cast<std::int64_t>(graph.user_ids.size()));
  for (auto id : graph.user_ids) ids.put(id);
  ids.put(static_cast<std::int64_t>(graph.item_ids.size()));
  for (auto id : graph.item_ids) ids.put(id);
  VarintWriter snaps;
  snaps.put(static_cast<std::int64_t>(graph.snapshots.size()));
  for (const auto& s : graph.snapshots) {
    snaps.put(s.time_index());
    snaps.put(static_cast<std::int64_t>(s.edge_count()));
    std::int32_t prev_user = 0;
    for (const auto& e : s.edges()) {
      snaps.put(e.user - prev_user);
      snaps.put(e.item);
      prev_user = e.user;
    }
  }
  ckpt.sections = {{"ids", ids.bytes()}, {"snapshots", snaps.bytes()}};
  return ckpt;
}

DynamicGraph graph_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != kGraphKind) throw FormatError("expected a dynamic_graph checkpoint, found '" + ckpt.kind + "'");
  DynamicGraph g;
  g.granularity = text::parse_number<std::int64_t>(meta_at(ckpt, "granularity"), "graph granularity");
  g.pretrain_split = text::parse_number<std::size_t>(meta_at(ckpt, "pretrain_split"), "graph split");
  VarintReader ids(ckpt.section("ids"));
  g.user_ids.resize(static_cast<std::size_t>(ids.get()));
  for (auto& id : g.user_ids) id = ids.get();
  g.item_ids.resize(static_cast<std::size_t>(ids.get()));
  for (auto& id : g.item_ids) id = ids.get();
  VarintReader snaps(ckpt.section("snapshots"));
  const auto count = snaps.get();
  for (std::int64_t s = 0; s < count; ++s) {
    const std::int64_t time_index = snaps.get();
    std::vector<Edge> edges(static_cast<std::size_t>(snaps.get()));
    std::int32_t user = 0;
    for (auto& e : edges) {
      user += static_cast<std::int32_t>(snaps.get());
      e = {user, static_cast<std::int32_t>(snaps.get())};
    }
    g.snapshots.emplace_back(time_index, g.user_count(), g.item_count(), std::move(edges));
  }
  g.validate();
  return g;
}

StageOutcome run_stage(Stage stage, const RunConfig& config, std::ostream* log) {
  config.validate();
  const ArtifactPaths paths = ArtifactPaths::of(config);
  fs::create_directories(config.output_dir());
  switch (stage) {
    case Stage::ingest: return ingest(config, paths, log);
    case Stage::pretrain: return pretrain(config, paths, log);
    case Stage::build_library: return build_library_stage(config, paths, log);
    case Stage::label: return label(config, paths, log);
    case Stage::train_tam: return train_tam(config, paths, log);
    case Stage::finetune: return finetune(config, paths, log);
    case Stage::evaluate: return evaluate(config, paths, log);
  }
  throw std::invalid_argument("unknown stage");
}

std::vector<StageOutcome> run_pipeline(const RunConfig& config, std::ostream* log) {
  std::vector<StageOutcome> out;
  for (Stage s : kAllStages) out.push_back(run_stage(s, config, log));
  return out;
}

}  // namespace taskrag
