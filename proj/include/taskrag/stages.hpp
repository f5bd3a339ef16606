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

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "taskrag/checkpoint.hpp"
#include "taskrag/config.hpp"
#include "taskrag/graph.hpp"

namespace taskrag {

enum class Stage { ingest, pretrain, build_library, label, train_tam, finetune, evaluate };

inline constexpr Stage kAllStages[] = {Stage::ingest,    Stage::pretrain, Stage::build_library, Stage::label,
                                       Stage::train_tam, Stage::finetune, Stage::evaluate};

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view name);

// Where each stage reads and writes. Shared artifacts live in the output
// directory; relevance-model, fine-tune and evaluation artifacts in the run
// subdirectory so ablation runs can share everything upstream.
struct ArtifactPaths {
  std::filesystem::path manifest, user_ids, item_ids, graph;
  std::filesystem::path encoder, pretrain_log, library, task_dataset;
  std::filesystem::path tam, tam_log, finetune, finetune_log, report, recommendations;

  static ArtifactPaths of(const RunConfig& config);
};

Checkpoint graph_to_checkpoint(const DynamicGraph& graph);
DynamicGraph graph_from_checkpoint(const Checkpoint& ckpt);

struct StageOutcome {
  Stage stage;
  std::filesystem::path artifact;
  std::string sha256;
};

// Runs one stage. Prerequisites must exist and match the lineage hashes the
// downstream artifacts recorded; otherwise LineageError names the expected hash.
// One `key=value` log line per event goes to `log` when given.
StageOutcome run_stage(Stage stage, const RunConfig& config, std::ostream* log = nullptr);

// Every stage in order.
std::vector<StageOutcome> run_pipeline(const RunConfig& config, std::ostream* log = nullptr);

}  // namespace taskrag
