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
#include <span>
#include <string>
#include <string_view>

#include "taskrag/encoder.hpp"
#include "taskrag/library.hpp"
#include "taskrag/metrics.hpp"
#include "taskrag/retrieval.hpp"
#include "taskrag/tam.hpp"
#include "taskrag/task_eval.hpp"

namespace taskrag {

inline constexpr const char* kOutDirEnv = "TASKRAG_OUT_DIR";

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Every tunable of a run. Text form is one `key = value` per line; `#` starts
// a comment. Unknown keys and out-of-range values are rejected.
struct RunConfig {
  // paths
  std::filesystem::path interactions;
  std::filesystem::path out_dir = "taskrag_out";
  std::string run_name = "main";  // subdirectory for relevance-model, fine-tune and evaluation artifacts
  std::int64_t granularity = 86400;
  std::size_t split = 1;

  // model
  int dim = kDefaultEmbeddingDim;
  int layers = kDefaultLayers;
  int heads = 4;
  int hidden = 32;
  int struct_layers = 2;
  int ffn_hidden = 64;
  int score_hidden = 64;

  // retrieval
  int hops = kDefaultHops;
  int top_k = kDefaultTopK;
  int top_m = kDefaultTopM;
  int cap = kDefaultSubgraphCap;
  KhopScope khop_scope = KhopScope::history;  // neighborhoods over all history or the latest snapshot
  std::size_t library_max_entries = 0;
  AlphaMode alpha_mode = AlphaMode::softmax;
  double temperature = 1.0;
  double beta_init = 0.0;

  // losses and optimization
  double rho = kDefaultRho;
  double tau = kDefaultTau;
  double lambda = kDefaultLambda;
  double mu = kDefaultRegWeight;
  double gamma = kDefaultMargin;
  double drop_rate = kDefaultDropRate;
  double lr = kDefaultLearningRate;
  OptimizerKind optimizer = OptimizerKind::adam;
  int pretrain_epochs = 100;
  int batch_size = 256;
  int tam_epochs = 200;
  int tam_batch_size = 64;
  int finetune_epochs = 20;
  bool train_tam = false;

  // labeling
  std::size_t queries = 64;
  std::size_t candidates_per_query = 16;
  int n_pos = kDefaultPositives;
  double epsilon = kDefaultEpsilon;
  bool include_positives = false;
  QueryNodes query_nodes = QueryNodes::users;

  // ablations
  bool disable_semantic = false;
  bool disable_structure = false;
  bool disable_retrieval = false;

  std::size_t eval_k = kDefaultCutoff;
  std::uint64_t seed = 0;

  void set(std::string_view key, std::string_view value);
  void validate() const;
  std::string to_text() const;

  static RunConfig parse(std::string_view content);
  static RunConfig load(const std::filesystem::path& path);

  // `key=value` overrides, e.g. from command-line flags.
  void apply_overrides(std::span<const std::string> assignments);

  // out_dir, or the TASKRAG_OUT_DIR environment variable when set.
  std::filesystem::path output_dir() const;
  std::filesystem::path run_dir() const { return output_dir() / run_name; }

  EncoderConfig encoder() const;
  LibraryConfig library() const;
  TaskDatasetConfig labeling() const;
  TamConfig tam() const;
  TamTrainConfig tam_training() const;
  FinetuneConfig finetune() const;

  // "vanilla", "w/o all", "w/o SEM", "w/o STR" or "full".
  std::string variant_label() const;
};

}  // namespace taskrag
